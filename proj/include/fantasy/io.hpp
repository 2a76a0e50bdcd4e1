#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <type_traits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fantasy {

// shortest round-trip decimal form
inline std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt(long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("invalid number for " + what + ": '" +
                             std::string(s) + "'");
  return v;
}

inline long parse_long(std::string_view s, const std::string& what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("invalid integer for " + what + ": '" +
                             std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), (std::streamsize)content.size());
  if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- little-endian binary blobs (x86 layout written as-is) ----

struct BinWriter {
  std::string buf;

  void raw(const void* p, std::size_t n) {
    buf.append((const char*)p, n);
  }
  template <typename T>
  void num(T v) {
    static_assert(std::is_arithmetic_v<T>);
    raw(&v, sizeof(T));
  }
  void str(std::string_view s) { raw(s.data(), s.size()); }
  // length-prefixed string
  void pstr(std::string_view s) {
    num<std::uint32_t>((std::uint32_t)s.size());
    raw(s.data(), s.size());
  }
};

struct BinReader {
  const char* p;
  const char* end;

  explicit BinReader(std::string_view data)
      : p(data.data()), end(data.data() + data.size()) {}

  void raw(void* out, std::size_t n) {
    if ((std::size_t)(end - p) < n)
      throw std::runtime_error("truncated binary file");
    std::memcpy(out, p, n);
    p += n;
  }
  template <typename T>
  T num() {
    T v{};
    raw(&v, sizeof(T));
    return v;
  }
  std::string pstr() {
    std::uint32_t n = num<std::uint32_t>();
    if ((std::size_t)(end - p) < n)
      throw std::runtime_error("truncated binary file");
    std::string s((std::size_t)n, '\0');
    raw(s.data(), s.size());
    return s;
  }
  void expect(std::string_view s, const char* what) {
    std::string got(s.size(), '\0');
    raw(got.data(), got.size());
    if (got != s)
      throw std::runtime_error(std::string("bad ") + what + " marker");
  }
  bool at_end() const { return p == end; }
};

// splits file content into lines, tolerating a trailing newline and CRLF
inline std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t pos = content.find('\n', start);
    std::string_view line = pos == std::string_view::npos
                                ? content.substr(start)
                                : content.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return lines;
}

}  // namespace fantasy
