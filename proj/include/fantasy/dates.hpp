#pragma once

#include <compare>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fantasy {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).

struct Date {
  int days = 0;
  auto operator<=>(const Date&) const = default;
};

inline Date operator+(Date d, int n) { return Date{d.days + n}; }
inline Date operator-(Date d, int n) { return Date{d.days - n}; }
inline int operator-(Date a, Date b) { return a.days - b.days; }

inline int days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  int era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = (unsigned)(y - era * 400);
  unsigned doy = (unsigned)((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + (int)doe - 719468;
}

inline void civil_from_days(int z, int& y, int& m, int& d) {
  z += 719468;
  int era = (z >= 0 ? z : z - 146096) / 146097;
  unsigned doe = (unsigned)(z - era * 146097);
  unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = (int)yoe + era * 400;
  unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  unsigned mp = (5 * doy + 2) / 153;
  d = (int)(doy - (153 * mp + 2) / 5 + 1);
  m = (int)(mp < 10 ? mp + 3 : mp - 9);
  y += m <= 2;
}

inline Date make_date(int y, int m, int d) { return Date{days_from_civil(y, m, d)}; }

// strict ISO-8601 YYYY-MM-DD
inline Date parse_date(std::string_view s) {
  auto bad = [&] {
    throw std::runtime_error("invalid date '" + std::string(s) +
                             "' (expected YYYY-MM-DD)");
  };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') bad();
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') bad();
  auto num = [&](int a, int b) {
    int v = 0;
    for (int i = a; i < b; ++i) v = v * 10 + (s[(std::size_t)i] - '0');
    return v;
  };
  int y = num(0, 4), m = num(5, 7), d = num(8, 10);
  if (m < 1 || m > 12 || d < 1) bad();
  Date out = make_date(y, m, d);
  int yy, mm, dd;
  civil_from_days(out.days, yy, mm, dd);
  if (yy != y || mm != m || dd != d) bad();  // e.g. Feb 30
  return out;
}

inline std::string format_date(Date d) {
  int y, m, dd;
  civil_from_days(d.days, y, m, dd);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, dd);
  return buf;
}

}  // namespace fantasy
