#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fantasy/domain.hpp"
#include "fantasy/io.hpp"
#include "fantasy/rng.hpp"

namespace fantasy {

constexpr int kFeatureWindowDays = 90;
constexpr int kShortWindowDays = 30;
constexpr double kEwmHalfLifeDays = 30.0;

// ---- history store ----

struct RoundGroup {
  RoundId round_id;
  Date date;
  std::vector<int> rec;  // record indices, ascending player id
};

struct HistoryStore {
  std::vector<PlayerRoundRecord> records;  // ascending (date, round, player)
  std::unordered_map<PlayerId, std::vector<int>> by_player;  // date order
  std::vector<RoundGroup> rounds;                            // date order

  bool operator==(const HistoryStore& o) const { return records == o.records; }
};

// Sorts, validates, computes per-round dream flags and lookup indexes.
inline HistoryStore make_store(std::vector<PlayerRoundRecord> recs) {
  std::sort(recs.begin(), recs.end(),
            [](const PlayerRoundRecord& a, const PlayerRoundRecord& b) {
              if (a.date != b.date) return a.date < b.date;
              if (a.round != b.round) return a.round < b.round;
              return a.player < b.player;
            });
  HistoryStore store;
  store.records = std::move(recs);

  std::unordered_set<std::string> seen;
  std::unordered_map<RoundId, int> round_pos;
  seen.reserve(store.records.size());
  for (int i = 0; i < (int)store.records.size(); ++i) {
    const auto& r = store.records[(std::size_t)i];
    if (!std::isfinite(r.raw_points))
      throw std::runtime_error("raw_points not finite for player " + r.player +
                               " round " + r.round);
    if (r.selection_pct < 0.0 || r.selection_pct > 1.0)
      throw std::runtime_error("selection_pct out of [0,1] for player " +
                               r.player + " round " + r.round);
    if (!seen.insert(r.player + "|" + r.round).second)
      throw std::runtime_error("duplicate record for player " + r.player +
                               " round " + r.round);
    store.by_player[r.player].push_back(i);
    auto it = round_pos.find(r.round);
    if (it == round_pos.end()) {
      round_pos.emplace(r.round, (int)store.rounds.size());
      store.rounds.push_back(RoundGroup{r.round, r.date, {i}});
    } else {
      RoundGroup& g = store.rounds[(std::size_t)it->second];
      if (g.date != r.date)
        throw std::runtime_error("round " + r.round + " has inconsistent dates");
      g.rec.push_back(i);
    }
  }
  std::sort(store.rounds.begin(), store.rounds.end(),
            [](const RoundGroup& a, const RoundGroup& b) {
              if (a.date != b.date) return a.date < b.date;
              return a.round_id < b.round_id;
            });

  // dream flag: top 11 by raw points within the round, ties to lower player id
  for (const RoundGroup& g : store.rounds) {
    std::vector<int> order = g.rec;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double pa = store.records[(std::size_t)a].raw_points;
      double pb = store.records[(std::size_t)b].raw_points;
      if (pa != pb) return pa > pb;
      return store.records[(std::size_t)a].player <
             store.records[(std::size_t)b].player;
    });
    int take = std::min<int>(kTeamSize, (int)order.size());
    for (int j = 0; j < take; ++j)
      store.records[(std::size_t)order[(std::size_t)j]].in_dream = true;
  }
  return store;
}

// ---- synthetic generator ----

struct GeneratorConfig {
  int n_players = 66;
  int n_rounds = 200;
  std::uint64_t seed = 0;
  double skill_spread = 15.0;      // sd of latent skill around the base level
  double form_persistence = 0.7;   // AR(1) coefficient
  double noise_scale = 8.0;        // stationary form sd and match noise sd
};

constexpr double kSkillBase = 35.0;

inline void validate(const GeneratorConfig& cfg) {
  if (cfg.n_players < 2 * kRoundPlayers)
    throw std::invalid_argument("n_players must be at least 44 to rotate disjoint squads");
  if (cfg.n_players > 9999) throw std::invalid_argument("n_players too large");
  if (cfg.n_rounds < 1 || cfg.n_rounds > 99999)
    throw std::invalid_argument("n_rounds out of range");
  if (!(cfg.skill_spread > 0.0))
    throw std::invalid_argument("skill_spread must be positive");
  if (!(cfg.form_persistence >= 0.0 && cfg.form_persistence < 1.0))
    throw std::invalid_argument("form_persistence must be in [0,1)");
  if (!(cfg.noise_scale >= 0.0))
    throw std::invalid_argument("noise_scale must be nonnegative");
}

inline PlayerId player_name(int i) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "P%04d", i);
  return buf;
}

inline RoundId round_name(int k) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "R%05d", k + 1);
  return buf;
}

struct GeneratedHistory {
  HistoryStore store;
  std::vector<double> skill;  // latent skill per player ordinal
};

inline GeneratedHistory generate_history_detail(const GeneratorConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const int P = cfg.n_players;

  std::vector<double> skill((std::size_t)P);
  for (auto& s : skill) s = rng.normal(kSkillBase, cfg.skill_spread);
  // start form at its stationary distribution
  std::vector<double> form((std::size_t)P);
  for (auto& f : form) f = rng.normal(0.0, cfg.noise_scale);
  const double rho = cfg.form_persistence;
  const double innov_sd = cfg.noise_scale * std::sqrt(1.0 - rho * rho);

  // per-player past (date, points), appended in date order
  std::vector<std::vector<std::pair<Date, double>>> past((std::size_t)P);

  std::vector<PlayerRoundRecord> recs;
  recs.reserve((std::size_t)cfg.n_rounds * kRoundPlayers);
  Date date = make_date(2021, 1, 1);
  for (int k = 0; k < cfg.n_rounds; ++k) {
    if (k > 0) date = date + 1 + (int)rng.below(3);
    std::vector<int> part = rng.sample_indices(P, kRoundPlayers);
    std::sort(part.begin(), part.end());

    for (int i = 0; i < P; ++i)
      form[(std::size_t)i] = rho * form[(std::size_t)i] + rng.normal(0.0, innov_sd);

    std::array<double, kRoundPlayers> raw{};
    for (int j = 0; j < kRoundPlayers; ++j) {
      int p = part[(std::size_t)j];
      raw[(std::size_t)j] =
          skill[(std::size_t)p] + form[(std::size_t)p] + rng.normal(0.0, cfg.noise_scale);
    }

    // selection pct: softmax of trailing-90-day mean points, half mixed with uniform
    std::array<double, kRoundPlayers> mean{};
    for (int j = 0; j < kRoundPlayers; ++j) {
      const auto& h = past[(std::size_t)part[(std::size_t)j]];
      double sum = 0.0;
      int n = 0;
      for (auto it = h.rbegin(); it != h.rend() && it->first.days >= date.days - kFeatureWindowDays; ++it) {
        sum += it->second;
        ++n;
      }
      mean[(std::size_t)j] = n ? sum / n : 0.0;
    }
    double mx = *std::max_element(mean.begin(), mean.end());
    std::array<double, kRoundPlayers> sel{};
    double z = 0.0;
    for (int j = 0; j < kRoundPlayers; ++j) {
      sel[(std::size_t)j] = std::exp(mean[(std::size_t)j] - mx);
      z += sel[(std::size_t)j];
    }
    for (int j = 0; j < kRoundPlayers; ++j)
      sel[(std::size_t)j] = 0.5 * sel[(std::size_t)j] / z + 0.5 / kRoundPlayers;

    RoundId rid = round_name(k);
    for (int j = 0; j < kRoundPlayers; ++j) {
      int p = part[(std::size_t)j];
      recs.push_back(PlayerRoundRecord{player_name(p), rid, date,
                                       raw[(std::size_t)j], sel[(std::size_t)j]});
      past[(std::size_t)p].emplace_back(date, raw[(std::size_t)j]);
    }
  }
  return GeneratedHistory{make_store(std::move(recs)), std::move(skill)};
}

inline HistoryStore generate_history(const GeneratorConfig& cfg) {
  return generate_history_detail(cfg).store;
}

// ---- CSV ----

inline constexpr const char* kHistoryHeader =
    "player_id,round_id,date,raw_points,selection_pct";

inline std::string history_csv(const HistoryStore& store) {
  std::string out = kHistoryHeader;
  out += '\n';
  for (const auto& r : store.records) {
    out += r.player;
    out += ',';
    out += r.round;
    out += ',';
    out += format_date(r.date);
    out += ',';
    out += fmt(r.raw_points);
    out += ',';
    out += fmt(r.selection_pct);
    out += '\n';
  }
  return out;
}

inline void write_history_csv(const HistoryStore& store, const std::string& path) {
  write_file(path, history_csv(store));
}

inline HistoryStore ingest_csv(const std::string& path) {
  std::string content = read_file(path);
  auto lines = split_lines(content);
  if (lines.empty() || lines[0] != kHistoryHeader)
    throw std::runtime_error(path + ":1: expected header '" +
                             std::string(kHistoryHeader) + "'");
  std::vector<PlayerRoundRecord> recs;
  recs.reserve(lines.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto line = lines[li];
    if (line.empty()) continue;
    std::string where = path + ":" + std::to_string(li + 1);
    auto f = split(line, ',');
    if (f.size() != 5)
      throw std::runtime_error(where + ": expected 5 fields, got " +
                               std::to_string(f.size()));
    try {
      PlayerRoundRecord r;
      r.player = std::string(f[0]);
      r.round = std::string(f[1]);
      if (r.player.empty()) throw std::runtime_error("empty player_id");
      if (r.round.empty()) throw std::runtime_error("empty round_id");
      r.date = parse_date(f[2]);
      r.raw_points = parse_double(f[3], "raw_points");
      if (!std::isfinite(r.raw_points))
        throw std::runtime_error("raw_points not finite");
      r.selection_pct = parse_double(f[4], "selection_pct");
      if (r.selection_pct < 0.0 || r.selection_pct > 1.0)
        throw std::runtime_error("selection_pct out of [0,1]");
      recs.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return make_store(std::move(recs));
}

inline std::string manifest_csv(const HistoryStore& store) {
  std::string out = "round_id,date";
  for (int j = 1; j <= kRoundPlayers; ++j) out += ",player_" + std::to_string(j);
  out += '\n';
  for (const RoundGroup& g : store.rounds) {
    out += g.round_id;
    out += ',';
    out += format_date(g.date);
    for (int i : g.rec) {
      out += ',';
      out += store.records[(std::size_t)i].player;
    }
    out += '\n';
  }
  return out;
}

inline void write_manifest_csv(const HistoryStore& store, const std::string& path) {
  write_file(path, manifest_csv(store));
}

// ---- features ----

inline std::array<double, kRoundPlayers> normalize_round(
    const std::array<double, kRoundPlayers>& raw) {
  double lo = *std::min_element(raw.begin(), raw.end());
  double hi = *std::max_element(raw.begin(), raw.end());
  std::array<double, kRoundPlayers> out{};
  if (hi == lo) {
    out.fill(0.5);
    return out;
  }
  for (int i = 0; i < kRoundPlayers; ++i)
    out[(std::size_t)i] = (raw[(std::size_t)i] - lo) / (hi - lo);
  return out;
}

// 22x10 block from the trailing window [as_of-90, as_of); rows in the order
// of `players`; all-zero row for players with no window history.
inline FeatureMatrix build_features(const HistoryStore& store,
                                    const std::array<PlayerId, kRoundPlayers>& players,
                                    Date as_of) {
  FeatureMatrix fm = FeatureMatrix::Zero();
  for (int i = 0; i < kRoundPlayers; ++i) {
    auto it = store.by_player.find(players[(std::size_t)i]);
    if (it == store.by_player.end()) continue;
    double sum = 0.0, sumsq = 0.0, sum30 = 0.0;
    int n = 0, n30 = 0;
    double wsum = 0.0, wxsum = 0.0;
    double mx = 0.0, mn = 0.0, last = 0.0;
    int dream = 0;
    Date last_date{};
    for (int ri : it->second) {
      const auto& rec = store.records[(std::size_t)ri];
      if (rec.date >= as_of || rec.date.days < as_of.days - kFeatureWindowDays)
        continue;
      double x = rec.raw_points;
      if (n == 0) {
        mx = mn = x;
      } else {
        mx = std::max(mx, x);
        mn = std::min(mn, x);
      }
      sum += x;
      sumsq += x * x;
      ++n;
      if (rec.date.days >= as_of.days - kShortWindowDays) {
        sum30 += x;
        ++n30;
      }
      double w = std::pow(0.5, (as_of - rec.date) / kEwmHalfLifeDays);
      wsum += w;
      wxsum += w * x;
      if (rec.in_dream) ++dream;
      last = x;  // by_player is date-sorted
      last_date = rec.date;
    }
    if (n == 0) continue;
    double mean = sum / n;
    double var = std::max(0.0, sumsq / n - mean * mean);
    fm(i, 0) = mean;
    fm(i, 1) = n30 ? sum30 / n30 : 0.0;
    fm(i, 2) = std::sqrt(var);
    fm(i, 3) = (double)n;
    fm(i, 4) = last;
    fm(i, 5) = wxsum / wsum;
    fm(i, 6) = mx;
    fm(i, 7) = mn;
    fm(i, 8) = (double)dream / n;
    fm(i, 9) = std::min(as_of - last_date, kFeatureWindowDays) /
               (double)kFeatureWindowDays;
  }
  return fm;
}

inline Round build_round(const HistoryStore& store, const RoundGroup& g) {
  if ((int)g.rec.size() != kRoundPlayers)
    throw std::runtime_error("round " + g.round_id + ": expected 22 players, got " +
                             std::to_string(g.rec.size()));
  Round r;
  r.round_id = g.round_id;
  r.date = g.date;
  for (int j = 0; j < kRoundPlayers; ++j) {
    const auto& rec = store.records[(std::size_t)g.rec[(std::size_t)j]];
    r.players[(std::size_t)j] = rec.player;
    r.raw_points[(std::size_t)j] = rec.raw_points;
    r.selection_pct[(std::size_t)j] = rec.selection_pct;
  }
  r.normalized_points = normalize_round(r.raw_points);
  r.features = build_features(store, r.players, r.date);
  return r;
}

inline std::vector<Round> build_all_rounds(const HistoryStore& store) {
  std::vector<Round> out;
  out.reserve(store.rounds.size());
  for (const auto& g : store.rounds) out.push_back(build_round(store, g));
  return out;
}

// ---- temporal cross-validation ----

struct CvFold {
  std::vector<RoundId> train_rounds;
  std::vector<RoundId> validation_rounds;
  int gap_days = 0;
};

// Expanding-window folds over date-sorted rounds: the timeline is cut into
// n_folds+1 near-equal segments; fold k trains on segments 0..k and
// validates on segment k+1, with train rounds inside the gap dropped.
inline std::vector<CvFold> temporal_cv_split(
    const std::vector<std::pair<RoundId, Date>>& rounds, int n_folds,
    int gap_days) {
  if (n_folds < 2) throw std::invalid_argument("n_folds must be at least 2");
  if (gap_days < 0) throw std::invalid_argument("gap_days must be nonnegative");
  const int n = (int)rounds.size();
  const int segs = n_folds + 1;
  if (n < segs)
    throw std::runtime_error("too few rounds for " + std::to_string(n_folds) +
                             " folds: need at least " + std::to_string(segs) +
                             ", got " + std::to_string(n));
  for (int i = 1; i < n; ++i)
    if (rounds[(std::size_t)i].second < rounds[(std::size_t)(i - 1)].second)
      throw std::invalid_argument("rounds must be date-sorted");

  std::vector<int> bounds(segs + 1, 0);  // segment s = [bounds[s], bounds[s+1])
  int base = n / segs, rem = n % segs;
  for (int s = 0; s < segs; ++s)
    bounds[(std::size_t)(s + 1)] = bounds[(std::size_t)s] + base + (s < rem ? 1 : 0);

  std::vector<CvFold> folds;
  for (int k = 0; k < n_folds; ++k) {
    CvFold f;
    f.gap_days = gap_days;
    int val_begin = bounds[(std::size_t)(k + 1)];
    int val_end = bounds[(std::size_t)(k + 2)];
    Date min_val = rounds[(std::size_t)val_begin].second;
    for (int i = 0; i < val_begin; ++i)
      if (rounds[(std::size_t)i].second.days + gap_days < min_val.days)
        f.train_rounds.push_back(rounds[(std::size_t)i].first);
    for (int i = val_begin; i < val_end; ++i)
      f.validation_rounds.push_back(rounds[(std::size_t)i].first);
    if (f.train_rounds.empty())
      throw std::runtime_error("fold " + std::to_string(k) +
                               " has no training rounds after applying the gap");
    folds.push_back(std::move(f));
  }
  return folds;
}

inline std::vector<CvFold> temporal_cv_split(const HistoryStore& store,
                                             int n_folds, int gap_days) {
  std::vector<std::pair<RoundId, Date>> rounds;
  rounds.reserve(store.rounds.size());
  for (const auto& g : store.rounds) rounds.emplace_back(g.round_id, g.date);
  return temporal_cv_split(rounds, n_folds, gap_days);
}

}  // namespace fantasy
