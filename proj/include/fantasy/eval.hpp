#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fantasy/dqn.hpp"
#include "fantasy/env.hpp"
#include "fantasy/ppo.hpp"

namespace fantasy {

// ---- simulated user population ----

struct PopulationConfig {
  int population_size = 10000;
  double greedy_fraction = 0.7;  // noisy ranking on feature column 1
  double random_fraction = 0.3;  // uniform 11-subsets
  double rank_noise_sd = 1.0;  // calibrated so informed pickers sit near 0.5
  std::uint64_t seed = 0;
};

inline void validate(const PopulationConfig& cfg) {
  if (cfg.population_size < 100)
    throw std::invalid_argument("population_size must be at least 100");
  if (cfg.greedy_fraction < 0.0 || cfg.random_fraction < 0.0)
    throw std::invalid_argument("population fractions must be non-negative");
  if (std::abs(cfg.greedy_fraction + cfg.random_fraction - 1.0) > 1e-12)
    throw std::invalid_argument("population fractions must sum to 1");
  if (cfg.rank_noise_sd < 0.0)
    throw std::invalid_argument("rank_noise_sd must be non-negative");
}

struct Population {
  std::vector<TeamState> teams;
  std::vector<double> scores;
};

// Deterministic in (round id, seed). Greedy members rank players by the
// 30-day form column with Gaussian noise added to the ranks; the rest pick
// uniformly random 11-subsets.
inline Population simulate_population(const Round& round,
                                      const PopulationConfig& cfg) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, round.round_id));

  std::array<int, kRoundPlayers> order;
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double fa = round.features(a, 1), fb = round.features(b, 1);
    if (fa != fb) return fa > fb;
    return a < b;
  });
  std::array<double, kRoundPlayers> rank{};
  for (int pos = 0; pos < kRoundPlayers; ++pos)
    rank[(std::size_t)order[(std::size_t)pos]] = (double)pos;

  const int n_greedy = (int)std::llround(cfg.greedy_fraction * cfg.population_size);
  Population pop;
  pop.teams.reserve((std::size_t)cfg.population_size);
  pop.scores.reserve((std::size_t)cfg.population_size);
  std::array<std::pair<double, int>, kRoundPlayers> keyed;
  for (int t = 0; t < cfg.population_size; ++t) {
    TeamState team;
    if (t < n_greedy) {
      for (int i = 0; i < kRoundPlayers; ++i)
        keyed[(std::size_t)i] = {rank[(std::size_t)i] + rng.normal(0.0, cfg.rank_noise_sd), i};
      std::sort(keyed.begin(), keyed.end());
      std::array<int, kTeamSize> sel;
      for (int k = 0; k < kTeamSize; ++k) sel[(std::size_t)k] = keyed[(std::size_t)k].second;
      team = make_team(sel);
    } else {
      std::vector<int> pick = rng.sample_indices(kRoundPlayers, kTeamSize);
      std::array<int, kTeamSize> sel;
      std::copy_n(pick.begin(), kTeamSize, sel.begin());
      team = make_team(sel);
    }
    pop.scores.push_back(team_score(team, round));
    pop.teams.push_back(team);
  }
  return pop;
}

// mid-rank convention: fraction strictly below plus half the ties
inline double percentile(double score, const std::vector<double>& population) {
  if (population.empty())
    throw std::invalid_argument("percentile: empty population");
  std::int64_t below = 0, ties = 0;
  for (double s : population) {
    if (s < score)
      ++below;
    else if (s == score)
      ++ties;
  }
  return ((double)below + 0.5 * (double)ties) / (double)population.size();
}

inline double score_ratio(const TeamState& team, const Round& round) {
  double dream = team_score(dream_team(round), round);
  return team_score(team, round) / dream;
}

// ---- benchmark across strategies ----

struct NamedStrategy {
  std::string name;
  std::function<RolloutResult(const Round&, std::uint64_t)> run;
};

inline NamedStrategy random_strategy(int max_steps) {
  return {"random", [max_steps](const Round& round, std::uint64_t seed) {
            Rng arng(derive_seed(seed, "random-actions"));
            return rollout_best_visited(
                round, [&](const Observation&) { return (int)arng.below(kNumActions); },
                max_steps, seed);
          }};
}

inline NamedStrategy ppo_strategy(const ActorCritic& ac, int max_steps) {
  return {"ppo", [&ac, max_steps](const Round& round, std::uint64_t seed) {
            return act(ac, round, max_steps, seed);
          }};
}

inline NamedStrategy dqn_strategy(const DqnPolicy& policy, int max_steps) {
  return {"dqn", [&policy, max_steps](const Round& round, std::uint64_t seed) {
            return act_greedy(policy, round, max_steps, seed);
          }};
}

// wraps a one-shot team builder (the non-RL baselines)
inline NamedStrategy static_strategy(std::string name,
                                     std::function<TeamState(const Round&)> pick) {
  return {std::move(name),
          [pick = std::move(pick)](const Round& round, std::uint64_t) {
            RolloutResult res;
            res.best_team = pick(round);
            res.best_score = team_score(res.best_team, round);
            return res;
          }};
}

struct BenchmarkRow {
  int fold = 0;
  std::string strategy;
  double mean_percentile = 0.0;
  double mean_ratio = 0.0;
  double goal_rate = 0.0;
  double mean_swaps = 0.0;
};

// Per fold and strategy, against a per-round simulated population. All
// strategies see the same seeded start team per round; swaps counts the
// minimal distance from that start to the returned team.
inline std::vector<BenchmarkRow> run_benchmark(
    const std::vector<std::vector<Round>>& fold_rounds,
    const std::vector<NamedStrategy>& strategies,
    const PopulationConfig& pop_cfg, const EnvConfig& env_cfg,
    std::uint64_t seed) {
  validate(pop_cfg);
  validate(env_cfg);
  if (fold_rounds.empty()) throw std::invalid_argument("benchmark: no folds");
  if (strategies.empty()) throw std::invalid_argument("benchmark: no strategies");

  std::vector<BenchmarkRow> rows;
  for (int f = 0; f < (int)fold_rounds.size(); ++f) {
    const std::vector<Round>& rounds = fold_rounds[(std::size_t)f];
    if (rounds.empty())
      throw std::invalid_argument("benchmark: fold " + std::to_string(f) +
                                  " has no validation rounds");
    std::vector<BenchmarkRow> acc((std::size_t)strategies.size());
    for (std::size_t s = 0; s < strategies.size(); ++s)
      acc[s] = BenchmarkRow{f, strategies[s].name, 0.0, 0.0, 0.0, 0.0};

    std::uint64_t fold_seed = derive_seed(seed, "eval-fold", (std::uint64_t)f);
    for (std::size_t r = 0; r < rounds.size(); ++r) {
      const Round& round = rounds[r];
      std::uint64_t seed_r = derive_seed(fold_seed, "eval-round", (std::uint64_t)r);
      Population pop = simulate_population(round, pop_cfg);
      double dream = team_score(dream_team(round), round);
      SwapEnv env(env_cfg);
      env.reset(round, seed_r);
      TeamState start = env.state();

      for (std::size_t s = 0; s < strategies.size(); ++s) {
        RolloutResult res = strategies[s].run(round, seed_r);
        double sc = team_score(res.best_team, round);
        acc[s].mean_percentile += percentile(sc, pop.scores);
        acc[s].mean_ratio += sc / dream;
        acc[s].goal_rate += sc >= env_cfg.alpha * dream ? 1.0 : 0.0;
        acc[s].mean_swaps += (double)minimal_swaps(start, res.best_team.selected);
      }
    }
    for (BenchmarkRow& row : acc) {
      row.mean_percentile /= (double)rounds.size();
      row.mean_ratio /= (double)rounds.size();
      row.goal_rate /= (double)rounds.size();
      row.mean_swaps /= (double)rounds.size();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline constexpr const char* kBenchmarkHeader =
    "fold,strategy,mean_percentile,mean_ratio,goal_rate,mean_swaps";

inline std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::string s = kBenchmarkHeader;
  s += '\n';
  for (const BenchmarkRow& r : rows) {
    s += std::to_string(r.fold);
    s += ',';
    s += r.strategy;
    s += ',';
    s += fmt(r.mean_percentile);
    s += ',';
    s += fmt(r.mean_ratio);
    s += ',';
    s += fmt(r.goal_rate);
    s += ',';
    s += fmt(r.mean_swaps);
    s += '\n';
  }
  return s;
}

inline std::string benchmark_json(const std::vector<BenchmarkRow>& rows,
                                  const PopulationConfig& pop_cfg,
                                  const EnvConfig& env_cfg, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["population"] = {{"population_size", pop_cfg.population_size},
                     {"greedy_fraction", pop_cfg.greedy_fraction},
                     {"random_fraction", pop_cfg.random_fraction},
                     {"rank_noise_sd", pop_cfg.rank_noise_sd},
                     {"seed", pop_cfg.seed}};
  j["env"] = {{"alpha", env_cfg.alpha},
              {"max_steps", env_cfg.max_steps},
              {"step_reward", env_cfg.step_reward},
              {"goal_reward", env_cfg.goal_reward}};
  nlohmann::json out = nlohmann::json::array();
  for (const BenchmarkRow& r : rows)
    out.push_back({{"fold", r.fold},
                   {"strategy", r.strategy},
                   {"mean_percentile", r.mean_percentile},
                   {"mean_ratio", r.mean_ratio},
                   {"goal_rate", r.goal_rate},
                   {"mean_swaps", r.mean_swaps}});
  j["rows"] = std::move(out);
  return j.dump(2);
}

// ---- alpha sweep ----

struct AlphaSweepPoint {
  double alpha = 0.0;
  double mean_ratio = 0.0;  // mean validation score ratio across folds
  double sd_ratio = 0.0;
  double goal_rate = 0.0;  // training episodes that reached the goal
  std::vector<double> fold_ratios;
  std::vector<double> fold_goal_rates;
};

// Trains a fresh agent per (alpha, fold) under the same step budget.
inline std::vector<AlphaSweepPoint> sweep_alpha(
    const std::vector<double>& alphas, std::int64_t budget,
    const std::vector<std::pair<std::vector<Round>, std::vector<Round>>>& folds,
    const PpoConfig& ppo_base, const EnvConfig& env_base, std::uint64_t seed) {
  if (alphas.empty()) throw std::invalid_argument("sweep: no alphas");
  for (double a : alphas)
    if (!(a >= 0.7 && a <= 1.0))
      throw std::invalid_argument("sweep: alpha must be in [0.7, 1.0]");
  if (budget < 1) throw std::invalid_argument("sweep: budget must be positive");
  if (folds.empty()) throw std::invalid_argument("sweep: no folds");

  std::vector<AlphaSweepPoint> points;
  for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
    AlphaSweepPoint pt;
    pt.alpha = alphas[ai];
    double goal_sum = 0.0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      const auto& [train, val] = folds[k];
      if (train.empty() || val.empty())
        throw std::invalid_argument("sweep: fold " + std::to_string(k) +
                                    " is missing rounds");
      PpoConfig cfg = ppo_base;
      cfg.total_timesteps = budget;
      cfg.seed = derive_seed(derive_seed(seed, "sweep-fold", (std::uint64_t)k),
                             "sweep-alpha", (std::uint64_t)ai);
      EnvConfig env_cfg = env_base;
      env_cfg.alpha = alphas[ai];
      PpoTrainState st = ppo_train(train, cfg, env_cfg);

      double ratio = 0.0;
      for (std::size_t r = 0; r < val.size(); ++r) {
        RolloutResult res =
            act(st.ac, val[r], env_cfg.max_steps,
                derive_seed(cfg.seed, "sweep-eval", (std::uint64_t)r));
        ratio += score_ratio(res.best_team, val[r]);
      }
      pt.fold_ratios.push_back(ratio / (double)val.size());

      std::int64_t goals = 0;
      for (const PpoEpisodeRow& row : st.episode_log) goals += row.goal ? 1 : 0;
      pt.fold_goal_rates.push_back(st.episode_log.empty()
                                       ? 0.0
                                       : (double)goals /
                                             (double)st.episode_log.size());
      goal_sum += pt.fold_goal_rates.back();
    }
    double mean = 0.0;
    for (double v : pt.fold_ratios) mean += v;
    mean /= (double)pt.fold_ratios.size();
    double var = 0.0;
    for (double v : pt.fold_ratios) var += (v - mean) * (v - mean);
    var /= (double)pt.fold_ratios.size();
    pt.mean_ratio = mean;
    pt.sd_ratio = std::sqrt(var);
    pt.goal_rate = goal_sum / (double)folds.size();
    points.push_back(std::move(pt));
  }
  return points;
}

inline constexpr const char* kSweepHeader = "alpha,mean_ratio,sd_ratio,goal_rate";

inline std::string sweep_csv(const std::vector<AlphaSweepPoint>& points) {
  std::string s = kSweepHeader;
  s += '\n';
  for (const AlphaSweepPoint& p : points) {
    s += fmt(p.alpha);
    s += ',';
    s += fmt(p.mean_ratio);
    s += ',';
    s += fmt(p.sd_ratio);
    s += ',';
    s += fmt(p.goal_rate);
    s += '\n';
  }
  return s;
}

inline constexpr const char* kSweepFoldHeader = "alpha,fold,ratio,goal_rate";

inline std::string sweep_fold_csv(const std::vector<AlphaSweepPoint>& points) {
  std::string s = kSweepFoldHeader;
  s += '\n';
  for (const AlphaSweepPoint& p : points)
    for (std::size_t k = 0; k < p.fold_ratios.size(); ++k) {
      s += fmt(p.alpha);
      s += ',';
      s += std::to_string(k);
      s += ',';
      s += fmt(p.fold_ratios[k]);
      s += ',';
      s += fmt(p.fold_goal_rates[k]);
      s += '\n';
    }
  return s;
}

inline std::string sweep_json(const std::vector<AlphaSweepPoint>& points,
                              std::int64_t budget, std::uint64_t seed) {
  nlohmann::json j;
  j["budget"] = budget;
  j["seed"] = seed;
  nlohmann::json out = nlohmann::json::array();
  for (const AlphaSweepPoint& p : points)
    out.push_back({{"alpha", p.alpha},
                   {"mean_ratio", p.mean_ratio},
                   {"sd_ratio", p.sd_ratio},
                   {"goal_rate", p.goal_rate},
                   {"fold_ratios", p.fold_ratios},
                   {"fold_goal_rates", p.fold_goal_rates}});
  j["points"] = std::move(out);
  return j.dump(2);
}

// ---- score-ratio histogram ----

inline constexpr const char* kHistogramHeader =
    "bin_left,bin_right,density_before,density_after";

// Equal-width bins over [0, 1]; the last bin includes 1.0 itself.
inline std::string ratio_histogram_csv(const std::vector<double>& before,
                                       const std::vector<double>& after,
                                       int n_bins = 20) {
  if (n_bins < 1) throw std::invalid_argument("histogram: n_bins must be positive");
  if (before.empty() || after.empty())
    throw std::invalid_argument("histogram: empty sample");
  auto bin_of = [n_bins](double x) {
    int b = (int)(std::clamp(x, 0.0, 1.0) * n_bins);
    return std::min(b, n_bins - 1);
  };
  std::vector<std::int64_t> cb((std::size_t)n_bins, 0), ca((std::size_t)n_bins, 0);
  for (double x : before) ++cb[(std::size_t)bin_of(x)];
  for (double x : after) ++ca[(std::size_t)bin_of(x)];

  std::string s = kHistogramHeader;
  s += '\n';
  for (int b = 0; b < n_bins; ++b) {
    double width = 1.0 / n_bins;
    s += fmt(b * width);
    s += ',';
    s += fmt((b + 1) * width);
    s += ',';
    s += fmt((double)cb[(std::size_t)b] / ((double)before.size() * width));
    s += ',';
    s += fmt((double)ca[(std::size_t)b] / ((double)after.size() * width));
    s += '\n';
  }
  return s;
}

}  // namespace fantasy
