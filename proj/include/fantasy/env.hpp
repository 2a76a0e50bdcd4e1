#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

#include "fantasy/domain.hpp"
#include "fantasy/rng.hpp"

namespace fantasy {

constexpr int kObsDim = kRoundPlayers * kNumFeatures + kRoundPlayers + 1;  // 243

using Observation = std::array<double, kObsDim>;

struct EnvConfig {
  double alpha = 0.8;  // goal threshold as a fraction of the dream score
  int max_steps = 30;
  double step_reward = -1.0;
  double goal_reward = 10.0;
};

inline void validate(const EnvConfig& cfg) {
  if (!(cfg.alpha >= 0.7 && cfg.alpha <= 1.0))
    throw std::invalid_argument("alpha must be in [0.7, 1.0]");
  if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
}

// layout: 220 features (player-major) ++ 22 selection mask ++ t/max_steps
inline Observation encode_observation(const TeamState& state, const Round& round,
                                      int t, int max_steps) {
  Observation obs{};
  const double* f = round.features.data();  // row-major
  for (int i = 0; i < kRoundPlayers * kNumFeatures; ++i) obs[(std::size_t)i] = f[i];
  for (int i : state.selected)
    obs[(std::size_t)(kRoundPlayers * kNumFeatures + i)] = 1.0;
  obs[kObsDim - 1] = (double)t / (double)max_steps;
  return obs;
}

struct StepResult {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  // info
  double team_score = 0.0;
  double dream_score = 0.0;
  double goal_threshold = 0.0;
  int swaps_so_far = 0;
};

// Deterministic swap MDP over one round. An episode starts from a uniformly
// random 11-of-22 team; each step exchanges one selected player with one
// reserve. The goal test runs on the post-swap team only.
class SwapEnv {
 public:
  explicit SwapEnv(EnvConfig cfg = {}) : cfg_(cfg) { validate(cfg_); }

  Observation reset(const Round& round, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> pick = rng.sample_indices(kRoundPlayers, kTeamSize);
    std::array<int, kTeamSize> sel{};
    std::copy_n(pick.begin(), kTeamSize, sel.begin());
    return reset(round, make_team(sel));
  }

  // start from a given team (oracle checks and replays)
  Observation reset(const Round& round, const TeamState& start) {
    if (!team_valid(start)) throw std::invalid_argument("reset: invalid team");
    round_ = &round;
    state_ = start;
    TeamState dream = dream_team(round);
    dream_score_ = team_score(dream, round);
    threshold_ = cfg_.alpha * dream_score_;
    t_ = 0;
    done_ = false;
    return encode_observation(state_, round, t_, cfg_.max_steps);
  }

  StepResult step(SwapAction a) {
    if (done_ || round_ == nullptr)
      throw std::runtime_error("episode finished; reset required");
    state_ = apply_swap(state_, a);
    ++t_;
    double score = team_score(state_, *round_);
    StepResult r;
    if (score >= threshold_) {
      r.reward = cfg_.goal_reward;
      done_ = true;
    } else {
      r.reward = cfg_.step_reward;
      done_ = t_ >= cfg_.max_steps;
    }
    r.done = done_;
    r.observation = encode_observation(state_, *round_, t_, cfg_.max_steps);
    r.team_score = score;
    r.dream_score = dream_score_;
    r.goal_threshold = threshold_;
    r.swaps_so_far = t_;
    return r;
  }

  StepResult step(int action) { return step(action_from_index(action)); }

  const EnvConfig& config() const { return cfg_; }
  const TeamState& state() const { return state_; }
  const Round& round() const { return *round_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  double dream_score() const { return dream_score_; }
  double goal_threshold() const { return threshold_; }
  double current_score() const { return team_score(state_, *round_); }

 private:
  EnvConfig cfg_;
  const Round* round_ = nullptr;
  TeamState state_{};
  int t_ = 0;
  bool done_ = true;
  double dream_score_ = 0.0;
  double threshold_ = 0.0;
};

inline int minimal_swaps(const TeamState& start,
                         const std::array<int, kTeamSize>& goal_set) {
  std::array<bool, kRoundPlayers> in_goal{};
  for (int i : goal_set) in_goal[(std::size_t)i] = true;
  int overlap = 0;
  for (int i : start.selected)
    if (in_goal[(std::size_t)i]) ++overlap;
  return kTeamSize - overlap;
}

// One step of the score-greedy oracle: drop the worst selected player, bring
// in the best reserve. Ties resolve to the lowest slot.
inline SwapAction greedy_oracle_action(const TeamState& s, const Round& r) {
  int worst = 0, best = 0;
  for (int j = 1; j < kTeamSize; ++j) {
    if (r.normalized_points[(std::size_t)s.selected[(std::size_t)j]] <
        r.normalized_points[(std::size_t)s.selected[(std::size_t)worst]])
      worst = j;
    if (r.normalized_points[(std::size_t)s.reserved[(std::size_t)j]] >
        r.normalized_points[(std::size_t)s.reserved[(std::size_t)best]])
      best = j;
  }
  return SwapAction{worst, best};
}

struct RolloutResult {
  TeamState best_team{};
  double best_score = 0.0;
  int steps = 0;
  bool reached_goal = false;
  double cumulative_reward = 0.0;
};

// Shared evaluation protocol for every agent: roll a policy from a seeded
// random start and return the best-scoring team visited, the start included.
// alpha = 1.0 keeps the episode running so the policy can improve past the
// training threshold; the step cap still bounds the rollout.
template <typename PolicyFn>  // int policy(const Observation&)
RolloutResult rollout_best_visited(const Round& round, PolicyFn&& policy,
                                   int max_steps, std::uint64_t seed,
                                   double alpha = 1.0) {
  SwapEnv env(EnvConfig{alpha, max_steps, -1.0, 10.0});
  Observation obs = env.reset(round, seed);
  RolloutResult out;
  out.best_team = env.state();
  out.best_score = env.current_score();
  while (!env.done()) {
    int a = policy((const Observation&)obs);
    StepResult sr = env.step(a);
    obs = sr.observation;
    out.cumulative_reward += sr.reward;
    ++out.steps;
    if (sr.team_score > out.best_score) {
      out.best_score = sr.team_score;
      out.best_team = env.state();
    }
    if (sr.done && sr.reward > 0.0) out.reached_goal = true;
  }
  return out;
}

}  // namespace fantasy
