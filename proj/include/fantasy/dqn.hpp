#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fantasy/env.hpp"
#include "fantasy/net.hpp"

namespace fantasy {

// ---- observation standardization ----
// Per-feature-column z-scoring fitted on the training rounds only; the
// selection mask and step-clock entries pass through unchanged. Constant
// columns are centered but not rescaled.

struct ObsNorm {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kNumFeatures);
  Eigen::VectorXd sd = Eigen::VectorXd::Ones(kNumFeatures);
};

inline ObsNorm fit_obs_norm(const std::vector<Round>& rounds) {
  ObsNorm norm;
  if (rounds.empty()) return norm;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kNumFeatures);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(kNumFeatures);
  double n = 0.0;
  for (const Round& r : rounds) {
    sum += r.features.colwise().sum().transpose();
    sumsq += r.features.array().square().matrix().colwise().sum().transpose();
    n += (double)kRoundPlayers;
  }
  norm.mean = sum / n;
  for (int c = 0; c < kNumFeatures; ++c) {
    double var = std::max(0.0, sumsq(c) / n - norm.mean(c) * norm.mean(c));
    double sd = std::sqrt(var);
    norm.sd(c) = sd < 1e-8 ? 1.0 : sd;
  }
  return norm;
}

inline void normalize_observation(const ObsNorm& norm, Observation& obs) {
  for (int p = 0; p < kRoundPlayers; ++p)
    for (int c = 0; c < kNumFeatures; ++c) {
      double& x = obs[(std::size_t)(p * kNumFeatures + c)];
      x = (x - norm.mean(c)) / norm.sd(c);
    }
}

inline Observation normalized(const ObsNorm& norm, Observation obs) {
  normalize_observation(norm, obs);
  return obs;
}

// ---- transitions & replay ----

struct Transition {
  Observation state{};
  int action = 0;
  double reward = 0.0;
  Observation next_state{};
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw std::invalid_argument("replay capacity must be positive");
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return pushed_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  const std::vector<Transition>& data() const { return data_; }

  void push(Transition t) {
    if (data_.size() < capacity_)
      data_.push_back(std::move(t));
    else
      data_[(std::size_t)(pushed_ % capacity_)] = std::move(t);
    ++pushed_;
  }

  // uniform without replacement
  std::vector<int> sample(int batch, Rng& rng) const {
    if (batch < 1 || (std::size_t)batch > data_.size())
      throw std::invalid_argument("replay sample: bad batch size");
    return rng.sample_indices((int)data_.size(), batch);
  }

 private:
  std::size_t capacity_;
  std::uint64_t pushed_ = 0;
  std::vector<Transition> data_;
};

// ---- configuration ----

struct DqnConfig {
  std::int64_t total_timesteps = 200000;  // 2,000,000 for the full-scale run
  double learning_rate = 1e-4;
  double gamma = 0.99;
  int batch_size = 128;
  int buffer_capacity = 10000;
  std::int64_t target_update_every = 5000;
  double exploration_fraction = 0.1;
  double initial_epsilon = 1.0;
  double final_epsilon = 0.02;
  double max_grad_norm = 10.0;
  std::uint64_t seed = 0;
};

inline void validate(const DqnConfig& cfg) {
  if (cfg.total_timesteps < 1)
    throw std::invalid_argument("total_timesteps must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0))
    throw std::invalid_argument("gamma must be in (0, 1]");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (cfg.buffer_capacity < cfg.batch_size)
    throw std::invalid_argument("buffer_capacity must be >= batch_size");
  if (cfg.target_update_every < 1)
    throw std::invalid_argument("target_update_every must be positive");
  if (!(cfg.exploration_fraction > 0.0 && cfg.exploration_fraction <= 1.0))
    throw std::invalid_argument("exploration_fraction must be in (0, 1]");
  if (!(cfg.initial_epsilon >= 0.0 && cfg.initial_epsilon <= 1.0) ||
      !(cfg.final_epsilon >= 0.0 && cfg.final_epsilon <= 1.0))
    throw std::invalid_argument("epsilons must be in [0, 1]");
  if (!(cfg.max_grad_norm > 0.0))
    throw std::invalid_argument("max_grad_norm must be positive");
}

struct NetSpec {
  std::vector<int> dims;
  Activation hidden;
  OutputActivation out;
};

inline NetSpec q_network_spec() {
  return {{kObsDim, 256, 256, kNumActions}, Activation::ReLU,
          OutputActivation::Linear};
}

inline DenseNet make_q_network(Rng& rng) {
  NetSpec spec = q_network_spec();
  return make_net(spec.dims, spec.hidden, spec.out, rng);
}

inline double epsilon_at(std::int64_t step, const DqnConfig& cfg) {
  double horizon = cfg.exploration_fraction * (double)cfg.total_timesteps;
  double frac = std::min(1.0, (double)step / horizon);
  return cfg.initial_epsilon + frac * (cfg.final_epsilon - cfg.initial_epsilon);
}

// ---- TD loss ----

struct TdLoss {
  double loss = 0.0;
  Gradients grads;
};

// Batch in matrix form so the loss also runs on nets of any width.
struct TdBatch {
  Eigen::MatrixXd states;       // B x in_dim
  Eigen::MatrixXd next_states;  // B x in_dim
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  std::vector<std::uint8_t> dones;
};

// y = r + (1 - done) * gamma * max_a' Q_target(s', a'); gradients flow through
// the online network only
inline TdLoss td_loss(const TdBatch& batch, const DenseNet& online,
                      const DenseNet& target, double gamma) {
  const int B = (int)batch.states.rows();
  if (B == 0) throw std::invalid_argument("td_loss: empty batch");
  if ((int)batch.actions.size() != B || (int)batch.rewards.size() != B ||
      (int)batch.dones.size() != B || batch.next_states.rows() != B)
    throw std::invalid_argument("td_loss: ragged batch");
  ForwardCache cache;
  Eigen::MatrixXd q = forward(online, batch.states, &cache);
  Eigen::MatrixXd q_next = forward(target, batch.next_states);
  TdLoss out;
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(B, q.cols());
  for (int i = 0; i < B; ++i) {
    int a = batch.actions[(std::size_t)i];
    if (a < 0 || a >= (int)q.cols())
      throw std::invalid_argument("td_loss: action out of range");
    double y = batch.dones[(std::size_t)i]
                   ? batch.rewards(i)
                   : batch.rewards(i) + gamma * q_next.row(i).maxCoeff();
    double diff = q(i, a) - y;
    out.loss += diff * diff / B;
    d_out(i, a) = 2.0 * diff / B;
  }
  out.grads = backward(online, cache, d_out);
  return out;
}

inline TdBatch make_td_batch(const std::vector<const Transition*>& batch) {
  const int B = (int)batch.size();
  TdBatch out;
  out.states.resize(B, kObsDim);
  out.next_states.resize(B, kObsDim);
  out.actions.resize((std::size_t)B);
  out.rewards.resize(B);
  out.dones.resize((std::size_t)B);
  for (int i = 0; i < B; ++i) {
    const Transition& tr = *batch[(std::size_t)i];
    out.states.row(i) =
        Eigen::Map<const Eigen::RowVectorXd>(tr.state.data(), kObsDim);
    out.next_states.row(i) =
        Eigen::Map<const Eigen::RowVectorXd>(tr.next_state.data(), kObsDim);
    out.actions[(std::size_t)i] = tr.action;
    out.rewards(i) = tr.reward;
    out.dones[(std::size_t)i] = tr.done ? 1 : 0;
  }
  return out;
}

inline TdLoss td_loss(const std::vector<const Transition*>& batch,
                      const DenseNet& online, const DenseNet& target,
                      double gamma) {
  return td_loss(make_td_batch(batch), online, target, gamma);
}

inline TdLoss td_loss(const std::vector<Transition>& batch,
                      const DenseNet& online, const DenseNet& target,
                      double gamma) {
  std::vector<const Transition*> ptrs;
  ptrs.reserve(batch.size());
  for (const Transition& t : batch) ptrs.push_back(&t);
  return td_loss(ptrs, online, target, gamma);
}

inline TdLoss td_loss(const ReplayBuffer& buffer, const std::vector<int>& idx,
                      const DenseNet& online, const DenseNet& target,
                      double gamma) {
  std::vector<const Transition*> ptrs;
  ptrs.reserve(idx.size());
  for (int i : idx) ptrs.push_back(&buffer[(std::size_t)i]);
  return td_loss(ptrs, online, target, gamma);
}

// ---- acting ----

inline int argmax_q(const DenseNet& net, const Observation& normalized_obs) {
  Eigen::Map<const Eigen::VectorXd> x(normalized_obs.data(), kObsDim);
  Eigen::VectorXd q = forward_one(net, x);
  Eigen::Index best = 0;
  q.maxCoeff(&best);
  return (int)best;
}

inline int select_action(const DenseNet& net, const Observation& normalized_obs,
                         double epsilon, Rng& rng) {
  if (rng.uniform01() < epsilon) return (int)rng.below(kNumActions);
  return argmax_q(net, normalized_obs);
}

struct DqnPolicy {
  DenseNet net;
  ObsNorm norm;
};

inline RolloutResult act_greedy(const DqnPolicy& policy, const Round& round,
                                int max_steps, std::uint64_t seed,
                                double alpha = 1.0) {
  return rollout_best_visited(
      round,
      [&](const Observation& obs) {
        return argmax_q(policy.net, normalized(policy.norm, obs));
      },
      max_steps, seed, alpha);
}

// ---- training ----

struct DqnEpisodeRow {
  std::int64_t episode = 0;
  int steps = 0;
  double cumulative_reward = 0.0;
  double epsilon = 0.0;
  double loss_mean = 0.0;
};

inline constexpr const char* kDqnLogHeader =
    "episode,steps,cumulative_reward,epsilon,loss_mean";

inline std::string dqn_log_csv(const std::vector<DqnEpisodeRow>& rows) {
  std::string s = kDqnLogHeader;
  s += '\n';
  for (const DqnEpisodeRow& r : rows) {
    s += std::to_string(r.episode);
    s += ',';
    s += std::to_string(r.steps);
    s += ',';
    s += fmt(r.cumulative_reward);
    s += ',';
    s += fmt(r.epsilon);
    s += ',';
    s += fmt(r.loss_mean);
    s += '\n';
  }
  return s;
}

struct DqnTrainState {
  DqnConfig cfg;
  DqnPolicy policy;
  DenseNet target;
  AdamState adam;
  ReplayBuffer buffer{1};
  Rng rng{0};
  std::int64_t step = 0;
  std::int64_t episode = 0;
  std::vector<DqnEpisodeRow> log;
};

inline DqnTrainState dqn_init(const std::vector<Round>& rounds,
                              const DqnConfig& cfg) {
  validate(cfg);
  if (rounds.empty())
    throw std::invalid_argument("dqn: training round set is empty");
  DqnTrainState st;
  st.cfg = cfg;
  Rng net_rng(derive_seed(cfg.seed, "dqn-net"));
  st.policy.net = make_q_network(net_rng);
  st.policy.norm = fit_obs_norm(rounds);
  st.target = st.policy.net;
  st.adam = make_adam(st.policy.net, cfg.learning_rate);
  st.buffer = ReplayBuffer((std::size_t)cfg.buffer_capacity);
  st.rng = Rng(derive_seed(cfg.seed, "dqn-train"));
  return st;
}

using DqnStepHook = std::function<void(const DqnTrainState&)>;

// One episode on a uniformly drawn training round; updates happen every step
// once the buffer can fill a batch, the target refreshes at update-interval
// multiples of the global step counter. Stops mid-episode when the step
// budget runs out.
inline void dqn_run_episode(DqnTrainState& st, const std::vector<Round>& rounds,
                            const EnvConfig& env_cfg,
                            const DqnStepHook& after_step = {}) {
  const DqnConfig& cfg = st.cfg;
  const Round& round = rounds[(std::size_t)st.rng.below(rounds.size())];
  SwapEnv env(env_cfg);
  Observation obs =
      env.reset(round, derive_seed(cfg.seed, "dqn-env", (std::uint64_t)st.episode));
  normalize_observation(st.policy.norm, obs);
  double cumulative = 0.0;
  double loss_sum = 0.0;
  int n_updates = 0;
  int steps = 0;
  while (!env.done() && st.step < cfg.total_timesteps) {
    double eps = epsilon_at(st.step, cfg);
    int action = select_action(st.policy.net, obs, eps, st.rng);
    StepResult sr = env.step(action);
    normalize_observation(st.policy.norm, sr.observation);
    st.buffer.push(Transition{obs, action, sr.reward, sr.observation, sr.done});
    obs = sr.observation;
    cumulative += sr.reward;
    ++steps;
    ++st.step;
    if ((int)st.buffer.size() >= cfg.batch_size) {
      std::vector<int> idx = st.buffer.sample(cfg.batch_size, st.rng);
      TdLoss tl = td_loss(st.buffer, idx, st.policy.net, st.target, cfg.gamma);
      clip_grad_norm(tl.grads, cfg.max_grad_norm);
      adam_step(st.policy.net, tl.grads, st.adam);
      loss_sum += tl.loss;
      ++n_updates;
    }
    if (st.step % cfg.target_update_every == 0)
      copy_params(st.target, st.policy.net);
    if (after_step) after_step(st);
  }
  ++st.episode;
  st.log.push_back({st.episode, steps, cumulative, epsilon_at(st.step, cfg),
                    n_updates > 0 ? loss_sum / n_updates : 0.0});
}

inline void dqn_train(DqnTrainState& st, const std::vector<Round>& rounds,
                      const EnvConfig& env_cfg,
                      const DqnStepHook& after_step = {}) {
  if (rounds.empty())
    throw std::invalid_argument("dqn: training round set is empty");
  validate(env_cfg);
  while (st.step < st.cfg.total_timesteps)
    dqn_run_episode(st, rounds, env_cfg, after_step);
}

inline DqnTrainState dqn_train(const std::vector<Round>& rounds,
                               const DqnConfig& cfg, const EnvConfig& env_cfg) {
  DqnTrainState st = dqn_init(rounds, cfg);
  dqn_train(st, rounds, env_cfg);
  return st;
}

// ---- checkpointing ----
// The replay buffer is not persisted: a resumed run re-enters the warm-up
// phase before updates continue.

inline void obs_norm_to_bin(BinWriter& w, const ObsNorm& norm) {
  for (int c = 0; c < kNumFeatures; ++c) w.num<double>(norm.mean(c));
  for (int c = 0; c < kNumFeatures; ++c) w.num<double>(norm.sd(c));
}

inline ObsNorm obs_norm_from_bin(BinReader& r) {
  ObsNorm norm;
  for (int c = 0; c < kNumFeatures; ++c) norm.mean(c) = r.num<double>();
  for (int c = 0; c < kNumFeatures; ++c) norm.sd(c) = r.num<double>();
  return norm;
}

inline void dqn_config_to_bin(BinWriter& w, const DqnConfig& cfg) {
  w.num<std::int64_t>(cfg.total_timesteps);
  w.num<double>(cfg.learning_rate);
  w.num<double>(cfg.gamma);
  w.num<std::int32_t>(cfg.batch_size);
  w.num<std::int32_t>(cfg.buffer_capacity);
  w.num<std::int64_t>(cfg.target_update_every);
  w.num<double>(cfg.exploration_fraction);
  w.num<double>(cfg.initial_epsilon);
  w.num<double>(cfg.final_epsilon);
  w.num<double>(cfg.max_grad_norm);
  w.num<std::uint64_t>(cfg.seed);
}

inline DqnConfig dqn_config_from_bin(BinReader& r) {
  DqnConfig cfg;
  cfg.total_timesteps = r.num<std::int64_t>();
  cfg.learning_rate = r.num<double>();
  cfg.gamma = r.num<double>();
  cfg.batch_size = (int)r.num<std::int32_t>();
  cfg.buffer_capacity = (int)r.num<std::int32_t>();
  cfg.target_update_every = r.num<std::int64_t>();
  cfg.exploration_fraction = r.num<double>();
  cfg.initial_epsilon = r.num<double>();
  cfg.final_epsilon = r.num<double>();
  cfg.max_grad_norm = r.num<double>();
  cfg.seed = r.num<std::uint64_t>();
  return cfg;
}

inline void save_dqn_checkpoint(const std::string& path,
                                const DqnTrainState& st) {
  BinWriter w;
  w.str("FCKP");
  w.num<std::uint32_t>(1);
  w.pstr("dqn");
  dqn_config_to_bin(w, st.cfg);
  w.num<std::int64_t>(st.step);
  w.num<std::int64_t>(st.episode);
  w.pstr(st.rng.state());
  obs_norm_to_bin(w, st.policy.norm);
  net_to_bin(w, st.policy.net, &st.adam);
  net_to_bin(w, st.target, nullptr);
  write_file(path, w.buf);
}

inline DqnTrainState load_dqn_checkpoint(const std::string& path) {
  std::string data = read_file(path);
  BinReader r(data);
  r.expect("FCKP", "checkpoint");
  std::uint32_t ver = r.num<std::uint32_t>();
  if (ver != 1) throw std::runtime_error("unsupported checkpoint version");
  std::string kind = r.pstr();
  if (kind != "dqn")
    throw std::runtime_error("checkpoint holds a " + kind + " agent, expected dqn");
  DqnTrainState st;
  st.cfg = dqn_config_from_bin(r);
  st.step = r.num<std::int64_t>();
  st.episode = r.num<std::int64_t>();
  std::string rng_state = r.pstr();
  st.rng.set_state(rng_state);
  st.policy.norm = obs_norm_from_bin(r);
  LoadedNet online = net_from_bin(r);
  if (!online.adam) throw std::runtime_error("checkpoint missing optimizer state");
  st.policy.net = std::move(online.net);
  st.adam = std::move(*online.adam);
  st.target = net_from_bin(r).net;
  st.buffer = ReplayBuffer((std::size_t)st.cfg.buffer_capacity);
  return st;
}

}  // namespace fantasy
