#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fantasy/dqn.hpp"
#include "fantasy/env.hpp"
#include "fantasy/net.hpp"

namespace fantasy {

// ---- configuration ----

struct PpoConfig {
  std::int64_t total_timesteps = 200000;  // 2,000,000 for the full-scale run
  double learning_rate = 1e-4;
  double gamma = 0.99;
  int batch_size = 128;
  int n_envs = 8;
  int n_epochs = 10;
  double clip_range = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  double gae_lambda = 0.95;
  int rollout_length = 256;
  double max_grad_norm = 0.5;
  std::uint64_t seed = 0;
};

inline void validate(const PpoConfig& cfg) {
  if (cfg.total_timesteps < 1)
    throw std::invalid_argument("total_timesteps must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0))
    throw std::invalid_argument("gamma must be in (0, 1]");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (cfg.n_envs < 1) throw std::invalid_argument("n_envs must be >= 1");
  if (cfg.n_epochs < 1) throw std::invalid_argument("n_epochs must be positive");
  if (!(cfg.clip_range > 0.0))
    throw std::invalid_argument("clip_range must be positive");
  if (cfg.vf_coef < 0.0 || cfg.ent_coef < 0.0)
    throw std::invalid_argument("loss coefficients must be non-negative");
  if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda <= 1.0))
    throw std::invalid_argument("gae_lambda must be in [0, 1]");
  if (cfg.rollout_length < 1)
    throw std::invalid_argument("rollout_length must be positive");
  if ((cfg.n_envs * cfg.rollout_length) % cfg.batch_size != 0)
    throw std::invalid_argument("batch_size must divide n_envs * rollout_length");
  if (!(cfg.max_grad_norm > 0.0))
    throw std::invalid_argument("max_grad_norm must be positive");
}

// ---- actor-critic ----

struct ActorCriticSpec {
  NetSpec trunk;
  NetSpec policy;
  NetSpec value;
};

inline ActorCriticSpec actor_critic_spec() {
  return {{{kObsDim, 256, 512, 1024}, Activation::ReLU, OutputActivation::ReLU},
          {{1024, 512, 256, kNumActions}, Activation::ReLU, OutputActivation::Softmax},
          {{1024, 1}, Activation::ReLU, OutputActivation::Linear}};
}

struct ActorCritic {
  DenseNet trunk;
  DenseNet policy;
  DenseNet value;
  ObsNorm norm;
};

inline ActorCritic make_actor_critic(Rng& rng) {
  ActorCriticSpec spec = actor_critic_spec();
  ActorCritic ac;
  ac.trunk = make_net(spec.trunk.dims, spec.trunk.hidden, spec.trunk.out, rng);
  ac.policy = make_net(spec.policy.dims, spec.policy.hidden, spec.policy.out, rng);
  ac.value = make_net(spec.value.dims, spec.value.hidden, spec.value.out, rng);
  return ac;
}

// policy distribution over actions for a raw environment observation
inline Eigen::VectorXd action_probs(const ActorCritic& ac, const Observation& obs) {
  Observation o = normalized(ac.norm, obs);
  Eigen::Map<const Eigen::VectorXd> x(o.data(), kObsDim);
  Eigen::VectorXd h = forward_one(ac.trunk, x);
  return forward_one(ac.policy, h);
}

inline double state_value(const ActorCritic& ac, const Observation& obs) {
  Observation o = normalized(ac.norm, obs);
  Eigen::Map<const Eigen::VectorXd> x(o.data(), kObsDim);
  Eigen::VectorXd h = forward_one(ac.trunk, x);
  return forward_one(ac.value, h)(0);
}

inline int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return (int)i;
  }
  return (int)probs.size() - 1;
}

// ---- rollout storage ----

struct RolloutBuffer {
  int n_envs = 0;
  int length = 0;                 // steps per env
  Eigen::MatrixXd obs;            // (length * n_envs) x kObsDim, index t * n_envs + e
  std::vector<int> actions;
  Eigen::VectorXd logp;
  Eigen::VectorXd rewards;
  Eigen::VectorXd values;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXd last_values;    // bootstrap value per env, after the final step
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  int size() const { return n_envs * length; }
};

// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
// gae_t   = delta_t + gamma * lambda * (1 - done_t) * gae_{t+1}
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const int T = buf.length, n = buf.n_envs;
  buf.advantages.resize(buf.size());
  buf.returns.resize(buf.size());
  for (int e = 0; e < n; ++e) {
    double gae = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      int i = t * n + e;
      double next_v = t == T - 1 ? buf.last_values(e) : buf.values((t + 1) * n + e);
      double nonterminal = buf.dones[(std::size_t)i] ? 0.0 : 1.0;
      double delta = buf.rewards(i) + gamma * next_v * nonterminal - buf.values(i);
      gae = delta + gamma * lambda * nonterminal * gae;
      buf.advantages(i) = gae;
      buf.returns(i) = gae + buf.values(i);
    }
  }
  if (!buf.advantages.allFinite())
    throw std::runtime_error("gae produced non-finite advantages");
}

// ---- clipped surrogate loss ----

struct PpoLoss {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  Gradients g_trunk, g_policy, g_value;
};

// L = -mean(min(ratio * A, clip(ratio) * A)) + vf_coef * mse(V, ret)
//     - ent_coef * mean(H); differentiated at the policy-head logits
inline PpoLoss ppo_loss(const DenseNet& trunk, const DenseNet& policy,
                        const DenseNet& value, const Eigen::MatrixXd& obs,
                        const std::vector<int>& actions,
                        const Eigen::VectorXd& logp_old,
                        const Eigen::VectorXd& advantages,
                        const Eigen::VectorXd& returns, double clip_range,
                        double vf_coef, double ent_coef) {
  const int N = (int)obs.rows();
  if (N == 0) throw std::invalid_argument("ppo_loss: empty batch");
  if ((int)actions.size() != N || logp_old.size() != N ||
      advantages.size() != N || returns.size() != N)
    throw std::invalid_argument("ppo_loss: ragged batch");

  ForwardCache tc, pc, vc;
  Eigen::MatrixXd h = forward(trunk, obs, &tc);
  forward(policy, h, &pc);
  Eigen::VectorXd v = forward(value, h, &vc).col(0);
  const Eigen::MatrixXd& logits = pc.pre.back();

  // row-wise log-softmax
  Eigen::VectorXd rowmax = logits.rowwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.colwise() - rowmax;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Eigen::MatrixXd logp_all = shifted.colwise() - lse;
  Eigen::MatrixXd p = logp_all.array().exp().matrix();

  Eigen::VectorXd entropy_row = -(p.array() * logp_all.array()).rowwise().sum().matrix();

  PpoLoss out;
  Eigen::MatrixXd d_logits =
      (ent_coef / N) * (p.array() * (logp_all.array().colwise() + entropy_row.array())).matrix();
  Eigen::MatrixXd d_v = Eigen::MatrixXd::Zero(N, 1);
  for (int i = 0; i < N; ++i) {
    int a = actions[(std::size_t)i];
    if (a < 0 || a >= (int)p.cols())
      throw std::invalid_argument("ppo_loss: action out of range");
    double logp_new = logp_all(i, a);
    double ratio = std::exp(logp_new - logp_old(i));
    double adv = advantages(i);
    double clipped = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
    double s1 = ratio * adv;
    double s2 = clipped * adv;
    out.policy_loss -= std::min(s1, s2) / N;
    if (std::abs(ratio - 1.0) > clip_range) out.clip_fraction += 1.0 / N;
    // gradient flows through the unclipped branch only when it attains the min
    if (s1 <= s2) {
      double c = -(adv * ratio) / N;
      d_logits.row(i) -= c * p.row(i);
      d_logits(i, a) += c;
    }
    double verr = v(i) - returns(i);
    out.value_loss += verr * verr / N;
    d_v(i, 0) = vf_coef * 2.0 * verr / N;
  }
  out.entropy = entropy_row.mean();
  out.total = out.policy_loss + vf_coef * out.value_loss - ent_coef * out.entropy;

  Eigen::MatrixXd dh_policy, dh_value;
  out.g_policy = backward_logits(policy, pc, d_logits, &dh_policy);
  out.g_value = backward(value, vc, d_v, &dh_value);
  out.g_trunk = backward(trunk, tc, dh_policy + dh_value);
  return out;
}

// ---- training state ----

struct PpoUpdateRow {
  std::int64_t update = 0;
  std::int64_t timesteps = 0;
  std::int64_t episodes = 0;
  double ep_reward_mean = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct PpoEpisodeRow {
  std::int64_t episode = 0;
  int steps = 0;
  double cumulative_reward = 0.0;
  bool goal = false;
};

inline constexpr const char* kPpoUpdateLogHeader =
    "update,timesteps,episodes,ep_reward_mean,policy_loss,value_loss,entropy,clip_fraction";
inline constexpr const char* kPpoEpisodeLogHeader =
    "episode,steps,cumulative_reward,goal";

inline std::string ppo_update_log_csv(const std::vector<PpoUpdateRow>& rows) {
  std::string s = kPpoUpdateLogHeader;
  s += '\n';
  for (const PpoUpdateRow& r : rows) {
    s += std::to_string(r.update);
    s += ',';
    s += std::to_string(r.timesteps);
    s += ',';
    s += std::to_string(r.episodes);
    s += ',';
    s += fmt(r.ep_reward_mean);
    s += ',';
    s += fmt(r.policy_loss);
    s += ',';
    s += fmt(r.value_loss);
    s += ',';
    s += fmt(r.entropy);
    s += ',';
    s += fmt(r.clip_fraction);
    s += '\n';
  }
  return s;
}

inline std::string ppo_episode_log_csv(const std::vector<PpoEpisodeRow>& rows) {
  std::string s = kPpoEpisodeLogHeader;
  s += '\n';
  for (const PpoEpisodeRow& r : rows) {
    s += std::to_string(r.episode);
    s += ',';
    s += std::to_string(r.steps);
    s += ',';
    s += fmt(r.cumulative_reward);
    s += ',';
    s += r.goal ? '1' : '0';
    s += '\n';
  }
  return s;
}

struct PpoTrainState {
  PpoConfig cfg;
  EnvConfig env_cfg;
  ActorCritic ac;
  AdamState adam_trunk, adam_policy, adam_value;
  Rng rng{0};
  std::int64_t timesteps = 0;
  std::int64_t update = 0;
  std::int64_t episode = 0;
  std::uint64_t reset_counter = 0;
  std::vector<PpoUpdateRow> update_log;
  std::vector<PpoEpisodeRow> episode_log;

  // live rollout machinery, rebuilt rather than persisted
  std::vector<SwapEnv> envs;
  std::vector<Observation> obs;  // normalized current observation per env
  std::vector<double> env_cum;
  std::vector<int> env_steps;
  bool envs_ready = false;
};

inline PpoTrainState ppo_init(const std::vector<Round>& rounds,
                              const PpoConfig& cfg, const EnvConfig& env_cfg) {
  validate(cfg);
  validate(env_cfg);
  if (rounds.empty())
    throw std::invalid_argument("ppo: training round set is empty");
  PpoTrainState st;
  st.cfg = cfg;
  st.env_cfg = env_cfg;
  Rng net_rng(derive_seed(cfg.seed, "ppo-net"));
  st.ac = make_actor_critic(net_rng);
  st.ac.norm = fit_obs_norm(rounds);
  st.adam_trunk = make_adam(st.ac.trunk, cfg.learning_rate);
  st.adam_policy = make_adam(st.ac.policy, cfg.learning_rate);
  st.adam_value = make_adam(st.ac.value, cfg.learning_rate);
  st.rng = Rng(derive_seed(cfg.seed, "ppo-train"));
  return st;
}

namespace detail {

inline void ppo_reset_env(PpoTrainState& st, int e, const std::vector<Round>& rounds) {
  const Round& round = rounds[(std::size_t)st.rng.below(rounds.size())];
  Observation raw = st.envs[(std::size_t)e].reset(
      round, derive_seed(st.cfg.seed, "ppo-env", st.reset_counter++));
  st.obs[(std::size_t)e] = normalized(st.ac.norm, raw);
  st.env_cum[(std::size_t)e] = 0.0;
  st.env_steps[(std::size_t)e] = 0;
}

inline void ppo_prepare_envs(PpoTrainState& st, const std::vector<Round>& rounds) {
  if (st.envs_ready) return;
  const int n = st.cfg.n_envs;
  st.envs.assign((std::size_t)n, SwapEnv(st.env_cfg));
  st.obs.assign((std::size_t)n, Observation{});
  st.env_cum.assign((std::size_t)n, 0.0);
  st.env_steps.assign((std::size_t)n, 0);
  for (int e = 0; e < n; ++e) ppo_reset_env(st, e, rounds);
  st.envs_ready = true;
}

}  // namespace detail

// Each env advances rollout_length steps under the categorical policy;
// finished episodes reset onto a fresh uniformly drawn round mid-rollout.
inline RolloutBuffer collect_rollouts(PpoTrainState& st,
                                      const std::vector<Round>& rounds) {
  if (rounds.empty())
    throw std::invalid_argument("ppo: training round set is empty");
  detail::ppo_prepare_envs(st, rounds);
  const int T = st.cfg.rollout_length, n = st.cfg.n_envs;
  RolloutBuffer buf;
  buf.n_envs = n;
  buf.length = T;
  buf.obs.resize(T * n, kObsDim);
  buf.actions.resize((std::size_t)(T * n));
  buf.logp.resize(T * n);
  buf.rewards.resize(T * n);
  buf.values.resize(T * n);
  buf.dones.resize((std::size_t)(T * n));

  Eigen::MatrixXd X(n, kObsDim);
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < n; ++e)
      X.row(e) = Eigen::Map<const Eigen::RowVectorXd>(st.obs[(std::size_t)e].data(), kObsDim);
    ForwardCache pc;
    Eigen::MatrixXd h = forward(st.ac.trunk, X);
    Eigen::MatrixXd probs = forward(st.ac.policy, h, &pc);
    Eigen::VectorXd values = forward(st.ac.value, h).col(0);
    const Eigen::MatrixXd& logits = pc.pre.back();
    for (int e = 0; e < n; ++e) {
      int i = t * n + e;
      int a = sample_categorical(probs.row(e), st.rng);
      buf.obs.row(i) = X.row(e);
      buf.actions[(std::size_t)i] = a;
      buf.logp(i) = log_softmax(logits.row(e))(a);
      buf.values(i) = values(e);
      StepResult sr = st.envs[(std::size_t)e].step(a);
      buf.rewards(i) = sr.reward;
      buf.dones[(std::size_t)i] = sr.done ? 1 : 0;
      st.env_cum[(std::size_t)e] += sr.reward;
      ++st.env_steps[(std::size_t)e];
      if (sr.done) {
        ++st.episode;
        st.episode_log.push_back({st.episode, st.env_steps[(std::size_t)e],
                                  st.env_cum[(std::size_t)e],
                                  sr.team_score >= sr.goal_threshold});
        detail::ppo_reset_env(st, e, rounds);
      } else {
        st.obs[(std::size_t)e] = normalized(st.ac.norm, sr.observation);
      }
    }
    st.timesteps += n;
  }
  for (int e = 0; e < n; ++e)
    X.row(e) = Eigen::Map<const Eigen::RowVectorXd>(st.obs[(std::size_t)e].data(), kObsDim);
  buf.last_values = forward(st.ac.value, forward(st.ac.trunk, X)).col(0);
  return buf;
}

struct PpoUpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

inline void normalize_advantages(Eigen::VectorXd& a) {
  double mean = a.mean();
  double var = (a.array() - mean).square().sum() / (double)a.size();
  a = ((a.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
}

// n_epochs shuffled passes over the buffer in minibatches; advantages are
// normalized once over the whole buffer first
inline PpoUpdateStats ppo_update(PpoTrainState& st, RolloutBuffer& buf) {
  const PpoConfig& cfg = st.cfg;
  const int total = buf.size();
  if (buf.advantages.size() != total)
    throw std::logic_error("ppo_update: advantages not computed");
  Eigen::VectorXd adv_norm = buf.advantages;
  normalize_advantages(adv_norm);

  PpoUpdateStats stats;
  int n_batches = 0;
  std::vector<int> order((std::size_t)total);
  for (int i = 0; i < total; ++i) order[(std::size_t)i] = i;
  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    st.rng.shuffle(order);
    for (int start = 0; start < total; start += cfg.batch_size) {
      const int B = std::min(cfg.batch_size, total - start);
      Eigen::MatrixXd obs(B, kObsDim);
      std::vector<int> actions((std::size_t)B);
      Eigen::VectorXd logp_old(B), adv(B), ret(B);
      for (int j = 0; j < B; ++j) {
        int i = order[(std::size_t)(start + j)];
        obs.row(j) = buf.obs.row(i);
        actions[(std::size_t)j] = buf.actions[(std::size_t)i];
        logp_old(j) = buf.logp(i);
        adv(j) = adv_norm(i);
        ret(j) = buf.returns(i);
      }
      PpoLoss loss = ppo_loss(st.ac.trunk, st.ac.policy, st.ac.value, obs,
                              actions, logp_old, adv, ret, cfg.clip_range,
                              cfg.vf_coef, cfg.ent_coef);
      if (!std::isfinite(loss.total))
        throw std::runtime_error(
            "ppo update diverged at update " + std::to_string(st.update + 1) +
            ", epoch " + std::to_string(epoch + 1) + ": policy_loss=" +
            fmt(loss.policy_loss) + " value_loss=" + fmt(loss.value_loss) +
            " entropy=" + fmt(loss.entropy));
      clip_grad_norm({&loss.g_trunk, &loss.g_policy, &loss.g_value},
                     cfg.max_grad_norm);
      adam_step(st.ac.trunk, loss.g_trunk, st.adam_trunk);
      adam_step(st.ac.policy, loss.g_policy, st.adam_policy);
      adam_step(st.ac.value, loss.g_value, st.adam_value);
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      ++n_batches;
    }
  }
  stats.policy_loss /= n_batches;
  stats.value_loss /= n_batches;
  stats.entropy /= n_batches;
  stats.clip_fraction /= n_batches;
  ++st.update;
  return stats;
}

inline void ppo_train(PpoTrainState& st, const std::vector<Round>& rounds) {
  if (rounds.empty())
    throw std::invalid_argument("ppo: training round set is empty");
  while (st.timesteps < st.cfg.total_timesteps) {
    std::size_t episodes_before = st.episode_log.size();
    RolloutBuffer buf = collect_rollouts(st, rounds);
    compute_gae(buf, st.cfg.gamma, st.cfg.gae_lambda);
    PpoUpdateStats stats = ppo_update(st, buf);
    double ep_mean = 0.0;
    std::size_t n_new = st.episode_log.size() - episodes_before;
    if (n_new > 0) {
      for (std::size_t i = episodes_before; i < st.episode_log.size(); ++i)
        ep_mean += st.episode_log[i].cumulative_reward;
      ep_mean /= (double)n_new;
    }
    st.update_log.push_back({st.update, st.timesteps, st.episode, ep_mean,
                             stats.policy_loss, stats.value_loss, stats.entropy,
                             stats.clip_fraction});
  }
}

inline PpoTrainState ppo_train(const std::vector<Round>& rounds,
                               const PpoConfig& cfg, const EnvConfig& env_cfg) {
  PpoTrainState st = ppo_init(rounds, cfg, env_cfg);
  ppo_train(st, rounds);
  return st;
}

// ---- acting ----

enum class ActMode { Argmax, Sample };

inline RolloutResult act(const ActorCritic& ac, const Round& round,
                         int max_steps, std::uint64_t seed,
                         ActMode mode = ActMode::Argmax, double alpha = 1.0) {
  if (mode == ActMode::Argmax) {
    return rollout_best_visited(
        round,
        [&](const Observation& obs) {
          Eigen::VectorXd p = action_probs(ac, obs);
          Eigen::Index best = 0;
          p.maxCoeff(&best);
          return (int)best;
        },
        max_steps, seed, alpha);
  }
  Rng sample_rng(derive_seed(seed, "ppo-act-sample"));
  return rollout_best_visited(
      round,
      [&](const Observation& obs) {
        return sample_categorical(action_probs(ac, obs), sample_rng);
      },
      max_steps, seed, alpha);
}

// ---- checkpointing ----
// Envs and in-flight rollouts are not persisted; a resumed run begins at a
// fresh rollout boundary with the counters carried over.

inline void ppo_config_to_bin(BinWriter& w, const PpoConfig& cfg) {
  w.num<std::int64_t>(cfg.total_timesteps);
  w.num<double>(cfg.learning_rate);
  w.num<double>(cfg.gamma);
  w.num<std::int32_t>(cfg.batch_size);
  w.num<std::int32_t>(cfg.n_envs);
  w.num<std::int32_t>(cfg.n_epochs);
  w.num<double>(cfg.clip_range);
  w.num<double>(cfg.vf_coef);
  w.num<double>(cfg.ent_coef);
  w.num<double>(cfg.gae_lambda);
  w.num<std::int32_t>(cfg.rollout_length);
  w.num<double>(cfg.max_grad_norm);
  w.num<std::uint64_t>(cfg.seed);
}

inline PpoConfig ppo_config_from_bin(BinReader& r) {
  PpoConfig cfg;
  cfg.total_timesteps = r.num<std::int64_t>();
  cfg.learning_rate = r.num<double>();
  cfg.gamma = r.num<double>();
  cfg.batch_size = (int)r.num<std::int32_t>();
  cfg.n_envs = (int)r.num<std::int32_t>();
  cfg.n_epochs = (int)r.num<std::int32_t>();
  cfg.clip_range = r.num<double>();
  cfg.vf_coef = r.num<double>();
  cfg.ent_coef = r.num<double>();
  cfg.gae_lambda = r.num<double>();
  cfg.rollout_length = (int)r.num<std::int32_t>();
  cfg.max_grad_norm = r.num<double>();
  cfg.seed = r.num<std::uint64_t>();
  return cfg;
}

inline void env_config_to_bin(BinWriter& w, const EnvConfig& cfg) {
  w.num<double>(cfg.alpha);
  w.num<std::int32_t>(cfg.max_steps);
  w.num<double>(cfg.step_reward);
  w.num<double>(cfg.goal_reward);
}

inline EnvConfig env_config_from_bin(BinReader& r) {
  EnvConfig cfg;
  cfg.alpha = r.num<double>();
  cfg.max_steps = (int)r.num<std::int32_t>();
  cfg.step_reward = r.num<double>();
  cfg.goal_reward = r.num<double>();
  return cfg;
}

inline void save_ppo_checkpoint(const std::string& path,
                                const PpoTrainState& st) {
  BinWriter w;
  w.str("FCKP");
  w.num<std::uint32_t>(1);
  w.pstr("ppo");
  ppo_config_to_bin(w, st.cfg);
  env_config_to_bin(w, st.env_cfg);
  w.num<std::int64_t>(st.timesteps);
  w.num<std::int64_t>(st.update);
  w.num<std::int64_t>(st.episode);
  w.num<std::uint64_t>(st.reset_counter);
  w.pstr(st.rng.state());
  obs_norm_to_bin(w, st.ac.norm);
  net_to_bin(w, st.ac.trunk, &st.adam_trunk);
  net_to_bin(w, st.ac.policy, &st.adam_policy);
  net_to_bin(w, st.ac.value, &st.adam_value);
  write_file(path, w.buf);
}

inline PpoTrainState load_ppo_checkpoint(const std::string& path) {
  std::string data = read_file(path);
  BinReader r(data);
  r.expect("FCKP", "checkpoint");
  std::uint32_t ver = r.num<std::uint32_t>();
  if (ver != 1) throw std::runtime_error("unsupported checkpoint version");
  std::string kind = r.pstr();
  if (kind != "ppo")
    throw std::runtime_error("checkpoint holds a " + kind + " agent, expected ppo");
  PpoTrainState st;
  st.cfg = ppo_config_from_bin(r);
  st.env_cfg = env_config_from_bin(r);
  st.timesteps = r.num<std::int64_t>();
  st.update = r.num<std::int64_t>();
  st.episode = r.num<std::int64_t>();
  st.reset_counter = r.num<std::uint64_t>();
  st.rng.set_state(r.pstr());
  st.ac.norm = obs_norm_from_bin(r);
  LoadedNet trunk = net_from_bin(r);
  LoadedNet policy = net_from_bin(r);
  LoadedNet value = net_from_bin(r);
  if (!trunk.adam || !policy.adam || !value.adam)
    throw std::runtime_error("checkpoint missing optimizer state");
  st.ac.trunk = std::move(trunk.net);
  st.ac.policy = std::move(policy.net);
  st.ac.value = std::move(value.net);
  st.adam_trunk = std::move(*trunk.adam);
  st.adam_policy = std::move(*policy.adam);
  st.adam_value = std::move(*value.adam);
  return st;
}

}  // namespace fantasy
