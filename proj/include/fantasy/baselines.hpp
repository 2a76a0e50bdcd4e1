#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fantasy/data.hpp"
#include "fantasy/domain.hpp"
#include "fantasy/rng.hpp"

namespace fantasy {

// ---- ranking baselines ----

// Top 11 by score, ties to the lower player index.
inline TeamState team_from_scores(const std::array<double, kRoundPlayers>& score) {
  std::array<int, kRoundPlayers> order;
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double sa = score[(std::size_t)a], sb = score[(std::size_t)b];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  std::array<int, kTeamSize> sel;
  std::copy_n(order.begin(), kTeamSize, sel.begin());
  return make_team(sel);
}

// Ranks by each player's most recent match strictly before the round's date;
// players with no prior history rank below everyone with history.
inline TeamState previous_performance_team(const Round& round,
                                           const HistoryStore& store) {
  std::array<double, kRoundPlayers> score;
  score.fill(-std::numeric_limits<double>::infinity());
  for (int i = 0; i < kRoundPlayers; ++i) {
    auto it = store.by_player.find(round.players[(std::size_t)i]);
    if (it == store.by_player.end()) continue;
    for (auto ri = it->second.rbegin(); ri != it->second.rend(); ++ri) {
      const PlayerRoundRecord& rec = store.records[(std::size_t)*ri];
      if (rec.date < round.date) {
        score[(std::size_t)i] = rec.raw_points;
        break;
      }
    }
  }
  return team_from_scores(score);
}

inline TeamState selection_percentage_team(const Round& round) {
  return team_from_scores(round.selection_pct);
}

// ---- per-player training labels ----

struct PlayerLabelled {
  std::array<double, kNumFeatures> features{};
  int label = 0;  // 1 if the player made the round's dream team
};

inline std::vector<PlayerLabelled> label_players(const std::vector<Round>& rounds) {
  std::vector<PlayerLabelled> out;
  out.reserve(rounds.size() * kRoundPlayers);
  for (const Round& r : rounds) {
    TeamState dream = dream_team(r);
    std::array<bool, kRoundPlayers> in{};
    for (int i : dream.selected) in[(std::size_t)i] = true;
    for (int i = 0; i < kRoundPlayers; ++i) {
      PlayerLabelled p;
      for (int j = 0; j < kNumFeatures; ++j) p.features[(std::size_t)j] = r.features(i, j);
      p.label = in[(std::size_t)i] ? 1 : 0;
      out.push_back(p);
    }
  }
  return out;
}

// ---- random forest ----

inline int default_features_per_split() {
  return (int)std::lround(std::sqrt((double)kNumFeatures));
}

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 10;
  double bootstrap_fraction = 1.0;
  int features_per_split = default_features_per_split();
  std::uint64_t seed = 0;
};

inline void validate(const ForestConfig& cfg) {
  if (cfg.n_trees < 1) throw std::invalid_argument("n_trees must be positive");
  if (cfg.max_depth < 1) throw std::invalid_argument("max_depth must be positive");
  if (!(cfg.bootstrap_fraction > 0.0 && cfg.bootstrap_fraction <= 1.0))
    throw std::invalid_argument("bootstrap_fraction must be in (0, 1]");
  if (cfg.features_per_split < 1 || cfg.features_per_split > kNumFeatures)
    throw std::invalid_argument("features_per_split must be in 1..10");
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int vote = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root
};

struct ForestModel {
  ForestConfig cfg;
  std::vector<DecisionTree> trees;
};

namespace detail {

struct TreeBuilder {
  const std::vector<PlayerLabelled>& data;
  const ForestConfig& cfg;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<int> idx;  // bootstrap sample indices, partitioned in place

  // Gini-weighted best split over a random feature subset; [begin, end) span.
  int build(int begin, int end, int depth) {
    const int n = end - begin;
    int pos = 0;
    for (int k = begin; k < end; ++k)
      pos += data[(std::size_t)idx[(std::size_t)k]].label;

    int node_id = (int)nodes.size();
    nodes.push_back(TreeNode{});
    if (depth >= cfg.max_depth || pos == 0 || pos == n || n < 2) {
      nodes[(std::size_t)node_id].vote = 2 * pos > n ? 1 : 0;
      return node_id;
    }

    std::vector<int> feats = rng.sample_indices(kNumFeatures, cfg.features_per_split);
    std::sort(feats.begin(), feats.end());

    double best_gini = std::numeric_limits<double>::infinity();
    int best_f = -1, best_k = 0;
    double best_thr = 0.0;
    std::vector<std::pair<double, int>> vals((std::size_t)n);
    for (int f : feats) {
      for (int k = 0; k < n; ++k) {
        int i = idx[(std::size_t)(begin + k)];
        vals[(std::size_t)k] = {data[(std::size_t)i].features[(std::size_t)f], i};
      }
      std::sort(vals.begin(), vals.end());
      int lp = 0;
      for (int k = 1; k < n; ++k) {
        lp += data[(std::size_t)vals[(std::size_t)(k - 1)].second].label;
        if (vals[(std::size_t)k].first == vals[(std::size_t)(k - 1)].first) continue;
        int ln = k, rn = n - k, rp = pos - lp;
        double pl = (double)lp / ln, pr = (double)rp / rn;
        double gini = (ln * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)) +
                       rn * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr))) /
                      n;
        if (gini < best_gini) {
          best_gini = gini;
          best_f = f;
          best_k = k;
          best_thr = 0.5 * (vals[(std::size_t)(k - 1)].first + vals[(std::size_t)k].first);
        }
      }
    }
    if (best_f < 0) {  // all candidate features constant on this node
      nodes[(std::size_t)node_id].vote = 2 * pos > n ? 1 : 0;
      return node_id;
    }

    std::sort(idx.begin() + begin, idx.begin() + end, [&](int a, int b) {
      double xa = data[(std::size_t)a].features[(std::size_t)best_f];
      double xb = data[(std::size_t)b].features[(std::size_t)best_f];
      if (xa != xb) return xa < xb;
      return a < b;
    });
    int mid = begin + best_k;
    nodes[(std::size_t)node_id].feature = best_f;
    nodes[(std::size_t)node_id].threshold = best_thr;
    int l = build(begin, mid, depth + 1);
    int r = build(mid, end, depth + 1);
    nodes[(std::size_t)node_id].left = l;
    nodes[(std::size_t)node_id].right = r;
    return node_id;
  }
};

}  // namespace detail

inline ForestModel train_forest(const std::vector<PlayerLabelled>& data,
                                const ForestConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("forest: empty training set");
  const int n = (int)data.size();
  const int m = std::max(1, (int)std::llround(cfg.bootstrap_fraction * n));

  ForestModel model;
  model.cfg = cfg;
  model.trees.reserve((std::size_t)cfg.n_trees);
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, "rf-tree", (std::uint64_t)t));
    detail::TreeBuilder b{data, cfg, rng, {}, {}};
    b.idx.resize((std::size_t)m);
    for (int k = 0; k < m; ++k) b.idx[(std::size_t)k] = (int)rng.below((std::uint64_t)n);
    b.build(0, m, 0);
    model.trees.push_back(DecisionTree{std::move(b.nodes)});
  }
  return model;
}

inline int predict_tree(const DecisionTree& tree,
                        const std::array<double, kNumFeatures>& x) {
  int node = 0;
  while (tree.nodes[(std::size_t)node].feature >= 0) {
    const TreeNode& nd = tree.nodes[(std::size_t)node];
    node = x[(std::size_t)nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[(std::size_t)node].vote;
}

// fraction of trees voting positive
inline double predict_forest(const ForestModel& model,
                             const std::array<double, kNumFeatures>& x) {
  int votes = 0;
  for (const DecisionTree& t : model.trees) votes += predict_tree(t, x);
  return (double)votes / (double)model.trees.size();
}

inline TeamState forest_team(const ForestModel& model, const Round& round) {
  std::array<double, kRoundPlayers> score{};
  std::array<double, kNumFeatures> x{};
  for (int i = 0; i < kRoundPlayers; ++i) {
    for (int j = 0; j < kNumFeatures; ++j) x[(std::size_t)j] = round.features(i, j);
    score[(std::size_t)i] = predict_forest(model, x);
  }
  return team_from_scores(score);
}

inline std::string forest_to_json(const ForestModel& model) {
  nlohmann::json j;
  j["n_trees"] = model.cfg.n_trees;
  j["max_depth"] = model.cfg.max_depth;
  j["bootstrap_fraction"] = model.cfg.bootstrap_fraction;
  j["features_per_split"] = model.cfg.features_per_split;
  j["seed"] = model.cfg.seed;
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& t : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& nd : t.nodes)
      nodes.push_back({{"f", nd.feature},
                       {"t", nd.threshold},
                       {"l", nd.left},
                       {"r", nd.right},
                       {"v", nd.vote}});
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

inline ForestModel forest_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ForestModel model;
  model.cfg.n_trees = j.at("n_trees").get<int>();
  model.cfg.max_depth = j.at("max_depth").get<int>();
  model.cfg.bootstrap_fraction = j.at("bootstrap_fraction").get<double>();
  model.cfg.features_per_split = j.at("features_per_split").get<int>();
  model.cfg.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jt : j.at("trees")) {
    DecisionTree t;
    for (const auto& jn : jt)
      t.nodes.push_back(TreeNode{jn.at("f").get<int>(), jn.at("t").get<double>(),
                                 jn.at("l").get<int>(), jn.at("r").get<int>(),
                                 jn.at("v").get<int>()});
    model.trees.push_back(std::move(t));
  }
  if ((int)model.trees.size() != model.cfg.n_trees)
    throw std::runtime_error("forest json: tree count mismatch");
  return model;
}

// ---- kernel svm ----

struct SvmConfig {
  double C = 1.0;
  int epochs = 100;
  double step_size = 1.0;
  double gamma_scale = 1.0;  // bandwidth: gamma = gamma_scale / median sq dist
  int subsample_cap = 2000;
  std::uint64_t seed = 0;
};

inline void validate(const SvmConfig& cfg) {
  if (!(cfg.C > 0.0)) throw std::invalid_argument("C must be positive");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
  if (!(cfg.gamma_scale > 0.0))
    throw std::invalid_argument("gamma_scale must be positive");
  if (cfg.subsample_cap < 2)
    throw std::invalid_argument("subsample_cap must be at least 2");
}

struct SvmModel {
  SvmConfig cfg;
  double gamma = 1.0;
  Eigen::VectorXd feat_mean;  // training standardization
  Eigen::VectorXd feat_sd;
  Eigen::MatrixXd support;  // standardized training subsample, one row each
  Eigen::VectorXd beta;     // representer coefficients
};

inline double rbf_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

// Hinge-loss subgradient descent in the representer form: each step decays
// all coefficients and, on a margin violation, bumps the sampled point's.
inline SvmModel train_svm(const std::vector<PlayerLabelled>& data,
                          const SvmConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("svm: empty training set");
  bool any_pos = false, any_neg = false;
  for (const PlayerLabelled& p : data) (p.label ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg)
    throw std::invalid_argument("svm: training labels are single-class");

  Rng rng(derive_seed(cfg.seed, "svm-train"));
  std::vector<int> pick((std::size_t)std::min<int>((int)data.size(), cfg.subsample_cap));
  if ((int)data.size() > cfg.subsample_cap) {
    pick = rng.sample_indices((int)data.size(), cfg.subsample_cap);
    std::sort(pick.begin(), pick.end());
  } else {
    std::iota(pick.begin(), pick.end(), 0);
  }
  const int m = (int)pick.size();

  Eigen::MatrixXd X(m, kNumFeatures);
  Eigen::VectorXd y(m);
  any_pos = any_neg = false;
  for (int i = 0; i < m; ++i) {
    const PlayerLabelled& p = data[(std::size_t)pick[(std::size_t)i]];
    for (int j = 0; j < kNumFeatures; ++j) X(i, j) = p.features[(std::size_t)j];
    y(i) = p.label ? 1.0 : -1.0;
    (p.label ? any_pos : any_neg) = true;
  }
  if (!any_pos || !any_neg)
    throw std::runtime_error("svm: subsample lost a class; raise subsample_cap");

  SvmModel model;
  model.cfg = cfg;
  model.feat_mean = X.colwise().mean();
  Eigen::VectorXd var =
      ((X.rowwise() - model.feat_mean.transpose()).array().square().colwise().sum() /
       (double)m)
          .matrix();
  model.feat_sd = var.array().sqrt().matrix();
  for (int j = 0; j < kNumFeatures; ++j)
    if (model.feat_sd(j) < 1e-12) model.feat_sd(j) = 1.0;
  X = ((X.rowwise() - model.feat_mean.transpose()).array().rowwise() /
       model.feat_sd.transpose().array())
          .matrix();

  Eigen::VectorXd sq = X.rowwise().squaredNorm();
  Eigen::MatrixXd D = sq.replicate(1, m) + sq.transpose().replicate(m, 1) -
                      2.0 * (X * X.transpose());
  D = D.cwiseMax(0.0);

  std::vector<double> pair_d;
  pair_d.reserve((std::size_t)m * (m - 1) / 2);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) pair_d.push_back(D(i, j));
  double med = 1.0;
  if (!pair_d.empty()) {
    auto mid = pair_d.begin() + (std::ptrdiff_t)(pair_d.size() / 2);
    std::nth_element(pair_d.begin(), mid, pair_d.end());
    med = *mid > 0.0 ? *mid : 1.0;
  }
  model.gamma = cfg.gamma_scale / med;

  Eigen::MatrixXd K = (-model.gamma * D.array()).exp().matrix();

  const double lambda = 1.0 / (cfg.C * m);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);  // f = K beta, kept in step
  const std::int64_t total = (std::int64_t)cfg.epochs * m;
  for (std::int64_t t = 1; t <= total; ++t) {
    int i = (int)rng.below((std::uint64_t)m);
    double eta = cfg.step_size / (lambda * ((double)t + cfg.step_size));
    double decay = 1.0 - eta * lambda;
    bool violated = y(i) * f(i) < 1.0;
    beta *= decay;
    f *= decay;
    if (violated) {
      beta(i) += eta * y(i);
      f += eta * y(i) * K.col(i);
    }
  }

  model.support = std::move(X);
  model.beta = std::move(beta);
  return model;
}

inline double predict_svm(const SvmModel& model,
                          const std::array<double, kNumFeatures>& x) {
  Eigen::RowVectorXd xs(kNumFeatures);
  for (int j = 0; j < kNumFeatures; ++j)
    xs(j) = (x[(std::size_t)j] - model.feat_mean(j)) / model.feat_sd(j);
  Eigen::VectorXd d = (model.support.rowwise() - xs).rowwise().squaredNorm();
  return (model.beta.array() * (-model.gamma * d.array()).exp()).sum();
}

inline TeamState svm_team(const SvmModel& model, const Round& round) {
  std::array<double, kRoundPlayers> score{};
  std::array<double, kNumFeatures> x{};
  for (int i = 0; i < kRoundPlayers; ++i) {
    for (int j = 0; j < kNumFeatures; ++j) x[(std::size_t)j] = round.features(i, j);
    score[(std::size_t)i] = predict_svm(model, x);
  }
  return team_from_scores(score);
}

inline std::string svm_to_json(const SvmModel& model) {
  nlohmann::json j;
  j["C"] = model.cfg.C;
  j["epochs"] = model.cfg.epochs;
  j["step_size"] = model.cfg.step_size;
  j["gamma_scale"] = model.cfg.gamma_scale;
  j["subsample_cap"] = model.cfg.subsample_cap;
  j["seed"] = model.cfg.seed;
  j["gamma"] = model.gamma;
  j["feat_mean"] = std::vector<double>(model.feat_mean.begin(), model.feat_mean.end());
  j["feat_sd"] = std::vector<double>(model.feat_sd.begin(), model.feat_sd.end());
  j["beta"] = std::vector<double>(model.beta.begin(), model.beta.end());
  nlohmann::json support = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.support.rows(); ++i) {
    std::vector<double> row((std::size_t)kNumFeatures);
    for (int k = 0; k < kNumFeatures; ++k) row[(std::size_t)k] = model.support(i, k);
    support.push_back(std::move(row));
  }
  j["support"] = std::move(support);
  return j.dump();
}

inline SvmModel svm_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SvmModel model;
  model.cfg.C = j.at("C").get<double>();
  model.cfg.epochs = j.at("epochs").get<int>();
  model.cfg.step_size = j.at("step_size").get<double>();
  model.cfg.gamma_scale = j.at("gamma_scale").get<double>();
  model.cfg.subsample_cap = j.at("subsample_cap").get<int>();
  model.cfg.seed = j.at("seed").get<std::uint64_t>();
  model.gamma = j.at("gamma").get<double>();
  auto mean = j.at("feat_mean").get<std::vector<double>>();
  auto sd = j.at("feat_sd").get<std::vector<double>>();
  auto beta = j.at("beta").get<std::vector<double>>();
  const auto& support = j.at("support");
  if ((int)mean.size() != kNumFeatures || (int)sd.size() != kNumFeatures ||
      beta.size() != support.size())
    throw std::runtime_error("svm json: inconsistent dimensions");
  model.feat_mean = Eigen::Map<Eigen::VectorXd>(mean.data(), kNumFeatures);
  model.feat_sd = Eigen::Map<Eigen::VectorXd>(sd.data(), kNumFeatures);
  model.beta = Eigen::Map<Eigen::VectorXd>(beta.data(), (Eigen::Index)beta.size());
  model.support.resize((Eigen::Index)support.size(), kNumFeatures);
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto row = support[i].get<std::vector<double>>();
    if ((int)row.size() != kNumFeatures)
      throw std::runtime_error("svm json: bad support row");
    for (int k = 0; k < kNumFeatures; ++k) model.support((Eigen::Index)i, k) = row[(std::size_t)k];
  }
  return model;
}

// ---- grid search over fold-internal validation accuracy ----

inline double classification_accuracy(const ForestModel& model,
                                      const std::vector<PlayerLabelled>& data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty set");
  int hits = 0;
  for (const PlayerLabelled& p : data)
    hits += (predict_forest(model, p.features) >= 0.5 ? 1 : 0) == p.label;
  return (double)hits / (double)data.size();
}

inline double classification_accuracy(const SvmModel& model,
                                      const std::vector<PlayerLabelled>& data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty set");
  int hits = 0;
  for (const PlayerLabelled& p : data)
    hits += (predict_svm(model, p.features) >= 0.0 ? 1 : 0) == p.label;
  return (double)hits / (double)data.size();
}

inline ForestConfig grid_search_forest(const std::vector<PlayerLabelled>& train,
                                       const std::vector<PlayerLabelled>& val,
                                       const std::vector<int>& depths,
                                       const std::vector<int>& tree_counts,
                                       ForestConfig base) {
  if (depths.empty() || tree_counts.empty())
    throw std::invalid_argument("grid_search_forest: empty candidate list");
  double best_acc = -1.0;
  ForestConfig best = base;
  for (int d : depths)
    for (int n : tree_counts) {
      ForestConfig cfg = base;
      cfg.max_depth = d;
      cfg.n_trees = n;
      double acc = classification_accuracy(train_forest(train, cfg), val);
      if (acc > best_acc) {
        best_acc = acc;
        best = cfg;
      }
    }
  return best;
}

inline SvmConfig grid_search_svm(const std::vector<PlayerLabelled>& train,
                                 const std::vector<PlayerLabelled>& val,
                                 const std::vector<double>& cs,
                                 const std::vector<double>& gamma_scales,
                                 SvmConfig base) {
  if (cs.empty() || gamma_scales.empty())
    throw std::invalid_argument("grid_search_svm: empty candidate list");
  double best_acc = -1.0;
  SvmConfig best = base;
  for (double c : cs)
    for (double g : gamma_scales) {
      SvmConfig cfg = base;
      cfg.C = c;
      cfg.gamma_scale = g;
      double acc = classification_accuracy(train_svm(train, cfg), val);
      if (acc > best_acc) {
        best_acc = acc;
        best = cfg;
      }
    }
  return best;
}

}  // namespace fantasy
