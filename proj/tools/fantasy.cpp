#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fantasy/baselines.hpp"
#include "fantasy/data.hpp"
#include "fantasy/dqn.hpp"
#include "fantasy/eval.hpp"
#include "fantasy/ppo.hpp"

namespace fs = std::filesystem;
using namespace fantasy;

namespace {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string model_dir = "models";
  std::string report_dir = "reports";
  bool sequential = false;
  int n_folds = 4;
  int gap_days = 1;
  GeneratorConfig gen;
  EnvConfig env;
  DqnConfig dqn;
  PpoConfig ppo;
  ForestConfig forest;
  SvmConfig svm;
  PopulationConfig pop;
};

// ---- config key registry: config-file keys and their mirrored flags ----

struct KeyEntry {
  std::string key;  // section.name as written in the config file
  std::string desc;
  std::function<void(const std::string&)> set;
};

std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, typename Parse>
T parse_with(const std::string& key, const std::string& v, Parse parse) {
  try {
    std::size_t pos = 0;
    T out = parse(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid value for " + key + ": '" + v + "'");
  }
}

std::int64_t parse_i64(const std::string& key, const std::string& v) {
  return parse_with<std::int64_t>(
      key, v, [](const std::string& s, std::size_t* p) { return std::stoll(s, p); });
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  return parse_with<std::uint64_t>(
      key, v, [](const std::string& s, std::size_t* p) { return std::stoull(s, p); });
}

double parse_f64(const std::string& key, const std::string& v) {
  return parse_with<double>(
      key, v, [](const std::string& s, std::size_t* p) { return std::stod(s, p); });
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("invalid value for " + key + ": '" + v + "'");
}

std::vector<KeyEntry> build_registry(RunConfig& cfg) {
  std::vector<KeyEntry> reg;
  auto add = [&](std::string key, void* slot, char type, std::string desc) {
    std::string k = key;
    std::function<void(const std::string&)> set;
    switch (type) {
      case 'i':
        set = [k, slot](const std::string& v) { *(int*)slot = (int)parse_i64(k, v); };
        break;
      case 'l':
        set = [k, slot](const std::string& v) { *(std::int64_t*)slot = parse_i64(k, v); };
        break;
      case 'u':
        set = [k, slot](const std::string& v) { *(std::uint64_t*)slot = parse_u64(k, v); };
        break;
      case 'd':
        set = [k, slot](const std::string& v) { *(double*)slot = parse_f64(k, v); };
        break;
      case 'b':
        set = [k, slot](const std::string& v) { *(bool*)slot = parse_bool(k, v); };
        break;
      default:
        set = [slot](const std::string& v) { *(std::string*)slot = v; };
        break;
    }
    reg.push_back({std::move(key), std::move(desc), std::move(set)});
  };

  add("seed", &cfg.seed, 'u', "global seed; every component seed is derived from it");
  add("data_dir", &cfg.data_dir, 's', "directory for generated data files");
  add("model_dir", &cfg.model_dir, 's', "directory for checkpoints and model dumps");
  add("report_dir", &cfg.report_dir, 's', "directory for logs and reports");
  add("sequential", &cfg.sequential, 'b', "force single-threaded, bit-exact execution");
  add("n_folds", &cfg.n_folds, 'i', "temporal cross-validation folds");
  add("gap_days", &cfg.gap_days, 'i', "gap dropped between train and validation windows");

  add("generator.n_players", &cfg.gen.n_players, 'i', "player pool size");
  add("generator.n_rounds", &cfg.gen.n_rounds, 'i', "rounds to simulate");
  add("generator.skill_spread", &cfg.gen.skill_spread, 'd', "sd of latent skill levels");
  add("generator.form_persistence", &cfg.gen.form_persistence, 'd',
      "AR(1) coefficient of player form");
  add("generator.noise_scale", &cfg.gen.noise_scale, 'd', "form and match noise sd");

  add("env.alpha", &cfg.env.alpha, 'd', "goal threshold as a fraction of the dream score");
  add("env.max_steps", &cfg.env.max_steps, 'i', "episode step limit");
  add("env.step_reward", &cfg.env.step_reward, 'd', "per-step reward");
  add("env.goal_reward", &cfg.env.goal_reward, 'd', "reward on reaching the goal");

  add("dqn.total_timesteps", &cfg.dqn.total_timesteps, 'l', "DQN training steps");
  add("dqn.learning_rate", &cfg.dqn.learning_rate, 'd', "DQN Adam learning rate");
  add("dqn.gamma", &cfg.dqn.gamma, 'd', "DQN discount factor");
  add("dqn.batch_size", &cfg.dqn.batch_size, 'i', "DQN replay batch size");
  add("dqn.buffer_capacity", &cfg.dqn.buffer_capacity, 'i', "replay buffer capacity");
  add("dqn.target_update_every", &cfg.dqn.target_update_every, 'l',
      "steps between target network copies");
  add("dqn.exploration_fraction", &cfg.dqn.exploration_fraction, 'd',
      "fraction of training spent annealing epsilon");
  add("dqn.initial_epsilon", &cfg.dqn.initial_epsilon, 'd', "exploration start");
  add("dqn.final_epsilon", &cfg.dqn.final_epsilon, 'd', "exploration floor");
  add("dqn.max_grad_norm", &cfg.dqn.max_grad_norm, 'd', "gradient clip norm");

  add("ppo.total_timesteps", &cfg.ppo.total_timesteps, 'l', "PPO training steps");
  add("ppo.learning_rate", &cfg.ppo.learning_rate, 'd', "PPO Adam learning rate");
  add("ppo.gamma", &cfg.ppo.gamma, 'd', "PPO discount factor");
  add("ppo.batch_size", &cfg.ppo.batch_size, 'i', "PPO minibatch size");
  add("ppo.n_envs", &cfg.ppo.n_envs, 'i', "parallel rollout environments");
  add("ppo.n_epochs", &cfg.ppo.n_epochs, 'i', "optimization epochs per update");
  add("ppo.clip_range", &cfg.ppo.clip_range, 'd', "PPO ratio clip");
  add("ppo.vf_coef", &cfg.ppo.vf_coef, 'd', "value loss coefficient");
  add("ppo.ent_coef", &cfg.ppo.ent_coef, 'd', "entropy bonus coefficient");
  add("ppo.gae_lambda", &cfg.ppo.gae_lambda, 'd', "GAE lambda");
  add("ppo.rollout_length", &cfg.ppo.rollout_length, 'i', "steps per env per rollout");
  add("ppo.max_grad_norm", &cfg.ppo.max_grad_norm, 'd', "global gradient clip norm");

  add("forest.n_trees", &cfg.forest.n_trees, 'i', "random forest size");
  add("forest.max_depth", &cfg.forest.max_depth, 'i', "tree depth limit");
  add("forest.bootstrap_fraction", &cfg.forest.bootstrap_fraction, 'd',
      "bootstrap sample fraction per tree");
  add("forest.features_per_split", &cfg.forest.features_per_split, 'i',
      "features considered per split");

  add("svm.c", &cfg.svm.C, 'd', "SVM regularization constant C");
  add("svm.epochs", &cfg.svm.epochs, 'i', "SVM training epochs");
  add("svm.step_size", &cfg.svm.step_size, 'd', "SVM step-size scale");
  add("svm.gamma_scale", &cfg.svm.gamma_scale, 'd',
      "RBF bandwidth scale (gamma = scale / median sq dist)");
  add("svm.subsample_cap", &cfg.svm.subsample_cap, 'i',
      "max training points kept for the kernel matrix");

  add("population.population_size", &cfg.pop.population_size, 'i',
      "simulated user teams per round");
  add("population.greedy_fraction", &cfg.pop.greedy_fraction, 'd',
      "share of noisy-greedy pickers");
  add("population.random_fraction", &cfg.pop.random_fraction, 'd',
      "share of uniform-random pickers");
  add("population.rank_noise_sd", &cfg.pop.rank_noise_sd, 'd',
      "gaussian noise on greedy picker ranks");
  return reg;
}

void apply_config_file(const std::string& path,
                       const std::map<std::string, const KeyEntry*>& index) {
  if (!fs::exists(path))
    throw std::runtime_error("config file not found: " + path);
  std::istringstream in(read_file(path));
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trimmed(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                    ": malformed section header");
      section = trimmed(line.substr(1, line.size() - 2));
      if (section == "run") section.clear();
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key = value");
    std::string key = trimmed(line.substr(0, eq));
    std::string value = trimmed(line.substr(eq + 1));
    std::string full = section.empty() ? key : section + "." + key;
    auto it = index.find(full);
    if (it == index.end())
      throw std::invalid_argument("unknown config key: " + full);
    it->second->set(value);
  }
}

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (char& c : s)
    if (c == '.' || c == '_') c = '-';
  return s;
}

std::string section_of(const std::string& key) {
  std::size_t dot = key.find('.');
  return dot == std::string::npos ? "run" : key.substr(0, dot);
}

// ---- shared plumbing ----

HistoryStore load_store(const RunConfig& cfg) {
  fs::path p = fs::path(cfg.data_dir) / "history.csv";
  if (!fs::exists(p))
    throw std::runtime_error("missing data file " + p.string() +
                             "; run `fantasy gen-data` first");
  return ingest_csv(p.string());
}

std::vector<Round> select_rounds(const std::vector<Round>& all,
                                 const std::vector<RoundId>& ids) {
  std::unordered_map<std::string, const Round*> idx;
  for (const Round& r : all) idx.emplace(r.round_id, &r);
  std::vector<Round> out;
  out.reserve(ids.size());
  for (const RoundId& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end())
      throw std::runtime_error("round " + id + " missing from built data");
    out.push_back(*it->second);
  }
  return out;
}

int resolve_fold(int flag, int n_folds) {
  int k = flag < 0 ? n_folds - 1 : flag;
  if (k < 0 || k >= n_folds)
    throw std::invalid_argument("fold must be in [0, " + std::to_string(n_folds) +
                                "), got " + std::to_string(flag));
  return k;
}

std::string ckpt_path(const RunConfig& cfg, const std::string& agent, int fold) {
  return (fs::path(cfg.model_dir) / (agent + "-fold" + std::to_string(fold) + ".fckp"))
      .string();
}

std::string model_json_path(const RunConfig& cfg, const std::string& name, int fold) {
  return (fs::path(cfg.model_dir) / (name + "-fold" + std::to_string(fold) + ".json"))
      .string();
}

std::string report_path(const RunConfig& cfg, const std::string& file) {
  return (fs::path(cfg.report_dir) / file).string();
}

nlohmann::json env_echo(const EnvConfig& e) {
  return {{"alpha", e.alpha},
          {"max_steps", e.max_steps},
          {"step_reward", e.step_reward},
          {"goal_reward", e.goal_reward}};
}

nlohmann::json ppo_echo(const PpoConfig& c) {
  return {{"total_timesteps", c.total_timesteps},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"n_envs", c.n_envs},
          {"n_epochs", c.n_epochs},
          {"clip_range", c.clip_range},
          {"vf_coef", c.vf_coef},
          {"ent_coef", c.ent_coef},
          {"gae_lambda", c.gae_lambda},
          {"rollout_length", c.rollout_length},
          {"max_grad_norm", c.max_grad_norm},
          {"seed", c.seed}};
}

nlohmann::json dqn_echo(const DqnConfig& c) {
  return {{"total_timesteps", c.total_timesteps},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"target_update_every", c.target_update_every},
          {"exploration_fraction", c.exploration_fraction},
          {"initial_epsilon", c.initial_epsilon},
          {"final_epsilon", c.final_epsilon},
          {"max_grad_norm", c.max_grad_norm},
          {"seed", c.seed}};
}

// ---- subcommands ----

void cmd_gen_data(const RunConfig& cfg) {
  GeneratorConfig g = cfg.gen;
  g.seed = derive_seed(cfg.seed, "gen-data");
  HistoryStore store = generate_history(g);
  fs::create_directories(cfg.data_dir);
  fs::path hist = fs::path(cfg.data_dir) / "history.csv";
  fs::path manifest = fs::path(cfg.data_dir) / "rounds.csv";
  write_file(hist.string(), history_csv(store));
  write_file(manifest.string(), manifest_csv(store));
  std::cout << "wrote " << hist.string() << " and " << manifest.string()
            << ": players=" << g.n_players << " rounds=" << store.rounds.size()
            << " records=" << store.records.size() << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& agent, int fold_flag,
               std::int64_t timestep_override, bool resume) {
  HistoryStore store = load_store(cfg);
  std::vector<Round> all = build_all_rounds(store);
  std::vector<CvFold> folds = temporal_cv_split(store, cfg.n_folds, cfg.gap_days);
  int k = resolve_fold(fold_flag, cfg.n_folds);
  std::vector<Round> train = select_rounds(all, folds[(std::size_t)k].train_rounds);
  fs::create_directories(cfg.model_dir);
  fs::create_directories(cfg.report_dir);
  std::string path = ckpt_path(cfg, agent, k);
  std::string stem = agent + "-train-fold" + std::to_string(k);

  nlohmann::json j;
  j["agent"] = agent;
  j["fold"] = k;
  j["global_seed"] = cfg.seed;
  j["sequential"] = cfg.sequential;
  j["resumed"] = resume;
  j["train_rounds"] = train.size();

  if (agent == "ppo") {
    PpoConfig pc = cfg.ppo;
    if (timestep_override >= 0) pc.total_timesteps = timestep_override;
    pc.seed = derive_seed(cfg.seed, "train-ppo", (std::uint64_t)k);
    PpoTrainState st;
    if (resume) {
      if (!fs::exists(path))
        throw std::runtime_error("ppo: missing checkpoint " + path +
                                 "; train once without --resume first");
      st = load_ppo_checkpoint(path);
      st.cfg.total_timesteps = pc.total_timesteps;
      ppo_train(st, train);
    } else {
      st = ppo_train(train, pc, cfg.env);
    }
    save_ppo_checkpoint(path, st);
    write_file(report_path(cfg, stem + "-updates.csv"),
               ppo_update_log_csv(st.update_log));
    write_file(report_path(cfg, stem + "-episodes.csv"),
               ppo_episode_log_csv(st.episode_log));
    j["env"] = env_echo(st.env_cfg);
    j["ppo"] = ppo_echo(st.cfg);
    j["timesteps"] = st.timesteps;
    j["updates"] = st.update;
    j["episodes"] = st.episode;
    write_file(report_path(cfg, stem + ".json"), j.dump(2) + "\n");
    std::cout << "trained ppo fold " << k << ": timesteps=" << st.timesteps
              << " episodes=" << st.episode << " checkpoint=" << path << "\n";
  } else {
    DqnConfig dc = cfg.dqn;
    if (timestep_override >= 0) dc.total_timesteps = timestep_override;
    dc.seed = derive_seed(cfg.seed, "train-dqn", (std::uint64_t)k);
    DqnTrainState st;
    if (resume) {
      if (!fs::exists(path))
        throw std::runtime_error("dqn: missing checkpoint " + path +
                                 "; train once without --resume first");
      st = load_dqn_checkpoint(path);
      st.cfg.total_timesteps = dc.total_timesteps;
      dqn_train(st, train, cfg.env);
    } else {
      st = dqn_train(train, dc, cfg.env);
    }
    save_dqn_checkpoint(path, st);
    write_file(report_path(cfg, stem + "-episodes.csv"), dqn_log_csv(st.log));
    j["env"] = env_echo(cfg.env);
    j["dqn"] = dqn_echo(st.cfg);
    j["timesteps"] = st.step;
    j["episodes"] = st.episode;
    write_file(report_path(cfg, stem + ".json"), j.dump(2) + "\n");
    std::cout << "trained dqn fold " << k << ": timesteps=" << st.step
              << " episodes=" << st.episode << " checkpoint=" << path << "\n";
  }
}

void cmd_baselines(const RunConfig& cfg, int fold_flag, const std::string& which) {
  HistoryStore store = load_store(cfg);
  std::vector<Round> all = build_all_rounds(store);
  std::vector<CvFold> folds = temporal_cv_split(store, cfg.n_folds, cfg.gap_days);
  int k = resolve_fold(fold_flag, cfg.n_folds);
  std::vector<Round> train = select_rounds(all, folds[(std::size_t)k].train_rounds);
  std::vector<Round> val = select_rounds(all, folds[(std::size_t)k].validation_rounds);
  std::vector<PlayerLabelled> train_data = label_players(train);
  std::vector<PlayerLabelled> val_data = label_players(val);
  fs::create_directories(cfg.model_dir);
  fs::create_directories(cfg.report_dir);

  std::string csv = "model,accuracy\n";
  if (which == "all" || which == "forest") {
    ForestConfig fc = cfg.forest;
    fc.seed = derive_seed(cfg.seed, "baselines-forest", (std::uint64_t)k);
    ForestModel model = train_forest(train_data, fc);
    write_file(model_json_path(cfg, "forest", k), forest_to_json(model));
    double acc = classification_accuracy(model, val_data);
    csv += "forest," + fmt(acc) + "\n";
    std::cout << "forest fold " << k << ": accuracy=" << fmt(acc) << "\n";
  }
  if (which == "all" || which == "svm") {
    SvmConfig sc = cfg.svm;
    sc.seed = derive_seed(cfg.seed, "baselines-svm", (std::uint64_t)k);
    SvmModel model = train_svm(train_data, sc);
    write_file(model_json_path(cfg, "svm", k), svm_to_json(model));
    double acc = classification_accuracy(model, val_data);
    csv += "svm," + fmt(acc) + "\n";
    std::cout << "svm fold " << k << ": accuracy=" << fmt(acc) << "\n";
  }
  write_file(report_path(cfg, "baselines-fold" + std::to_string(k) + ".csv"), csv);
}

void cmd_evaluate(const RunConfig& cfg, int fold_flag, bool all_folds) {
  HistoryStore store = load_store(cfg);
  std::vector<Round> all = build_all_rounds(store);
  std::vector<CvFold> folds = temporal_cv_split(store, cfg.n_folds, cfg.gap_days);
  std::vector<int> ks;
  if (all_folds)
    for (int k = 0; k < cfg.n_folds; ++k) ks.push_back(k);
  else
    ks.push_back(resolve_fold(fold_flag, cfg.n_folds));
  fs::create_directories(cfg.report_dir);

  std::uint64_t eval_seed = derive_seed(cfg.seed, "evaluate");
  PopulationConfig pc = cfg.pop;
  pc.seed = derive_seed(cfg.seed, "population");

  std::vector<BenchmarkRow> rows;
  for (int k : ks) {
    std::vector<Round> val =
        select_rounds(all, folds[(std::size_t)k].validation_rounds);

    std::string ppo_path = ckpt_path(cfg, "ppo", k);
    if (!fs::exists(ppo_path))
      throw std::runtime_error("ppo: missing checkpoint " + ppo_path +
                               "; run `fantasy train ppo --fold " +
                               std::to_string(k) + "`");
    PpoTrainState pst = load_ppo_checkpoint(ppo_path);

    std::string dqn_path = ckpt_path(cfg, "dqn", k);
    if (!fs::exists(dqn_path))
      throw std::runtime_error("dqn: missing checkpoint " + dqn_path +
                               "; run `fantasy train dqn --fold " +
                               std::to_string(k) + "`");
    DqnTrainState dst = load_dqn_checkpoint(dqn_path);

    std::string forest_path = model_json_path(cfg, "forest", k);
    if (!fs::exists(forest_path))
      throw std::runtime_error("rf: missing model " + forest_path +
                               "; run `fantasy baselines --fold " +
                               std::to_string(k) + "`");
    ForestModel forest = forest_from_json(read_file(forest_path));

    std::string svm_path = model_json_path(cfg, "svm", k);
    if (!fs::exists(svm_path))
      throw std::runtime_error("svm: missing model " + svm_path +
                               "; run `fantasy baselines --fold " +
                               std::to_string(k) + "`");
    SvmModel svm = svm_from_json(read_file(svm_path));

    std::vector<NamedStrategy> strategies;
    strategies.push_back(ppo_strategy(pst.ac, cfg.env.max_steps));
    strategies.push_back(dqn_strategy(dst.policy, cfg.env.max_steps));
    strategies.push_back(static_strategy(
        "rf", [forest](const Round& r) { return forest_team(forest, r); }));
    strategies.push_back(
        static_strategy("svm", [svm](const Round& r) { return svm_team(svm, r); }));
    strategies.push_back(static_strategy("prev-perf", [&store](const Round& r) {
      return previous_performance_team(r, store);
    }));
    strategies.push_back(static_strategy(
        "sel-pct", [](const Round& r) { return selection_percentage_team(r); }));
    strategies.push_back(random_strategy(cfg.env.max_steps));

    std::vector<BenchmarkRow> fold_rows =
        run_benchmark({val}, strategies, pc, cfg.env,
                      derive_seed(eval_seed, "fold", (std::uint64_t)k));
    for (BenchmarkRow& row : fold_rows) {
      row.fold = k;
      rows.push_back(std::move(row));
    }
  }

  std::string csv = benchmark_csv(rows);
  write_file(report_path(cfg, "benchmark.csv"), csv);
  write_file(report_path(cfg, "benchmark.json"),
             benchmark_json(rows, pc, cfg.env, eval_seed) + "\n");
  std::cout << csv;
}

void cmd_sweep_alpha(const RunConfig& cfg, const std::string& alphas_arg,
                     std::int64_t budget) {
  std::vector<double> alphas;
  std::istringstream in(alphas_arg);
  std::string item;
  while (std::getline(in, item, ','))
    alphas.push_back(parse_f64("--alphas", trimmed(item)));

  HistoryStore store = load_store(cfg);
  std::vector<Round> all = build_all_rounds(store);
  std::vector<CvFold> folds = temporal_cv_split(store, cfg.n_folds, cfg.gap_days);
  std::vector<std::pair<std::vector<Round>, std::vector<Round>>> pairs;
  for (const CvFold& f : folds)
    pairs.emplace_back(select_rounds(all, f.train_rounds),
                       select_rounds(all, f.validation_rounds));
  fs::create_directories(cfg.report_dir);

  std::vector<AlphaSweepPoint> points =
      sweep_alpha(alphas, budget, pairs, cfg.ppo, cfg.env,
                  derive_seed(cfg.seed, "sweep-alpha"));
  write_file(report_path(cfg, "alpha-sweep.csv"), sweep_csv(points));
  write_file(report_path(cfg, "alpha-sweep-folds.csv"), sweep_fold_csv(points));
  write_file(report_path(cfg, "alpha-sweep.json"),
             sweep_json(points, budget, cfg.seed) + "\n");
  std::cout << sweep_csv(points);
}

void cmd_report(const RunConfig& cfg, int fold_flag, int bins) {
  HistoryStore store = load_store(cfg);
  std::vector<Round> all = build_all_rounds(store);
  std::vector<CvFold> folds = temporal_cv_split(store, cfg.n_folds, cfg.gap_days);
  int k = resolve_fold(fold_flag, cfg.n_folds);
  std::vector<Round> val = select_rounds(all, folds[(std::size_t)k].validation_rounds);
  fs::create_directories(cfg.report_dir);

  std::string ppo_path = ckpt_path(cfg, "ppo", k);
  if (!fs::exists(ppo_path))
    throw std::runtime_error("ppo: missing checkpoint " + ppo_path +
                             "; run `fantasy train ppo --fold " +
                             std::to_string(k) + "`");
  PpoTrainState st = load_ppo_checkpoint(ppo_path);

  NamedStrategy untrained = random_strategy(cfg.env.max_steps);
  NamedStrategy trained = ppo_strategy(st.ac, cfg.env.max_steps);
  std::uint64_t rs = derive_seed(cfg.seed, "report", (std::uint64_t)k);
  std::vector<double> before, after;
  for (std::size_t r = 0; r < val.size(); ++r) {
    std::uint64_t seed_r = derive_seed(rs, "round", (std::uint64_t)r);
    before.push_back(
        score_ratio(untrained.run(val[r], seed_r).best_team, val[r]));
    after.push_back(score_ratio(trained.run(val[r], seed_r).best_team, val[r]));
  }

  std::string hist = ratio_histogram_csv(before, after, bins);
  write_file(report_path(cfg, "ratio-histogram-fold" + std::to_string(k) + ".csv"),
             hist);

  double mb = 0.0, ma = 0.0;
  for (double v : before) mb += v;
  for (double v : after) ma += v;
  mb /= (double)before.size();
  ma /= (double)after.size();
  nlohmann::json j;
  j["fold"] = k;
  j["global_seed"] = cfg.seed;
  j["bins"] = bins;
  j["validation_rounds"] = val.size();
  j["mean_ratio_before"] = mb;
  j["mean_ratio_after"] = ma;
  write_file(report_path(cfg, "summary-fold" + std::to_string(k) + ".json"),
             j.dump(2) + "\n");
  std::cout << "report fold " << k << ": mean ratio random=" << fmt(mb)
            << " ppo=" << fmt(ma) << "\n";
}

int run(int argc, char** argv) {
  RunConfig cfg;
  std::vector<KeyEntry> registry = build_registry(cfg);
  std::map<std::string, const KeyEntry*> index;
  for (const KeyEntry& e : registry) index[e.key] = &e;
  std::vector<std::pair<const KeyEntry*, std::string>> staged;

  CLI::App app{"fantasy cricket team selection: data generation, swap-based RL "
               "training, baselines, and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path,
                 "config file (flat key = value with [sections]; default from "
                 "FANTASY_CONFIG)");
  bool sequential_flag = false;
  app.add_flag("--sequential", sequential_flag,
               "force single-threaded, bit-exact execution");
  for (const KeyEntry& e : registry) {
    if (e.key == "sequential") continue;
    app.add_option_function<std::string>(
           flag_name(e.key),
           [&staged, eptr = &e](const std::string& v) { staged.emplace_back(eptr, v); },
           e.desc)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
        ->group("config: " + section_of(e.key));
  }

  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic match history");
  gen->fallthrough();

  CLI::App* train = app.add_subcommand("train", "train an agent on a fold");
  train->fallthrough();
  std::string agent;
  train->add_option("agent", agent, "agent to train")
      ->required()
      ->check(CLI::IsMember({"dqn", "ppo"}));
  int train_fold = -1;
  train->add_option("--fold", train_fold, "fold index (default: last fold)");
  std::int64_t timestep_override = -1;
  train->add_option("--total-timesteps", timestep_override,
                    "override the configured training budget");
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the fold's checkpoint");

  CLI::App* baselines =
      app.add_subcommand("baselines", "fit classifier baselines on a fold");
  baselines->fallthrough();
  int base_fold = -1;
  baselines->add_option("--fold", base_fold, "fold index (default: last fold)");
  std::string which = "all";
  baselines->add_option("--model", which, "which baseline to fit")
      ->check(CLI::IsMember({"all", "forest", "svm"}));

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "benchmark all strategies against the simulated population");
  evaluate->fallthrough();
  int eval_fold = -1;
  evaluate->add_option("--fold", eval_fold, "fold index (default: last fold)");
  bool all_folds = false;
  evaluate->add_flag("--all-folds", all_folds, "evaluate every fold");

  CLI::App* sweep =
      app.add_subcommand("sweep-alpha", "train fresh agents across goal thresholds");
  sweep->fallthrough();
  std::string alphas_arg = "0.7,0.8,0.9,1.0";
  sweep->add_option("--alphas", alphas_arg, "comma-separated alpha values");
  std::int64_t budget = 50000;
  sweep->add_option("--budget", budget, "training steps per (alpha, fold) cell");

  CLI::App* report = app.add_subcommand(
      "report", "score-ratio distribution before vs after training");
  report->fallthrough();
  int report_fold = -1;
  report->add_option("--fold", report_fold, "fold index (default: last fold)");
  int bins = 20;
  report->add_option("--bins", bins, "histogram bin count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (config_path.empty()) {
    const char* envp = std::getenv("FANTASY_CONFIG");
    if (envp != nullptr && *envp != '\0') config_path = envp;
  }
  if (!config_path.empty()) apply_config_file(config_path, index);
  for (const auto& [entry, value] : staged) entry->set(value);
  if (sequential_flag) cfg.sequential = true;

  if (gen->parsed()) cmd_gen_data(cfg);
  else if (train->parsed()) cmd_train(cfg, agent, train_fold, timestep_override, resume);
  else if (baselines->parsed()) cmd_baselines(cfg, base_fold, which);
  else if (evaluate->parsed()) cmd_evaluate(cfg, eval_fold, all_folds);
  else if (sweep->parsed()) cmd_sweep_alpha(cfg, alphas_arg, budget);
  else if (report->parsed()) cmd_report(cfg, report_fold, bins);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
