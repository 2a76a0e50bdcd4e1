#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fantasy/data.hpp"
#include "fantasy/eval.hpp"

using namespace fantasy;

namespace {

std::vector<Round> make_rounds(int n, std::uint64_t seed, int players = 66) {
  GeneratorConfig cfg;
  cfg.n_players = players;
  cfg.n_rounds = n + 3;
  cfg.seed = seed;
  HistoryStore store = generate_history(cfg);
  std::vector<Round> rounds = build_all_rounds(store);
  rounds.erase(rounds.begin(), rounds.begin() + 3);
  return rounds;
}

TeamState top_by_form(const Round& round) {
  std::array<int, kRoundPlayers> order;
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double fa = round.features(a, 1), fb = round.features(b, 1);
    if (fa != fb) return fa > fb;
    return a < b;
  });
  std::array<int, kTeamSize> sel;
  std::copy_n(order.begin(), kTeamSize, sel.begin());
  return make_team(sel);
}

}  // namespace

TEST_CASE("population config validation") {
  PopulationConfig cfg;
  REQUIRE_NOTHROW(validate(cfg));

  PopulationConfig small = cfg;
  small.population_size = 99;
  REQUIRE_THROWS_AS(validate(small), std::invalid_argument);

  PopulationConfig unbalanced = cfg;
  unbalanced.greedy_fraction = 0.6;
  REQUIRE_THROWS_AS(validate(unbalanced), std::invalid_argument);

  PopulationConfig negative = cfg;
  negative.greedy_fraction = -0.5;
  negative.random_fraction = 1.5;
  REQUIRE_THROWS_AS(validate(negative), std::invalid_argument);

  PopulationConfig noisy = cfg;
  noisy.rank_noise_sd = -1.0;
  REQUIRE_THROWS_AS(validate(noisy), std::invalid_argument);

  PopulationConfig even = cfg;
  even.greedy_fraction = 0.5;
  even.random_fraction = 0.5;
  REQUIRE_NOTHROW(validate(even));
}

TEST_CASE("zero-noise greedy population collapses to the form leaders") {
  std::vector<Round> rounds = make_rounds(10, 21);
  const Round& round = rounds[5];

  PopulationConfig cfg;
  cfg.population_size = 400;
  cfg.greedy_fraction = 1.0;
  cfg.random_fraction = 0.0;
  cfg.rank_noise_sd = 0.0;
  cfg.seed = 7;

  Population pop = simulate_population(round, cfg);
  REQUIRE(pop.teams.size() == 400);
  REQUIRE(pop.scores.size() == 400);

  TeamState expected = top_by_form(round);
  double expected_score = team_score(expected, round);
  for (const TeamState& team : pop.teams) REQUIRE(team == expected);
  for (double s : pop.scores) REQUIRE(s == expected_score);
}

TEST_CASE("uniform population matches the exact mean team score") {
  std::vector<Round> rounds = make_rounds(6, 33);
  const Round& round = rounds[2];

  PopulationConfig cfg;
  cfg.population_size = 10000;
  cfg.greedy_fraction = 0.0;
  cfg.random_fraction = 1.0;
  cfg.seed = 3;

  Population pop = simulate_population(round, cfg);
  REQUIRE(pop.teams.size() == 10000);

  double total = 0.0;
  for (double p : round.normalized_points) total += p;
  double exact = total * (double)kTeamSize / (double)kRoundPlayers;

  double mean = 0.0;
  for (double s : pop.scores) mean += s;
  mean /= (double)pop.scores.size();

  REQUIRE(std::abs(mean - exact) <= 0.02 * exact);
}

TEST_CASE("population is deterministic per round and seed") {
  std::vector<Round> rounds = make_rounds(6, 5);
  PopulationConfig cfg;
  cfg.population_size = 300;
  cfg.seed = 11;

  Population a = simulate_population(rounds[1], cfg);
  Population b = simulate_population(rounds[1], cfg);
  REQUIRE(a.scores == b.scores);
  REQUIRE(a.teams.size() == b.teams.size());
  for (std::size_t i = 0; i < a.teams.size(); ++i) REQUIRE(a.teams[i] == b.teams[i]);

  Population c = simulate_population(rounds[2], cfg);
  REQUIRE(a.scores != c.scores);

  PopulationConfig reseeded = cfg;
  reseeded.seed = 12;
  Population d = simulate_population(rounds[1], reseeded);
  REQUIRE(a.scores != d.scores);
}

TEST_CASE("mixed population respects the configured fractions") {
  std::vector<Round> rounds = make_rounds(6, 8);
  const Round& round = rounds[3];

  PopulationConfig cfg;
  cfg.population_size = 1000;
  cfg.rank_noise_sd = 0.0;
  cfg.seed = 19;

  Population pop = simulate_population(round, cfg);
  TeamState greedy = top_by_form(round);
  std::int64_t matches = 0;
  for (const TeamState& team : pop.teams) matches += team == greedy ? 1 : 0;
  REQUIRE(matches >= 700);
  REQUIRE(matches <= 710);
}

TEST_CASE("percentile follows the mid-rank convention") {
  std::vector<double> pop{1.0, 2.0, 3.0};
  REQUIRE(percentile(4.0, pop) == 1.0);
  REQUIRE(percentile(0.0, pop) == 0.0);
  REQUIRE(percentile(2.0, pop) == 0.5);

  std::vector<double> ties(8, 5.0);
  REQUIRE(percentile(5.0, ties) == 0.5);

  std::vector<double> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 0.0);
  REQUIRE(percentile(59.5, hundred) == 0.60);

  REQUIRE(percentile(1.0, pop) > percentile(0.5, pop));
  REQUIRE_THROWS_AS(percentile(1.0, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("score ratio extremes match exhaustive enumeration") {
  std::vector<Round> rounds = make_rounds(8, 77);
  const Round& round = rounds[7];

  REQUIRE(score_ratio(dream_team(round), round) == 1.0);

  std::array<int, kTeamSize> idx;
  std::iota(idx.begin(), idx.end(), 0);
  double min_sum = std::numeric_limits<double>::infinity();
  double max_sum = -std::numeric_limits<double>::infinity();
  while (true) {
    double s = 0.0;
    for (int i : idx) s += round.normalized_points[(std::size_t)i];
    min_sum = std::min(min_sum, s);
    max_sum = std::max(max_sum, s);
    int i = kTeamSize - 1;
    while (i >= 0 && idx[(std::size_t)i] == kRoundPlayers - kTeamSize + i) --i;
    if (i < 0) break;
    ++idx[(std::size_t)i];
    for (int j = i + 1; j < kTeamSize; ++j) idx[(std::size_t)j] = idx[(std::size_t)j - 1] + 1;
  }

  double dream = team_score(dream_team(round), round);
  REQUIRE_THAT(max_sum, Catch::Matchers::WithinAbs(dream, 1e-9));

  std::array<int, kRoundPlayers> order;
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double pa = round.normalized_points[(std::size_t)a];
    double pb = round.normalized_points[(std::size_t)b];
    if (pa != pb) return pa < pb;
    return a < b;
  });
  std::array<int, kTeamSize> worst_sel;
  std::copy_n(order.begin(), kTeamSize, worst_sel.begin());
  TeamState worst = make_team(worst_sel);
  REQUIRE_THAT(team_score(worst, round), Catch::Matchers::WithinAbs(min_sum, 1e-9));
  REQUIRE_THAT(score_ratio(worst, round),
               Catch::Matchers::WithinAbs(min_sum / dream, 1e-12));

  Rng rng(4);
  std::vector<int> pick = rng.sample_indices(kRoundPlayers, kTeamSize);
  std::array<int, kTeamSize> sel;
  std::copy_n(pick.begin(), kTeamSize, sel.begin());
  double r = score_ratio(make_team(sel), round);
  REQUIRE(r > min_sum / dream);
  REQUIRE(r < 1.0);
}

TEST_CASE("benchmark produces one row per fold and strategy") {
  std::vector<Round> rounds = make_rounds(24, 101);
  std::vector<std::vector<Round>> folds{
      {rounds.begin() + 12, rounds.begin() + 18},
      {rounds.begin() + 18, rounds.begin() + 24}};

  std::vector<NamedStrategy> strategies;
  strategies.push_back(
      static_strategy("dream", [](const Round& r) { return dream_team(r); }));
  strategies.push_back(static_strategy("fixed", [](const Round&) {
    std::array<int, kTeamSize> sel;
    std::iota(sel.begin(), sel.end(), 0);
    return make_team(sel);
  }));
  strategies.push_back(random_strategy(30));

  PopulationConfig pop_cfg;
  pop_cfg.population_size = 500;
  pop_cfg.seed = 11;
  EnvConfig env_cfg;

  std::vector<BenchmarkRow> rows =
      run_benchmark(folds, strategies, pop_cfg, env_cfg, 42);
  REQUIRE(rows.size() == 6);
  for (int f = 0; f < 2; ++f) {
    REQUIRE(rows[(std::size_t)(3 * f)].strategy == "dream");
    REQUIRE(rows[(std::size_t)(3 * f + 1)].strategy == "fixed");
    REQUIRE(rows[(std::size_t)(3 * f + 2)].strategy == "random");
    for (int s = 0; s < 3; ++s) REQUIRE(rows[(std::size_t)(3 * f + s)].fold == f);
  }

  for (const BenchmarkRow& row : rows) {
    REQUIRE(row.mean_percentile >= 0.0);
    REQUIRE(row.mean_percentile <= 1.0);
    REQUIRE(row.mean_ratio > 0.0);
    REQUIRE(row.mean_ratio <= 1.0);
    REQUIRE(row.goal_rate >= 0.0);
    REQUIRE(row.goal_rate <= 1.0);
    REQUIRE(row.mean_swaps >= 0.0);
    REQUIRE(row.mean_swaps <= 11.0);
  }

  for (int f = 0; f < 2; ++f) {
    const BenchmarkRow& dream = rows[(std::size_t)(3 * f)];
    REQUIRE(dream.mean_ratio == 1.0);
    REQUIRE(dream.goal_rate == 1.0);
    REQUIRE(dream.mean_percentile >= 0.99);
    REQUIRE(dream.mean_percentile >= rows[(std::size_t)(3 * f + 1)].mean_percentile);
    REQUIRE(dream.mean_percentile >= rows[(std::size_t)(3 * f + 2)].mean_percentile);
    REQUIRE(dream.mean_swaps >= 1.0);
    REQUIRE(rows[(std::size_t)(3 * f + 1)].mean_ratio < 1.0);
  }

  std::vector<BenchmarkRow> again =
      run_benchmark(folds, strategies, pop_cfg, env_cfg, 42);
  REQUIRE(benchmark_csv(rows) == benchmark_csv(again));

  REQUIRE_THROWS_AS(run_benchmark({}, strategies, pop_cfg, env_cfg, 42),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(run_benchmark(folds, {}, pop_cfg, env_cfg, 42),
                    std::invalid_argument);
  REQUIRE_THROWS_WITH(
      run_benchmark({std::vector<Round>{}}, strategies, pop_cfg, env_cfg, 42),
      Catch::Matchers::ContainsSubstring("fold"));
}

TEST_CASE("random strategy lands in the losing band against an informed population") {
  std::vector<Round> rounds = make_rounds(30, 404);
  std::vector<std::vector<Round>> folds{{rounds.begin() + 18, rounds.begin() + 30}};

  PopulationConfig pop_cfg;
  pop_cfg.seed = 6;
  EnvConfig env_cfg;

  std::vector<BenchmarkRow> rows = run_benchmark(
      folds, {random_strategy(env_cfg.max_steps)}, pop_cfg, env_cfg, 99);
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].mean_percentile > 0.15);
  REQUIRE(rows[0].mean_percentile < 0.45);
}

TEST_CASE("rl policies run through the benchmark protocol") {
  std::vector<Round> rounds = make_rounds(6, 55);
  std::vector<std::vector<Round>> folds{{rounds.begin() + 3, rounds.begin() + 6}};

  Rng rng(10);
  ActorCritic ac;
  ac.trunk = make_net({kObsDim, 16}, Activation::ReLU, OutputActivation::ReLU, rng);
  ac.policy = make_net({16, kNumActions}, Activation::ReLU, OutputActivation::Softmax, rng);
  ac.value = make_net({16, 1}, Activation::ReLU, OutputActivation::Linear, rng);
  DqnPolicy dqn{make_net({kObsDim, 16, kNumActions}, Activation::ReLU,
                         OutputActivation::Linear, rng),
                ObsNorm{}};

  std::vector<NamedStrategy> strategies{ppo_strategy(ac, 30), dqn_strategy(dqn, 30),
                                        random_strategy(30)};
  PopulationConfig pop_cfg;
  pop_cfg.population_size = 300;
  pop_cfg.seed = 2;
  EnvConfig env_cfg;

  std::vector<BenchmarkRow> rows =
      run_benchmark(folds, strategies, pop_cfg, env_cfg, 7);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[0].strategy == "ppo");
  REQUIRE(rows[1].strategy == "dqn");
  REQUIRE(rows[2].strategy == "random");
  for (const BenchmarkRow& row : rows) {
    REQUIRE(std::isfinite(row.mean_percentile));
    REQUIRE(row.mean_ratio > 0.0);
    REQUIRE(row.mean_ratio <= 1.0);
    REQUIRE(row.mean_swaps <= 11.0);
  }
}

TEST_CASE("benchmark csv and json layout") {
  std::vector<BenchmarkRow> rows{{0, "x", 0.5, 0.25, 1.0, 3.5},
                                 {1, "y", 0.125, 1.0, 0.0, 0.0}};
  std::string expected =
      "fold,strategy,mean_percentile,mean_ratio,goal_rate,mean_swaps\n"
      "0,x,0.5,0.25,1,3.5\n"
      "1,y,0.125,1,0,0\n";
  REQUIRE(benchmark_csv(rows) == expected);

  PopulationConfig pop_cfg;
  EnvConfig env_cfg;
  nlohmann::json j =
      nlohmann::json::parse(benchmark_json(rows, pop_cfg, env_cfg, 31));
  REQUIRE(j["seed"] == 31);
  REQUIRE(j["population"]["population_size"] == 10000);
  REQUIRE(j["population"]["greedy_fraction"] == 0.7);
  REQUIRE(j["env"]["alpha"] == 0.8);
  REQUIRE(j["rows"].size() == 2);
  REQUIRE(j["rows"][0]["strategy"] == "x");
  REQUIRE(j["rows"][1]["mean_ratio"] == 1.0);
}

TEST_CASE("ratio histogram bins and densities") {
  std::vector<double> before{0.1, 0.3, 1.0};
  std::vector<double> after{0.9, 0.95};
  std::string csv = ratio_histogram_csv(before, after, 4);

  double third = 1.0 / (3.0 * 0.25);
  std::string expected = "bin_left,bin_right,density_before,density_after\n";
  expected += fmt(0.0) + "," + fmt(0.25) + "," + fmt(third) + "," + fmt(0.0) + "\n";
  expected += fmt(0.25) + "," + fmt(0.5) + "," + fmt(third) + "," + fmt(0.0) + "\n";
  expected += fmt(0.5) + "," + fmt(0.75) + "," + fmt(0.0) + "," + fmt(0.0) + "\n";
  expected += fmt(0.75) + "," + fmt(1.0) + "," + fmt(third) + "," + fmt(4.0) + "\n";
  REQUIRE(csv == expected);

  std::string halves = ratio_histogram_csv({0.5}, {0.49}, 2);
  std::string want = "bin_left,bin_right,density_before,density_after\n";
  want += fmt(0.0) + "," + fmt(0.5) + "," + fmt(0.0) + "," + fmt(2.0) + "\n";
  want += fmt(0.5) + "," + fmt(1.0) + "," + fmt(2.0) + "," + fmt(0.0) + "\n";
  REQUIRE(halves == want);

  REQUIRE_THROWS_AS(ratio_histogram_csv({}, after, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(ratio_histogram_csv(before, {}, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(ratio_histogram_csv(before, after, 0), std::invalid_argument);
}

TEST_CASE("alpha sweep validation errors") {
  std::vector<Round> rounds = make_rounds(8, 1);
  std::vector<std::pair<std::vector<Round>, std::vector<Round>>> folds{
      {{rounds.begin(), rounds.begin() + 6}, {rounds.begin() + 6, rounds.end()}}};
  PpoConfig ppo;
  EnvConfig env;

  REQUIRE_THROWS_AS(sweep_alpha({}, 100, folds, ppo, env, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(sweep_alpha({0.65}, 100, folds, ppo, env, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sweep_alpha({1.05}, 100, folds, ppo, env, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sweep_alpha({0.8}, 0, folds, ppo, env, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(sweep_alpha({0.8}, 100, {}, ppo, env, 0), std::invalid_argument);

  std::vector<std::pair<std::vector<Round>, std::vector<Round>>> hollow{
      {{rounds.begin(), rounds.begin() + 6}, {}}};
  REQUIRE_THROWS_AS(sweep_alpha({0.8}, 100, hollow, ppo, env, 0),
                    std::invalid_argument);
}

TEST_CASE("alpha sweep tiny run") {
  std::vector<Round> rounds = make_rounds(16, 909);
  std::vector<std::pair<std::vector<Round>, std::vector<Round>>> folds{
      {{rounds.begin(), rounds.begin() + 12}, {rounds.begin() + 12, rounds.end()}}};

  PpoConfig ppo;
  ppo.n_envs = 2;
  ppo.rollout_length = 32;
  ppo.batch_size = 16;
  ppo.n_epochs = 2;
  EnvConfig env;

  std::vector<AlphaSweepPoint> points =
      sweep_alpha({0.7, 0.8, 1.0}, 640, folds, ppo, env, 13);
  REQUIRE(points.size() == 3);
  REQUIRE(points[0].alpha == 0.7);
  REQUIRE(points[1].alpha == 0.8);
  REQUIRE(points[2].alpha == 1.0);
  for (const AlphaSweepPoint& p : points) {
    REQUIRE(p.fold_ratios.size() == 1);
    REQUIRE(p.fold_goal_rates.size() == 1);
    REQUIRE(p.mean_ratio == p.fold_ratios[0]);
    REQUIRE(p.goal_rate == p.fold_goal_rates[0]);
    REQUIRE(p.sd_ratio == 0.0);
    REQUIRE(p.mean_ratio > 0.0);
    REQUIRE(p.mean_ratio <= 1.0);
    REQUIRE(p.goal_rate >= 0.0);
    REQUIRE(p.goal_rate <= 1.0);
  }
  REQUIRE(points[0].goal_rate > points[2].goal_rate);

  std::string csv = sweep_csv(points);
  REQUIRE(csv.rfind("alpha,mean_ratio,sd_ratio,goal_rate\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);

  std::string per_fold = sweep_fold_csv(points);
  REQUIRE(per_fold.rfind("alpha,fold,ratio,goal_rate\n", 0) == 0);
  REQUIRE(std::count(per_fold.begin(), per_fold.end(), '\n') == 4);

  nlohmann::json j = nlohmann::json::parse(sweep_json(points, 640, 13));
  REQUIRE(j["budget"] == 640);
  REQUIRE(j["points"].size() == 3);
  REQUIRE(j["points"][1]["alpha"] == 0.8);
}

TEST_CASE("alpha sweep fold statistics and reproducibility") {
  std::vector<Round> rounds = make_rounds(20, 313);
  std::vector<std::pair<std::vector<Round>, std::vector<Round>>> folds{
      {{rounds.begin(), rounds.begin() + 8}, {rounds.begin() + 8, rounds.begin() + 12}},
      {{rounds.begin(), rounds.begin() + 16}, {rounds.begin() + 16, rounds.end()}}};

  PpoConfig ppo;
  ppo.n_envs = 2;
  ppo.rollout_length = 32;
  ppo.batch_size = 16;
  ppo.n_epochs = 2;
  EnvConfig env;

  std::vector<AlphaSweepPoint> a = sweep_alpha({0.8}, 640, folds, ppo, env, 5);
  std::vector<AlphaSweepPoint> b = sweep_alpha({0.8}, 640, folds, ppo, env, 5);
  REQUIRE(a.size() == 1);
  REQUIRE(a[0].fold_ratios.size() == 2);
  REQUIRE(a[0].fold_goal_rates.size() == 2);
  REQUIRE_THAT(a[0].goal_rate,
               Catch::Matchers::WithinAbs(
                   (a[0].fold_goal_rates[0] + a[0].fold_goal_rates[1]) / 2.0, 1e-15));
  REQUIRE(a[0].fold_ratios == b[0].fold_ratios);
  REQUIRE(a[0].mean_ratio == b[0].mean_ratio);
  REQUIRE(a[0].sd_ratio == b[0].sd_ratio);
  REQUIRE(a[0].goal_rate == b[0].goal_rate);

  double mean = (a[0].fold_ratios[0] + a[0].fold_ratios[1]) / 2.0;
  double var = ((a[0].fold_ratios[0] - mean) * (a[0].fold_ratios[0] - mean) +
                (a[0].fold_ratios[1] - mean) * (a[0].fold_ratios[1] - mean)) /
               2.0;
  REQUIRE_THAT(a[0].mean_ratio, Catch::Matchers::WithinAbs(mean, 1e-15));
  REQUIRE_THAT(a[0].sd_ratio, Catch::Matchers::WithinAbs(std::sqrt(var), 1e-15));

  std::vector<AlphaSweepPoint> c = sweep_alpha({0.8}, 640, folds, ppo, env, 6);
  REQUIRE(a[0].fold_ratios != c[0].fold_ratios);
}
