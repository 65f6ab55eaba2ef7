#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle_utils.hpp"
#include "relex/experiment.hpp"
#include "relex/harness.hpp"
#include "relex/rng.hpp"

using namespace relex;

TEST_CASE("algorithm labels parse and format") {
  CHECK(parse_algorithm("relex").first == Algorithm::kRelex);
  CHECK(parse_algorithm("oracle").first == Algorithm::kOracle);
  CHECK(parse_algorithm("uniform_random").first == Algorithm::kUniformRandom);
  CHECK(parse_algorithm("single:2") == std::pair{Algorithm::kSingle, 2});
  CHECK_THROWS_AS(parse_algorithm("bogus"), std::invalid_argument);
  CHECK(algorithm_label(Algorithm::kSingle, 1) == "single1");
}

TEST_CASE("oracle runs have exactly zero regret") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig config;
  config.algorithm = Algorithm::kOracle;
  config.episodes = 100;
  const RunResult result = run_experiment(spec, cls, config);
  REQUIRE(result.records.rows.size() == 100);
  for (const auto& row : result.records.rows) {
    CHECK(row.ep_regret == 0.0);
    CHECK(row.gap_sum == 0.0);
  }
  CHECK(result.phase.has_k_star);
  CHECK(result.phase.k_star_hat == 1);
  CHECK(result.phase.flatness_ratio == 0.0);
}

TEST_CASE("uniform play on m1 regrets exactly 1.25 per episode") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig config;
  config.algorithm = Algorithm::kUniformRandom;
  config.episodes = 500;
  config.seed = 3;
  const RunResult result = run_experiment(spec, cls, config);
  double mean = 0.0;
  for (const auto& row : result.records.rows) {
    CHECK(row.ep_regret == doctest::Approx(1.25).epsilon(1e-12));
    mean += row.ep_regret;
  }
  CHECK(mean / 500 == doctest::Approx(1.25).epsilon(1e-12));
  // the exact table behind it
  const auto values = uniform_policy_values(spec);
  CHECK(values[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("relex on m1 converges to zero per-episode regret in most seeds") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  int converged = 0;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  for (std::uint64_t seed : seeds) {
    RunConfig config;
    config.episodes = 2000;
    config.seed = seed;
    config.audit_stride = 500;
    const RunResult result = run_experiment(spec, cls, config);
    CHECK(std::isfinite(result.records.rows.back().cum_regret));
    for (const auto& row : result.records.rows) CHECK(row.ep_regret >= -1e-9);
    for (std::size_t i = 1; i < result.records.rows.size(); ++i)
      CHECK(result.records.rows[i].cum_regret >= result.records.rows[i - 1].cum_regret);
    if (result.phase.has_k_star) ++converged;
  }
  CHECK(converged >= 18);
}

TEST_CASE("phase detection on synthetic records") {
  RegretRecord record;
  for (long k = 1; k <= 100; ++k) {
    EpisodeRow row;
    row.episode = k;
    row.ep_regret = k <= 5 ? 1.0 : 0.0;
    record.rows.push_back(row);
  }
  const PhaseReport phase = detect_phase(record);
  CHECK_FALSE(phase.insufficient);
  CHECK(phase.has_k_star);
  CHECK(phase.k_star_hat == 6);
  CHECK(phase.early_mean == doctest::Approx(0.5));  // first 10 episodes
  CHECK(phase.late_mean == 0.0);
  CHECK(phase.flatness_ratio == 0.0);

  // pure function: same input, same output
  const PhaseReport again = detect_phase(record);
  CHECK(again.k_star_hat == phase.k_star_hat);
  CHECK(again.flatness_ratio == phase.flatness_ratio);

  record.rows.back().ep_regret = 0.5;
  CHECK_FALSE(detect_phase(record).has_k_star);

  RegretRecord tiny;
  for (long k = 1; k <= 5; ++k) {
    EpisodeRow row;
    row.episode = k;
    tiny.rows.push_back(row);
  }
  CHECK(detect_phase(tiny).insufficient);
}

TEST_CASE("optimism audit sees no violations with exact values and zero width") {
  ClusterParams params;
  const auto [spec, cls] = make_cluster_instance(params, 41);
  const OptimalSolution sol = solve_optimal(spec);
  LearnerState state = init_state(cls);
  for (std::size_t m = 0; m < cls.maps.size(); ++m)
    for (int h = 0; h < cls.horizon; ++h)
      state.at(static_cast<int>(m), h).estimate = cls.models[m].per_step[h];
  BetaSchedule schedule = BetaSchedule::make(cls, 1.0, 0.1);
  schedule.c = 0.0;

  OptimismAudit audit(sol);
  audit.observe(backward_pass(state, spec, cls, schedule, 1));
  CHECK(audit.violations() == 0);
  CHECK(audit.cells() == cls.horizon * cls.num_states * cls.num_actions);
}

TEST_CASE("optimism audit sees no violations under a huge width") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  const OptimalSolution sol = solve_optimal(spec);
  const LearnerState state = init_state(cls);
  const BetaSchedule schedule = BetaSchedule::make(cls, 1e6, 0.1);
  OptimismAudit audit(sol);
  audit.observe(backward_pass(state, spec, cls, schedule, 1));
  CHECK(audit.violations() == 0);
}

TEST_CASE("a vanishing confidence width produces optimism violations") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig config;
  config.episodes = 200;
  config.c = 1e-6;
  config.seed = 5;
  const RunResult result = run_experiment(spec, cls, config);
  CHECK(result.audit.optimism_violations > 0);
}

TEST_CASE("relex with the default width keeps optimism on m1") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig config;
  config.episodes = 2000;
  config.c = 1.0;
  config.seed = 11;
  const RunResult result = run_experiment(spec, cls, config);
  CHECK(result.audit.optimism_fraction <= 1e-6);
}

TEST_CASE("covariance audit starts at the identity floor and counts one-hot visits") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  const OptimalSolution sol = solve_optimal(spec);
  const CoverageReport coverage = coverage_check(cls, spec, sol);
  const BetaSchedule schedule = BetaSchedule::make(cls, 0.5, 0.1);
  LearnerState state = init_state(cls);

  CovarianceGrowthAudit audit(coverage);
  audit.observe(1, state);
  for (const auto& sample : audit.samples()) {
    CHECK(sample.projected_min_eig >= 1.0 - 1e-12);
    CHECK(sample.pass);
  }

  // whenever an episode plays the optimal action at (h=0, s0), the matching
  // one-hot diagonal entry grows by exactly one
  auto init_rng = named_stream(21, "init_state");
  auto trans_rng = named_stream(21, "transition");
  long on_policy_episodes = 0;
  bool previous_optimal = false;
  double previous_diag = 1.0;
  for (long k = 1; k <= 800; ++k) {
    const EpisodePlan plan = backward_pass(state, spec, cls, schedule, k);
    const double diag = state.at(0, 0).covariance(0, 0);
    if (previous_optimal) {
      CHECK(diag == previous_diag + 1.0);
      ++on_policy_episodes;
    }
    previous_optimal = plan.policy.at(0, 0) == sol.pi_star.at(0, 0);
    previous_diag = diag;
    update_regression(state, cls, sample_episode(spec, plan.policy, init_rng, trans_rng, k));
  }
  CHECK(on_policy_episodes > 400);
}

TEST_CASE("bonus decay audit: frozen statistics follow the width drift") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  const BetaSchedule schedule = BetaSchedule::make(cls, 0.5, 0.1);
  const LearnerState state = init_state(cls);  // never updated

  BonusDecayAudit audit(cls, schedule);
  std::vector<double> xs, ys;
  for (long k = 100; k <= 2000; k += 50) {
    audit.observe(k, state);
    xs.push_back(std::log(static_cast<double>(k)));
    ys.push_back(0.5 * std::log(schedule.beta(k, 0)));
  }
  const auto slope = audit.fitted_slope(100);
  REQUIRE(slope.has_value());

  // expected slope comes from fitting the width term on the same grid
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double expected = sxy / sxx;
  CHECK(std::abs(*slope - expected) < 0.02);
  CHECK(*slope > 0.0);
  CHECK(*slope < 0.15);
}

TEST_CASE("linearly growing covariance shrinks the bonus by sqrt two per doubling") {
  Eigen::VectorXd phi(3);
  phi << 1.0, 0.0, 0.0;
  const double beta = 9.0;
  auto bonus_at = [&](long k) {
    Eigen::MatrixXd u = Eigen::MatrixXd::Identity(3, 3);
    u += static_cast<double>(k) * phi * phi.transpose();
    return bonus(phi, u.inverse(), beta, 1.5, 3);
  };
  for (long k : {100L, 500L, 2000L}) {
    const double ratio = bonus_at(2 * k) / bonus_at(k);
    CHECK(std::abs(ratio * std::sqrt(2.0) - 1.0) < 0.05);
  }
}

TEST_CASE("regret stays below the gap-sum bound on m1") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig config;
  config.episodes = 500;
  config.seed = 7;
  const RunResult result = run_experiment(spec, cls, config);
  CHECK(result.audit.gap_bound_ok);
  CHECK(result.audit.gap_bound_lhs <= result.audit.gap_bound_rhs);
}

TEST_CASE("exact policy evaluation matches Monte Carlo replays") {
  auto gen = named_stream(55, "generator");
  const MdpSpec spec = testing::random_mdp(3, 2, 3, gen);
  const RepresentationClass cls = make_tabular_class(spec);
  const BetaSchedule schedule = BetaSchedule::make(cls, 0.5, 0.1);
  const OptimalSolution sol = solve_optimal(spec);
  LearnerState state = init_state(cls);
  auto init_rng = named_stream(23, "init_state");
  auto trans_rng = named_stream(23, "transition");

  for (long k = 1; k <= 50; ++k) {
    const EpisodePlan plan = backward_pass(state, spec, cls, schedule, k);
    const Trajectory trajectory = sample_episode(spec, plan.policy, init_rng, trans_rng, k);
    if (k == 1 || k == 25 || k == 50) {
      const PolicyValues values = evaluate_policy(spec, plan.policy);
      const int s1 = trajectory.steps.front().state;
      const long replays = 100000;
      double sum = 0.0, sum_sq = 0.0;
      auto replay_rng = named_stream(1000 + k, "transition");
      for (long i = 0; i < replays; ++i) {
        int s = s1;
        double ret = 0.0;
        for (int h = 0; h < spec.horizon; ++h) {
          const int a = plan.policy.at(h, s);
          ret += spec.reward(h, s, a);
          std::span<const double> row(&spec.transitions[spec.transition_index(h, s, a, 0)],
                                      static_cast<std::size_t>(spec.num_states));
          s = sample_categorical(replay_rng, row);
        }
        sum += ret;
        sum_sq += ret * ret;
      }
      const double mean = sum / replays;
      const double var = std::max(sum_sq / replays - mean * mean, 1e-12);
      const double se = std::sqrt(var / replays);
      CHECK(std::abs(values.v_at(0, s1) - mean) < 5 * se + 1e-9);
    }
    update_regression(state, cls, trajectory);
  }
}

TEST_CASE("single-map baseline follows the identical code path") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  RunConfig relex_config;
  relex_config.episodes = 300;
  relex_config.seed = 9;
  RunConfig single_config = relex_config;
  single_config.algorithm = Algorithm::kSingle;
  single_config.single_map_index = 0;

  const RunResult a = run_experiment(spec, cls, relex_config);
  const RunResult b = run_experiment(spec, cls, single_config);
  REQUIRE(a.records.rows.size() == b.records.rows.size());
  for (std::size_t i = 0; i < a.records.rows.size(); ++i)
    CHECK(episode_row_csv(a.records.rows[i]) == episode_row_csv(b.records.rows[i]));
}

TEST_CASE("compare_baselines with one map has unit ratio") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  const BaselineComparison comparison =
      compare_baselines(spec, cls, 200, {1, 2, 3}, 0.5, 0.1, 2);
  CHECK(comparison.ratio_finite);
  CHECK(comparison.ratio == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("duplicated maps produce identical baselines") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  const RepresentationClass doubled = subset_class(cls, {0, 0});
  const BaselineComparison comparison =
      compare_baselines(spec, doubled, 150, {4, 5}, 0.5, 0.1, 2);
  REQUIRE(comparison.single_medians.size() == 2);
  CHECK(comparison.single_medians[0] == comparison.single_medians[1]);
}

TEST_CASE("epsilon-greedy rollouts visit off-policy pairs") {
  const MdpSpec spec = make_m1();
  const OptimalSolution sol = solve_optimal(spec);
  auto init_rng = named_stream(61, "init_state");
  auto trans_rng = named_stream(61, "transition");
  long off_policy = 0;
  for (long k = 1; k <= 500; ++k) {
    const Trajectory t =
        sample_episode_epsilon_greedy(spec, sol.pi_star, 0.3, init_rng, trans_rng, k);
    for (const auto& step : t.steps)
      if (step.action != sol.pi_star.at(step.h, step.state)) ++off_policy;
  }
  CHECK(off_policy > 50);
}

TEST_CASE("run_experiment validates its inputs") {
  const MdpSpec spec = make_m1();
  const RepresentationClass cls = make_tabular_class(spec);
  MdpSpec other = make_m1();
  other.rewards[other.reward_index(0, 0, 1)] = 0.25;  // class no longer matches transitions? rewards do not matter
  RunConfig config;
  config.episodes = 10;
  // mismatched shapes are rejected
  MdpSpec bigger;
  bigger.num_states = 3;
  bigger.num_actions = 2;
  bigger.horizon = 2;
  bigger.rewards.assign(12, 0.0);
  bigger.transitions.assign(36, 0.0);
  for (int h = 0; h < 2; ++h)
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a) bigger.transitions[bigger.transition_index(h, s, a, 0)] = 1.0;
  bigger.init_dist = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(run_experiment(bigger, cls, config), std::invalid_argument);
  CHECK_THROWS_AS([&] {
    RunConfig bad = config;
    bad.delta = 2.0;
    run_experiment(spec, cls, bad);
  }(), std::invalid_argument);
}
