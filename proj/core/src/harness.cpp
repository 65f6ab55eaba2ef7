#include "relex/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "relex/rng.hpp"

namespace relex {

using nlohmann::json;

namespace {

constexpr double kRegretFloor = -1e-9;
constexpr double kNonzeroRegret = 1e-9;
constexpr double kOptimismTol = 1e-8;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

json finite_or_string(double value) {
  if (std::isfinite(value)) return value;
  return value > 0 ? "inf" : "-inf";
}

}  // namespace

std::string algorithm_label(Algorithm alg, int single_index) {
  switch (alg) {
    case Algorithm::kRelex:
      return "relex";
    case Algorithm::kSingle:
      return "single" + std::to_string(single_index);
    case Algorithm::kOracle:
      return "oracle";
    case Algorithm::kUniformRandom:
      return "uniform";
  }
  return "unknown";
}

std::pair<Algorithm, int> parse_algorithm(const std::string& text) {
  if (text == "relex") return {Algorithm::kRelex, 0};
  if (text == "oracle") return {Algorithm::kOracle, 0};
  if (text == "uniform_random") return {Algorithm::kUniformRandom, 0};
  if (text.rfind("single:", 0) == 0) {
    const int idx = std::stoi(text.substr(7));
    if (idx < 0) throw std::invalid_argument("algorithm: negative map index");
    return {Algorithm::kSingle, idx};
  }
  throw std::invalid_argument("unknown algorithm '" + text + "'");
}

PhaseReport detect_phase(const RegretRecord& record) {
  PhaseReport report;
  const auto& rows = record.rows;
  report.insufficient = rows.size() < 10;
  if (rows.empty()) return report;

  long last_nonzero = 0;
  for (const auto& row : rows)
    if (row.ep_regret > kNonzeroRegret) last_nonzero = row.episode;
  if (rows.back().ep_regret > kNonzeroRegret) {
    report.has_k_star = false;
  } else {
    report.has_k_star = true;
    report.k_star_hat = last_nonzero + 1;
  }

  const std::size_t n = rows.size();
  const std::size_t early_count = std::max<std::size_t>(1, n / 10);
  const std::size_t late_count = std::max<std::size_t>(1, n / 5);
  double early = 0.0, late = 0.0;
  for (std::size_t i = 0; i < early_count; ++i) early += rows[i].ep_regret;
  for (std::size_t i = n - late_count; i < n; ++i) late += rows[i].ep_regret;
  report.early_mean = early / early_count;
  report.late_mean = late / late_count;
  if (report.early_mean == 0.0) {
    report.flatness_finite = report.late_mean == 0.0;
    report.flatness_ratio = report.flatness_finite ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    report.flatness_finite = true;
    report.flatness_ratio = report.late_mean / report.early_mean;
  }
  return report;
}

void OptimismAudit::observe(const EpisodePlan& plan) {
  for (int h = 0; h < plan.horizon; ++h)
    for (int s = 0; s < plan.num_states; ++s)
      for (int a = 0; a < plan.num_actions; ++a) {
        ++cells_;
        if (plan.q_at(h, s, a) < solution_->q(h, s, a) - kOptimismTol) ++violations_;
      }
}

void CovarianceGrowthAudit::observe(long episode, const LearnerState& state) {
  for (int m = 0; m < coverage_->num_maps; ++m) {
    for (int h = 0; h < coverage_->horizon; ++h) {
      const CoverageEntry& entry = coverage_->entry(h, m);
      if (entry.degenerate) continue;
      const Eigen::MatrixXd projected = entry.retained_basis.transpose() *
                                        state.at(m, h).covariance * entry.retained_basis;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(projected);
      CovarianceSample sample;
      sample.episode = episode;
      sample.map = m;
      sample.h = h;
      sample.projected_min_eig = es.eigenvalues().minCoeff();
      sample.reference = coverage_->sigma[m] * static_cast<double>(episode - 1);
      sample.pass = sample.projected_min_eig >= 0.5 * sample.reference;
      samples_.push_back(sample);
    }
  }
}

double CovarianceGrowthAudit::pass_fraction(long burn_in) const {
  long total = 0, passed = 0;
  for (const auto& sample : samples_) {
    if (sample.episode < burn_in) continue;
    ++total;
    if (sample.pass) ++passed;
  }
  return total == 0 ? 1.0 : static_cast<double>(passed) / total;
}

void BonusDecayAudit::observe(long episode, const LearnerState& state) {
  const int num_maps = static_cast<int>(cls_->maps.size());
  const int sa = cls_->num_states * cls_->num_actions;
  double max_min = 0.0;
  Eigen::VectorXd min_bonus(sa);
  for (int h = 0; h < cls_->horizon; ++h) {
    min_bonus.setConstant(std::numeric_limits<double>::infinity());
    for (int m = 0; m < num_maps; ++m) {
      const double beta = schedule_->beta(episode, m);
      const double scale = schedule_->c_psi * cls_->horizon;
      const Eigen::MatrixXd& phi = cls_->maps[m].table;
      const Eigen::MatrixXd weighted = phi * state.at(m, h).covariance_inv;
      for (int row = 0; row < sa; ++row) {
        const double quad = std::max(weighted.row(row).dot(phi.row(row)), 0.0);
        min_bonus(row) = std::min(min_bonus(row), scale * std::sqrt(beta * quad));
      }
    }
    max_min = std::max(max_min, min_bonus.maxCoeff());
  }
  samples_.push_back({episode, max_min});
}

std::optional<double> BonusDecayAudit::fitted_slope(long from_episode) const {
  std::vector<double> xs, ys;
  for (const auto& sample : samples_) {
    if (sample.episode < from_episode || sample.max_min_bonus <= 0.0) continue;
    xs.push_back(std::log(static_cast<double>(sample.episode)));
    ys.push_back(std::log(sample.max_min_bonus));
  }
  if (xs.size() < 3) return std::nullopt;
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
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

Trajectory sample_episode_epsilon_greedy(const MdpSpec& spec, const PolicyTable& base,
                                         double epsilon, std::mt19937_64& init_rng,
                                         std::mt19937_64& transition_rng, long episode) {
  Trajectory trajectory;
  trajectory.episode = episode;
  trajectory.steps.reserve(spec.horizon);
  int s = sample_categorical(init_rng, std::span<const double>(spec.init_dist));
  for (int h = 0; h < spec.horizon; ++h) {
    int a = base.at(h, s);
    if (uniform01(transition_rng) < epsilon)
      a = std::min(static_cast<int>(uniform01(transition_rng) * spec.num_actions),
                   spec.num_actions - 1);
    const double r = spec.reward(h, s, a);
    std::span<const double> row(&spec.transitions[spec.transition_index(h, s, a, 0)],
                                static_cast<std::size_t>(spec.num_states));
    const int next = sample_categorical(transition_rng, row);
    trajectory.steps.push_back({h, s, a, r, next});
    s = next;
  }
  return trajectory;
}

std::vector<double> uniform_policy_values(const MdpSpec& spec) {
  const int S = spec.num_states, A = spec.num_actions, H = spec.horizon;
  std::vector<double> v(static_cast<std::size_t>(H) * S, 0.0);
  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double mean = 0.0;
      for (int a = 0; a < A; ++a) {
        double q = spec.reward(h, s, a);
        if (h + 1 < H)
          for (int next = 0; next < S; ++next)
            q += spec.transition(h, s, a, next) * v[static_cast<std::size_t>(h + 1) * S + next];
        mean += q;
      }
      v[static_cast<std::size_t>(h) * S + s] = mean / A;
    }
  }
  return v;
}

namespace {

Trajectory sample_episode_uniform(const MdpSpec& spec, std::mt19937_64& init_rng,
                                  std::mt19937_64& transition_rng, long episode) {
  Trajectory trajectory;
  trajectory.episode = episode;
  trajectory.steps.reserve(spec.horizon);
  int s = sample_categorical(init_rng, std::span<const double>(spec.init_dist));
  for (int h = 0; h < spec.horizon; ++h) {
    const int a = std::min(static_cast<int>(uniform01(transition_rng) * spec.num_actions),
                           spec.num_actions - 1);
    const double r = spec.reward(h, s, a);
    std::span<const double> row(&spec.transitions[spec.transition_index(h, s, a, 0)],
                                static_cast<std::size_t>(spec.num_states));
    const int next = sample_categorical(transition_rng, row);
    trajectory.steps.push_back({h, s, a, r, next});
    s = next;
  }
  return trajectory;
}

struct Snapshot {
  long episode = 0;
  double cum_regret = 0.0;
  double cum_regret_rho = 0.0;
  std::string init_rng;
  std::string transition_rng;
  bool has_learner = false;
  LearnerState learner;
};

void write_snapshot(const std::string& path, const RunConfig& config, const Snapshot& snap) {
  json j{{"algorithm", algorithm_label(config.algorithm, config.single_map_index)},
         {"seed", config.seed},
         {"episode", snap.episode},
         {"cum_regret", snap.cum_regret},
         {"cum_regret_rho", snap.cum_regret_rho},
         {"init_rng", snap.init_rng},
         {"transition_rng", snap.transition_rng}};
  if (snap.has_learner)
    j["learner"] = json::parse(learner_to_json_string(snap.learner));
  else
    j["learner"] = nullptr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Snapshot read_snapshot(const std::string& path, const RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  json j = json::parse(buffer.str());
  Snapshot snap;
  const std::string label = j.at("algorithm").get<std::string>();
  if (label != algorithm_label(config.algorithm, config.single_map_index))
    throw std::invalid_argument("checkpoint algorithm '" + label + "' does not match the run config");
  if (j.at("seed").get<std::uint64_t>() != config.seed)
    throw std::invalid_argument("checkpoint seed does not match the run config");
  snap.episode = j.at("episode").get<long>();
  snap.cum_regret = j.at("cum_regret").get<double>();
  snap.cum_regret_rho = j.at("cum_regret_rho").get<double>();
  snap.init_rng = j.at("init_rng").get<std::string>();
  snap.transition_rng = j.at("transition_rng").get<std::string>();
  if (!j.at("learner").is_null()) {
    snap.has_learner = true;
    snap.learner = learner_from_json_string(j.at("learner").dump());
  }
  return snap;
}

}  // namespace

RunResult run_experiment(const MdpSpec& spec, const RepresentationClass& cls,
                         const RunConfig& config) {
  const auto check = validate_mdp(spec);
  if (!check.ok()) throw std::invalid_argument("run_experiment: invalid spec: " + check.summary());
  if (config.episodes < 1) throw std::invalid_argument("run_experiment: episodes must be >= 1");
  if (config.delta <= 0.0 || config.delta >= 1.0)
    throw std::invalid_argument("run_experiment: delta must be in (0, 1)");

  const bool uses_learner =
      config.algorithm == Algorithm::kRelex || config.algorithm == Algorithm::kSingle;

  RepresentationClass single_view;
  const RepresentationClass* run_cls = &cls;
  if (config.algorithm == Algorithm::kSingle) {
    single_view = subset_class(cls, {config.single_map_index});
    run_cls = &single_view;
  }

  const OptimalSolution solution = solve_optimal(spec);

  std::optional<BetaSchedule> schedule;
  std::optional<LearnerState> learner;
  std::optional<CoverageReport> coverage;
  std::optional<OptimismAudit> optimism;
  std::optional<CovarianceGrowthAudit> cov_audit;
  std::optional<BonusDecayAudit> bonus_audit;

  if (uses_learner) {
    if (run_cls->num_states != spec.num_states || run_cls->num_actions != spec.num_actions ||
        run_cls->horizon != spec.horizon)
      throw std::invalid_argument("run_experiment: class shape does not match the instance");
    if (bilinear_residual(spec, *run_cls) > 1e-9)
      throw std::invalid_argument("run_experiment: class does not factor the instance exactly");
    schedule = BetaSchedule::make(*run_cls, config.c, config.delta);
    learner = init_state(*run_cls);
    coverage = coverage_check(*run_cls, spec, solution, config.rank_tol);
    optimism.emplace(solution);
    cov_audit.emplace(*coverage);
    bonus_audit.emplace(*run_cls, *schedule);
  }

  std::mt19937_64 init_rng = named_stream(config.seed, "init_state");
  std::mt19937_64 transition_rng = named_stream(config.seed, "transition");

  long start_episode = 0;
  double cum_regret = 0.0;
  double cum_regret_rho = 0.0;
  if (!config.resume_path.empty()) {
    Snapshot snap = read_snapshot(config.resume_path, config);
    start_episode = snap.episode;
    cum_regret = snap.cum_regret;
    cum_regret_rho = snap.cum_regret_rho;
    init_rng = rng_from_state_string(snap.init_rng);
    transition_rng = rng_from_state_string(snap.transition_rng);
    if (uses_learner) {
      if (!snap.has_learner) throw std::invalid_argument("checkpoint has no learner state");
      learner = std::move(snap.learner);
    }
  }
  const double cum_regret_start = cum_regret;

  std::vector<double> uniform_values;
  if (config.algorithm == Algorithm::kUniformRandom) uniform_values = uniform_policy_values(spec);

  RunResult result;
  result.first_episode = start_episode + 1;
  result.records.horizon = spec.horizon;
  if (uses_learner)
    for (int h = 0; h < spec.horizon; ++h)
      for (std::size_t m = 0; m < run_cls->maps.size(); ++m)
        result.records.chosen_labels.push_back("h" + std::to_string(h) + "_m" + std::to_string(m) +
                                               "_" + run_cls->maps[m].name);

  const long last = config.episodes;
  const long stride = std::max<long>(1, config.audit_stride);
  double gap_total = 0.0;

  for (long k = start_episode + 1; k <= last; ++k) {
    EpisodePlan plan;
    Trajectory trajectory;
    double exec_v1_realized = 0.0;
    double exec_v1_rho = 0.0;

    if (uses_learner) {
      plan = backward_pass(*learner, spec, *run_cls, *schedule, k);
      if (config.audits_enabled) {
        optimism->observe(plan);
        if (k == 1 || k == last || k % stride == 0) {
          cov_audit->observe(k, *learner);
          bonus_audit->observe(k, *learner);
        }
      }
      trajectory = sample_episode(spec, plan.policy, init_rng, transition_rng, k);
      const PolicyValues values = evaluate_policy(spec, plan.policy);
      exec_v1_realized = values.v_at(0, trajectory.steps.front().state);
      for (int s = 0; s < spec.num_states; ++s) exec_v1_rho += spec.init_dist[s] * values.v_at(0, s);
    } else if (config.algorithm == Algorithm::kOracle) {
      trajectory = sample_episode(spec, solution.pi_star, init_rng, transition_rng, k);
      const PolicyValues values = evaluate_policy(spec, solution.pi_star);
      exec_v1_realized = values.v_at(0, trajectory.steps.front().state);
      for (int s = 0; s < spec.num_states; ++s) exec_v1_rho += spec.init_dist[s] * values.v_at(0, s);
    } else {
      trajectory = sample_episode_uniform(spec, init_rng, transition_rng, k);
      exec_v1_realized = uniform_values[trajectory.steps.front().state];
      for (int s = 0; s < spec.num_states; ++s) exec_v1_rho += spec.init_dist[s] * uniform_values[s];
    }

    EpisodeRow row;
    row.episode = k;
    row.init_state = trajectory.steps.front().state;
    row.ep_regret = solution.v(0, row.init_state) - exec_v1_realized;
    if (row.ep_regret < kRegretFloor)
      throw std::logic_error("run_experiment: negative per-episode regret");
    double v_rho = 0.0;
    for (int s = 0; s < spec.num_states; ++s) v_rho += spec.init_dist[s] * solution.v(0, s);
    row.ep_regret_rho = v_rho - exec_v1_rho;
    cum_regret += row.ep_regret;
    cum_regret_rho += row.ep_regret_rho;
    row.cum_regret = cum_regret;
    row.cum_regret_rho = cum_regret_rho;
    for (const auto& step : trajectory.steps) row.gap_sum += solution.gap(step.h, step.state, step.action);
    gap_total += row.gap_sum;

    if (uses_learner) {
      row.chosen_counts.assign(result.records.chosen_labels.size(), 0);
      for (int h = 0; h < spec.horizon; ++h)
        for (int s = 0; s < spec.num_states; ++s)
          for (int a = 0; a < spec.num_actions; ++a)
            ++row.chosen_counts[static_cast<std::size_t>(h) * run_cls->maps.size() +
                                plan.chosen_at(h, s, a)];
      update_regression(*learner, *run_cls, trajectory);
    }

    result.records.rows.push_back(std::move(row));

    if (config.checkpoint_episode == k && !config.checkpoint_path.empty()) {
      Snapshot snap;
      snap.episode = k;
      snap.cum_regret = cum_regret;
      snap.cum_regret_rho = cum_regret_rho;
      snap.init_rng = rng_state_string(init_rng);
      snap.transition_rng = rng_state_string(transition_rng);
      if (uses_learner) {
        snap.has_learner = true;
        snap.learner = *learner;
      }
      write_snapshot(config.checkpoint_path, config, snap);
    }
  }

  AuditReport& audit = result.audit;
  if (uses_learner) {
    audit.optimism_cells = optimism->cells();
    audit.optimism_violations = optimism->violations();
    audit.optimism_fraction = optimism->fraction();
    audit.covariance = cov_audit->samples();
    audit.covariance_burn_in = config.episodes / 4;
    audit.covariance_pass_fraction_late = cov_audit->pass_fraction(audit.covariance_burn_in);
    audit.bonus = bonus_audit->samples();
    const auto slope = bonus_audit->fitted_slope(config.episodes / 2);
    audit.bonus_slope_valid = slope.has_value();
    audit.bonus_slope_late = slope.value_or(0.0);
  }
  const double played = static_cast<double>(result.records.rows.size());
  if (solution.all_gaps_zero) {
    audit.gap_audits_skipped = true;  // every action is optimal, nothing to bound
  } else if (played > 0 && config.audits_enabled) {
    const double h = spec.horizon;
    audit.gap_bound_lhs = cum_regret - cum_regret_start;
    audit.gap_bound_rhs = 2.0 * gap_total +
                          16.0 * h * h / 3.0 *
                              std::log((1.0 + std::log(h * played)) * played * played / config.delta) +
                          2.0;
    audit.gap_bound_ok = audit.gap_bound_lhs <= audit.gap_bound_rhs;
  }

  result.phase = detect_phase(result.records);
  return result;
}

BaselineComparison compare_baselines(const MdpSpec& spec, const RepresentationClass& cls,
                                     long episodes, const std::vector<std::uint64_t>& seeds,
                                     double c, double delta, int jobs) {
  if (!cls.fitted()) throw std::invalid_argument("compare_baselines: class has no fitted models");
  if (seeds.empty()) throw std::invalid_argument("compare_baselines: no seeds");
  const int num_maps = static_cast<int>(cls.maps.size());
  const int num_algs = 1 + num_maps;
  const int n = num_algs * static_cast<int>(seeds.size());
  std::vector<double> final_regret(n, 0.0);

  parallel_for(n, jobs, [&](int idx) {
    const int alg = idx / static_cast<int>(seeds.size());
    const std::size_t seed_idx = idx % seeds.size();
    RunConfig config;
    config.algorithm = alg == 0 ? Algorithm::kRelex : Algorithm::kSingle;
    config.single_map_index = alg == 0 ? 0 : alg - 1;
    config.episodes = episodes;
    config.seed = seeds[seed_idx];
    config.c = c;
    config.delta = delta;
    config.audits_enabled = false;
    const RunResult result = run_experiment(spec, cls, config);
    final_regret[idx] = result.records.rows.empty() ? 0.0 : result.records.rows.back().cum_regret;
  });

  auto median_of = [&](int alg) {
    std::vector<double> values(final_regret.begin() + alg * seeds.size(),
                               final_regret.begin() + (alg + 1) * seeds.size());
    std::sort(values.begin(), values.end());
    const std::size_t n2 = values.size();
    return n2 % 2 == 1 ? values[n2 / 2] : 0.5 * (values[n2 / 2 - 1] + values[n2 / 2]);
  };

  BaselineComparison comparison;
  comparison.relex_median = median_of(0);
  comparison.min_single_median = std::numeric_limits<double>::infinity();
  for (int m = 0; m < num_maps; ++m) {
    comparison.single_medians.push_back(median_of(1 + m));
    comparison.min_single_median = std::min(comparison.min_single_median, comparison.single_medians.back());
  }
  if (comparison.min_single_median > 0.0) {
    comparison.ratio = comparison.relex_median / comparison.min_single_median;
    comparison.ratio_finite = true;
  } else if (comparison.relex_median == 0.0) {
    comparison.ratio = 1.0;
    comparison.ratio_finite = true;
  } else {
    comparison.ratio = std::numeric_limits<double>::infinity();
    comparison.ratio_finite = false;
  }
  return comparison;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& thread : threads) thread.join();
  if (error) std::rethrow_exception(error);
}

std::string episodes_csv_header(const RegretRecord& record) {
  std::string header = "episode,init_state,ep_regret,cum_regret,gap_sum";
  for (const auto& label : record.chosen_labels) header += ",chosen_" + label;
  header += "\n";
  return header;
}

std::string episode_row_csv(const EpisodeRow& row) {
  std::ostringstream os;
  os << row.episode << ',' << row.init_state << ',' << format_double(row.ep_regret) << ','
     << format_double(row.cum_regret) << ',' << format_double(row.gap_sum);
  for (long count : row.chosen_counts) os << ',' << count;
  os << '\n';
  return os.str();
}

std::string audit_to_json_string(const AuditReport& audit) {
  json covariance = json::array();
  for (const auto& sample : audit.covariance)
    covariance.push_back(json{{"episode", sample.episode},
                              {"map", sample.map},
                              {"h", sample.h},
                              {"projected_min_eig", sample.projected_min_eig},
                              {"reference", sample.reference},
                              {"pass", sample.pass}});
  json bonus = json::array();
  for (const auto& sample : audit.bonus)
    bonus.push_back(json{{"episode", sample.episode}, {"max_min_bonus", sample.max_min_bonus}});
  json j{{"optimism",
          {{"cells_checked", audit.optimism_cells},
           {"violations", audit.optimism_violations},
           {"fraction", audit.optimism_fraction}}},
         {"covariance_growth",
          {{"samples", std::move(covariance)},
           {"burn_in", audit.covariance_burn_in},
           {"pass_fraction_late", audit.covariance_pass_fraction_late}}},
         {"bonus_decay",
          {{"samples", std::move(bonus)},
           {"slope_valid", audit.bonus_slope_valid},
           {"slope_late", audit.bonus_slope_late}}},
         {"regret_gap_bound",
          {{"lhs", audit.gap_bound_lhs},
           {"rhs", audit.gap_bound_rhs},
           {"ok", audit.gap_bound_ok},
           {"skipped", audit.gap_audits_skipped}}}};
  return j.dump(2);
}

AuditReport audit_from_json_string(const std::string& text) {
  AuditReport audit;
  try {
    json j = json::parse(text);
    const auto& optimism = j.at("optimism");
    audit.optimism_cells = optimism.at("cells_checked").get<long>();
    audit.optimism_violations = optimism.at("violations").get<long>();
    audit.optimism_fraction = optimism.at("fraction").get<double>();
    const auto& covariance = j.at("covariance_growth");
    for (const auto& sample : covariance.at("samples")) {
      CovarianceSample out;
      out.episode = sample.at("episode").get<long>();
      out.map = sample.at("map").get<int>();
      out.h = sample.at("h").get<int>();
      out.projected_min_eig = sample.at("projected_min_eig").get<double>();
      out.reference = sample.at("reference").get<double>();
      out.pass = sample.at("pass").get<bool>();
      audit.covariance.push_back(out);
    }
    audit.covariance_burn_in = covariance.at("burn_in").get<long>();
    audit.covariance_pass_fraction_late = covariance.at("pass_fraction_late").get<double>();
    const auto& bonus = j.at("bonus_decay");
    for (const auto& sample : bonus.at("samples"))
      audit.bonus.push_back({sample.at("episode").get<long>(), sample.at("max_min_bonus").get<double>()});
    audit.bonus_slope_valid = bonus.at("slope_valid").get<bool>();
    audit.bonus_slope_late = bonus.at("slope_late").get<double>();
    const auto& gap = j.at("regret_gap_bound");
    audit.gap_bound_lhs = gap.at("lhs").get<double>();
    audit.gap_bound_rhs = gap.at("rhs").get<double>();
    audit.gap_bound_ok = gap.at("ok").get<bool>();
    audit.gap_audits_skipped = gap.at("skipped").get<bool>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("audit JSON: ") + e.what());
  }
  return audit;
}

std::string phase_to_json_string(const PhaseReport& phase) {
  json j{{"insufficient", phase.insufficient},
         {"early_mean", phase.early_mean},
         {"late_mean", phase.late_mean},
         {"flatness_ratio", finite_or_string(phase.flatness_finite
                                                 ? phase.flatness_ratio
                                                 : std::numeric_limits<double>::infinity())}};
  if (phase.has_k_star)
    j["k_star_hat"] = phase.k_star_hat;
  else
    j["k_star_hat"] = "none";
  return j.dump(2);
}

PhaseReport phase_from_json_string(const std::string& text) {
  PhaseReport phase;
  try {
    json j = json::parse(text);
    phase.insufficient = j.at("insufficient").get<bool>();
    phase.early_mean = j.at("early_mean").get<double>();
    phase.late_mean = j.at("late_mean").get<double>();
    const auto& flatness = j.at("flatness_ratio");
    if (flatness.is_string()) {
      phase.flatness_finite = false;
      phase.flatness_ratio = std::numeric_limits<double>::infinity();
    } else {
      phase.flatness_finite = true;
      phase.flatness_ratio = flatness.get<double>();
    }
    const auto& k_star = j.at("k_star_hat");
    if (k_star.is_string()) {
      phase.has_k_star = false;
    } else {
      phase.has_k_star = true;
      phase.k_star_hat = k_star.get<long>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("phase JSON: ") + e.what());
  }
  return phase;
}

}  // namespace relex
