#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relex/learner.hpp"

namespace relex {

enum class Algorithm { kRelex, kSingle, kOracle, kUniformRandom };

std::string algorithm_label(Algorithm alg, int single_index);
// Accepts "relex", "single:IDX", "oracle", "uniform_random".
std::pair<Algorithm, int> parse_algorithm(const std::string& text);

struct RunConfig {
  Algorithm algorithm = Algorithm::kRelex;
  int single_map_index = 0;
  long episodes = 1000;
  std::uint64_t seed = 1;
  double c = 0.5;
  double delta = 0.1;
  double rank_tol = 1e-7;
  bool audits_enabled = true;
  long audit_stride = 50;
  long checkpoint_episode = 0;  // write a snapshot after this episode (0 = never)
  std::string checkpoint_path;
  std::string resume_path;      // continue from a snapshot
};

struct EpisodeRow {
  long episode = 0;
  int init_state = 0;
  double ep_regret = 0.0;
  double cum_regret = 0.0;
  double gap_sum = 0.0;
  std::vector<long> chosen_counts;  // [h][map], counts over (s, a) cells
  double ep_regret_rho = 0.0;
  double cum_regret_rho = 0.0;
};

struct RegretRecord {
  int horizon = 0;
  std::vector<std::string> chosen_labels;  // one per (h, map) column
  std::vector<EpisodeRow> rows;
};

struct PhaseReport {
  bool insufficient = false;
  bool has_k_star = false;  // false means "none": the final episode still regrets
  long k_star_hat = 0;
  double early_mean = 0.0;
  double late_mean = 0.0;
  bool flatness_finite = true;
  double flatness_ratio = 0.0;
};

// k_star_hat = 1 + last episode with nonzero per-episode regret; flatness is
// mean(last 20%) / mean(first 10%) with 0/0 reported as 0. Pure function of
// the record. Fewer than 10 rows marks the report insufficient.
PhaseReport detect_phase(const RegretRecord& record);

struct CovarianceSample {
  long episode = 0;
  int map = 0;
  int h = 0;
  double projected_min_eig = 0.0;
  double reference = 0.0;  // sigma_map * (episode - 1)
  bool pass = false;       // projected_min_eig >= 0.5 * reference
};

struct BonusSample {
  long episode = 0;
  double max_min_bonus = 0.0;  // max over (h, s, a) of min over maps
};

struct AuditReport {
  long optimism_cells = 0;
  long optimism_violations = 0;
  double optimism_fraction = 0.0;
  std::vector<CovarianceSample> covariance;
  long covariance_burn_in = 0;
  double covariance_pass_fraction_late = 1.0;
  std::vector<BonusSample> bonus;
  bool bonus_slope_valid = false;
  double bonus_slope_late = 0.0;
  double gap_bound_lhs = 0.0;
  double gap_bound_rhs = 0.0;
  bool gap_bound_ok = true;
  // gap-dependent checks are skipped when every gap is zero
  bool gap_audits_skipped = false;
};

class OptimismAudit {
 public:
  explicit OptimismAudit(const OptimalSolution& solution) : solution_(&solution) {}
  void observe(const EpisodePlan& plan);
  long cells() const { return cells_; }
  long violations() const { return violations_; }
  double fraction() const { return cells_ == 0 ? 0.0 : static_cast<double>(violations_) / cells_; }

 private:
  const OptimalSolution* solution_;
  long cells_ = 0;
  long violations_ = 0;
};

class CovarianceGrowthAudit {
 public:
  explicit CovarianceGrowthAudit(const CoverageReport& coverage) : coverage_(&coverage) {}
  void observe(long episode, const LearnerState& state);
  const std::vector<CovarianceSample>& samples() const { return samples_; }
  double pass_fraction(long burn_in) const;

 private:
  const CoverageReport* coverage_;
  std::vector<CovarianceSample> samples_;
};

class BonusDecayAudit {
 public:
  BonusDecayAudit(const RepresentationClass& cls, const BetaSchedule& schedule)
      : cls_(&cls), schedule_(&schedule) {}
  void observe(long episode, const LearnerState& state);
  const std::vector<BonusSample>& samples() const { return samples_; }
  // Least-squares slope of log(bonus) vs log(episode) over samples at or
  // after from_episode; nullopt with fewer than three usable points.
  std::optional<double> fitted_slope(long from_episode) const;

 private:
  const RepresentationClass* cls_;
  const BetaSchedule* schedule_;
  std::vector<BonusSample> samples_;
};

struct RunResult {
  RegretRecord records;
  AuditReport audit;
  PhaseReport phase;
  long first_episode = 1;
};

// One seeded run: per episode a backward pass (or the fixed oracle/uniform
// policy), a rollout, exact policy evaluation for the regret row, audit
// sampling, then the regression update. Fully deterministic per seed.
RunResult run_experiment(const MdpSpec& spec, const RepresentationClass& cls,
                         const RunConfig& config);

// Behavior rollout for regression experiments: with probability epsilon the
// action is uniform, otherwise the base policy's.
Trajectory sample_episode_epsilon_greedy(const MdpSpec& spec, const PolicyTable& base,
                                         double epsilon, std::mt19937_64& init_rng,
                                         std::mt19937_64& transition_rng, long episode);

// Exact value tables of the uniformly random policy, [h][s].
std::vector<double> uniform_policy_values(const MdpSpec& spec);

struct BaselineComparison {
  double relex_median = 0.0;
  std::vector<double> single_medians;
  double min_single_median = 0.0;
  bool ratio_finite = true;
  double ratio = 0.0;  // relex_median / min_single_median
};

// Runs ReLEX and every single-map baseline on identical seeds and reports
// median cumulative regrets.
BaselineComparison compare_baselines(const MdpSpec& spec, const RepresentationClass& cls,
                                     long episodes, const std::vector<std::uint64_t>& seeds,
                                     double c, double delta, int jobs = 1);

// Runs fn(0..n-1) on up to `jobs` threads; results must be written to
// per-index slots.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

std::string episodes_csv_header(const RegretRecord& record);
std::string episode_row_csv(const EpisodeRow& row);
std::string audit_to_json_string(const AuditReport& audit);
AuditReport audit_from_json_string(const std::string& text);
std::string phase_to_json_string(const PhaseReport& phase);
PhaseReport phase_from_json_string(const std::string& text);

}  // namespace relex
