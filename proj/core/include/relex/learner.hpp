#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "relex/mdp.hpp"
#include "relex/representation.hpp"

namespace relex {

// Per-(map, step) regression state. covariance is I plus the sum of
// phi phi^T over observed transitions; estimate solves the ridge problem
// covariance * estimate = cross_moment.
struct RepStepState {
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd covariance_inv;
  Eigen::MatrixXd cross_moment;
  Eigen::MatrixXd estimate;
  long count = 0;
};

struct LearnerState {
  int horizon = 0;
  std::vector<std::vector<RepStepState>> maps;  // [map][h]

  RepStepState& at(int map, int h) { return maps[map][h]; }
  const RepStepState& at(int map, int h) const { return maps[map][h]; }
};

// covariance = I, cross_moment = 0, estimate = 0 for every (map, h).
LearnerState init_state(const RepresentationClass& cls);

// Folds one trajectory into every map's statistics: rank-one covariance and
// inverse updates per step, then a full estimate recompute from the
// maintained inverse. Throws std::invalid_argument on a dimension mismatch
// between the trajectory and the class tables.
void update_regression(LearnerState& state, const RepresentationClass& cls,
                       const Trajectory& trajectory);

// Direct solve of covariance * X = cross_moment, for drift checks against
// the maintained inverse.
Eigen::MatrixXd estimate_from_scratch(const RepStepState& step);

struct BetaSchedule {
  double c = 0.5;
  double delta = 0.1;
  int horizon = 0;
  int num_maps = 0;
  double c_psi = 0.0;
  double c_psi_prime = 0.0;
  std::vector<int> dims;
  std::vector<double> c_m;
  std::vector<double> c_phi;

  // Constants come from compute_constants on the class. Throws
  // std::invalid_argument for c <= 0 or delta outside (0, 1).
  static BetaSchedule make(const RepresentationClass& cls, double c, double delta);

  // c * (c_m + c_psi_prime^2) * d * log(episode * H * c_phi * |Phi| / delta),
  // with the log argument clamped below at e. episode >= 1.
  double beta(long episode, int map) const;
};

// Confidence radius c_psi * H * sqrt(beta * phi^T covariance_inv phi).
// A quadratic form below -1e-10 signals a broken inverse and throws.
double bonus(const Eigen::VectorXd& phi, const Eigen::MatrixXd& covariance_inv,
             double beta, double c_psi, int horizon);

struct EpisodePlan {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> q;        // [h][s][a], combined over maps
  std::vector<double> v;        // [h][s]
  std::vector<int> chosen_map;  // [h][s][a], index attaining the min
  PolicyTable policy;

  std::size_t sa_index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
  }
  double q_at(int h, int s, int a) const { return q[sa_index(h, s, a)]; }
  double v_at(int h, int s) const { return v[static_cast<std::size_t>(h) * num_states + s]; }
  int chosen_at(int h, int s, int a) const { return chosen_map[sa_index(h, s, a)]; }
};

// Optimistic backward pass: per step the next-state value aggregate
// psi^T v is shared across maps, each map contributes
// r + phi^T M (psi^T v) + bonus, the combined Q is the min over maps with
// lowest-index ties, V clamps at H, and the policy is the greedy argmax.
// per_map_q, when non-null, receives each map's optimistic table.
EpisodePlan backward_pass(const LearnerState& state, const MdpSpec& spec,
                          const RepresentationClass& cls, const BetaSchedule& schedule,
                          long episode,
                          std::vector<std::vector<double>>* per_map_q = nullptr);

// Exact snapshot of the regression state (covariance, maintained inverse,
// cross moment, estimate, count per (map, h)); parse(serialize(x)) is
// bit-identical.
std::string learner_to_json_string(const LearnerState& state);
LearnerState learner_from_json_string(const std::string& text);

}  // namespace relex
