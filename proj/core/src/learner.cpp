#include "relex/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace relex {

using nlohmann::json;

LearnerState init_state(const RepresentationClass& cls) {
  if (!cls.fitted()) throw std::logic_error("init_state: class has no fitted models");
  LearnerState state;
  state.horizon = cls.horizon;
  state.maps.resize(cls.maps.size());
  for (std::size_t m = 0; m < cls.maps.size(); ++m) {
    const int d = cls.maps[m].dim;
    state.maps[m].resize(cls.horizon);
    for (int h = 0; h < cls.horizon; ++h) {
      RepStepState& step = state.maps[m][h];
      step.covariance = Eigen::MatrixXd::Identity(d, d);
      step.covariance_inv = Eigen::MatrixXd::Identity(d, d);
      step.cross_moment = Eigen::MatrixXd::Zero(d, cls.psi.dim);
      step.estimate = Eigen::MatrixXd::Zero(d, cls.psi.dim);
    }
  }
  return state;
}

void update_regression(LearnerState& state, const RepresentationClass& cls,
                       const Trajectory& trajectory) {
  if (state.maps.size() != cls.maps.size() || state.horizon != cls.horizon)
    throw std::invalid_argument("update_regression: state does not match class");
  if (trajectory.steps.size() != static_cast<std::size_t>(cls.horizon))
    throw std::invalid_argument("update_regression: trajectory length differs from horizon");

  for (const TrajectoryStep& step : trajectory.steps) {
    if (step.state < 0 || step.state >= cls.num_states || step.action < 0 ||
        step.action >= cls.num_actions || step.next_state < 0 || step.next_state >= cls.num_states)
      throw std::invalid_argument("update_regression: trajectory index out of range");

    // regression target for this transition, shared by every map
    const Eigen::VectorXd target = cls.psi.gram_inv * cls.psi.table.row(step.next_state).transpose();

    for (std::size_t m = 0; m < cls.maps.size(); ++m) {
      RepStepState& rep = state.maps[m][step.h];
      const Eigen::VectorXd phi = cls.maps[m].row(step.state, step.action);
      rep.covariance.noalias() += phi * phi.transpose();
      const Eigen::VectorXd iphi = rep.covariance_inv * phi;
      rep.covariance_inv.noalias() -= iphi * iphi.transpose() / (1.0 + phi.dot(iphi));
      rep.cross_moment.noalias() += phi * target.transpose();
      rep.count += 1;
    }
  }

  for (auto& per_h : state.maps)
    for (auto& rep : per_h) rep.estimate = rep.covariance_inv * rep.cross_moment;
}

Eigen::MatrixXd estimate_from_scratch(const RepStepState& step) {
  return step.covariance.llt().solve(step.cross_moment);
}

BetaSchedule BetaSchedule::make(const RepresentationClass& cls, double c, double delta) {
  if (c <= 0.0) throw std::invalid_argument("BetaSchedule: c must be positive");
  if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("BetaSchedule: delta must be in (0, 1)");
  const ConstantsReport constants = compute_constants(cls);
  BetaSchedule schedule;
  schedule.c = c;
  schedule.delta = delta;
  schedule.horizon = cls.horizon;
  schedule.num_maps = static_cast<int>(cls.maps.size());
  schedule.c_psi = constants.c_psi;
  schedule.c_psi_prime = constants.c_psi_prime;
  for (std::size_t m = 0; m < cls.maps.size(); ++m) {
    schedule.dims.push_back(cls.maps[m].dim);
    schedule.c_m.push_back(constants.per_map[m].c_m);
    schedule.c_phi.push_back(constants.per_map[m].c_phi);
  }
  return schedule;
}

double BetaSchedule::beta(long episode, int map) const {
  if (episode < 1) throw std::invalid_argument("BetaSchedule::beta: episode must be >= 1");
  const double arg = static_cast<double>(episode) * horizon * c_phi[map] * num_maps / delta;
  const double log_term = std::log(std::max(arg, std::exp(1.0)));
  return c * (c_m[map] + c_psi_prime * c_psi_prime) * dims[map] * log_term;
}

double bonus(const Eigen::VectorXd& phi, const Eigen::MatrixXd& covariance_inv,
             double beta, double c_psi, int horizon) {
  double quad = phi.dot(covariance_inv * phi);
  if (quad < -1e-10)
    throw std::runtime_error("bonus: negative quadratic form, covariance inverse is broken");
  quad = std::max(quad, 0.0);
  return c_psi * horizon * std::sqrt(beta * quad);
}

EpisodePlan backward_pass(const LearnerState& state, const MdpSpec& spec,
                          const RepresentationClass& cls, const BetaSchedule& schedule,
                          long episode, std::vector<std::vector<double>>* per_map_q) {
  const int S = spec.num_states, A = spec.num_actions, H = spec.horizon;
  const int num_maps = static_cast<int>(cls.maps.size());
  if (state.maps.size() != cls.maps.size())
    throw std::invalid_argument("backward_pass: state does not match class");

  EpisodePlan plan;
  plan.horizon = H;
  plan.num_states = S;
  plan.num_actions = A;
  plan.q.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  plan.v.assign(static_cast<std::size_t>(H) * S, 0.0);
  plan.chosen_map.assign(plan.q.size(), 0);
  plan.policy = PolicyTable::zeros(H, S);
  if (per_map_q) per_map_q->assign(num_maps, std::vector<double>(plan.q.size(), 0.0));

  std::vector<double> beta_k(num_maps);
  for (int m = 0; m < num_maps; ++m) beta_k[m] = schedule.beta(episode, m);

  Eigen::VectorXd v_next = Eigen::VectorXd::Zero(S);
  Eigen::MatrixXd q_maps(static_cast<Eigen::Index>(S) * A, num_maps);

  for (int h = H - 1; h >= 0; --h) {
    // psi^T v_{h+1}, shared across maps
    const Eigen::VectorXd w = cls.psi.table.transpose() * v_next;

    for (int m = 0; m < num_maps; ++m) {
      const RepStepState& rep = state.maps[m][h];
      const Eigen::MatrixXd& phi = cls.maps[m].table;
      const Eigen::VectorXd core = phi * (rep.estimate * w);
      const Eigen::MatrixXd weighted = phi * rep.covariance_inv;
      const double scale = schedule.c_psi * H;
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const Eigen::Index row = static_cast<Eigen::Index>(s) * A + a;
          double quad = weighted.row(row).dot(phi.row(row));
          if (quad < -1e-10)
            throw std::runtime_error("backward_pass: negative quadratic form, covariance inverse is broken");
          quad = std::max(quad, 0.0);
          q_maps(row, m) = spec.reward(h, s, a) + core(row) + scale * std::sqrt(beta_k[m] * quad);
        }
      }
    }

    for (int s = 0; s < S; ++s) {
      double best_v = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        const Eigen::Index row = static_cast<Eigen::Index>(s) * A + a;
        double combined = q_maps(row, 0);
        int chosen = 0;
        for (int m = 1; m < num_maps; ++m) {
          if (q_maps(row, m) < combined) {
            combined = q_maps(row, m);
            chosen = m;
          }
        }
        const std::size_t idx = plan.sa_index(h, s, a);
        plan.q[idx] = combined;
        plan.chosen_map[idx] = chosen;
        if (per_map_q)
          for (int m = 0; m < num_maps; ++m) (*per_map_q)[m][idx] = q_maps(row, m);
        if (combined > best_v) {
          best_v = combined;
          best_a = a;
        }
      }
      plan.v[static_cast<std::size_t>(h) * S + s] = std::min(best_v, static_cast<double>(H));
      plan.policy.at(h, s) = best_a;
    }
    for (int s = 0; s < S; ++s) v_next(s) = plan.v_at(h, s);
  }
  return plan;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

}  // namespace

std::string learner_to_json_string(const LearnerState& state) {
  json maps = json::array();
  for (const auto& per_h : state.maps) {
    json steps = json::array();
    for (const auto& rep : per_h) {
      steps.push_back(json{{"covariance", matrix_to_json(rep.covariance)},
                           {"covariance_inv", matrix_to_json(rep.covariance_inv)},
                           {"cross_moment", matrix_to_json(rep.cross_moment)},
                           {"estimate", matrix_to_json(rep.estimate)},
                           {"count", rep.count}});
    }
    maps.push_back(std::move(steps));
  }
  return json{{"horizon", state.horizon}, {"maps", std::move(maps)}}.dump();
}

LearnerState learner_from_json_string(const std::string& text) {
  LearnerState state;
  try {
    json j = json::parse(text);
    state.horizon = j.at("horizon").get<int>();
    for (const auto& per_h : j.at("maps")) {
      std::vector<RepStepState> steps;
      for (const auto& rep : per_h) {
        RepStepState step;
        step.covariance = matrix_from_json(rep.at("covariance"));
        step.covariance_inv = matrix_from_json(rep.at("covariance_inv"));
        step.cross_moment = matrix_from_json(rep.at("cross_moment"));
        step.estimate = matrix_from_json(rep.at("estimate"));
        step.count = rep.at("count").get<long>();
        steps.push_back(std::move(step));
      }
      state.maps.push_back(std::move(steps));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("learner snapshot JSON: ") + e.what());
  }
  return state;
}

}  // namespace relex
