#include "relex/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relex/rng.hpp"

namespace relex {

using nlohmann::json;

namespace {
constexpr double kTieTol = 1e-9;   // argmax uniqueness
constexpr double kGapTol = 1e-9;   // gaps below this count as zero
}  // namespace

std::string Violation::describe() const {
  std::ostringstream os;
  os << constraint;
  if (h >= 0) os << " h=" << h;
  if (s >= 0) os << " s=" << s;
  if (a >= 0) os << " a=" << a;
  if (next >= 0) os << " next=" << next;
  os << " magnitude=" << magnitude;
  return os.str();
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  os << violations.size() << " violation(s), first: " << violations.front().describe();
  return os.str();
}

ValidationReport validate_mdp(const MdpSpec& spec) {
  ValidationReport report;
  auto add = [&](const char* constraint, int h, int s, int a, int next, double magnitude) {
    report.violations.push_back({constraint, h, s, a, next, magnitude});
  };

  if (spec.num_states <= 0 || spec.num_actions <= 0 || spec.horizon <= 0) {
    add("positive_dimensions", -1, -1, -1, -1, 0.0);
    return report;
  }
  const std::size_t S = spec.num_states, A = spec.num_actions, H = spec.horizon;
  if (spec.rewards.size() != H * S * A) {
    add("rewards_shape", -1, -1, -1, -1, static_cast<double>(spec.rewards.size()));
    return report;
  }
  if (spec.transitions.size() != H * S * A * S) {
    add("transitions_shape", -1, -1, -1, -1, static_cast<double>(spec.transitions.size()));
    return report;
  }
  if (spec.init_dist.size() != S) {
    add("init_dist_shape", -1, -1, -1, -1, static_cast<double>(spec.init_dist.size()));
    return report;
  }

  for (int h = 0; h < spec.horizon; ++h) {
    for (int s = 0; s < spec.num_states; ++s) {
      for (int a = 0; a < spec.num_actions; ++a) {
        const double r = spec.reward(h, s, a);
        if (r < 0.0 || r > 1.0) add("reward_range", h, s, a, -1, r < 0.0 ? -r : r - 1.0);
        double sum = 0.0;
        for (int next = 0; next < spec.num_states; ++next) {
          const double p = spec.transition(h, s, a, next);
          if (p < 0.0) add("transition_negative", h, s, a, next, -p);
          sum += p;
        }
        if (std::abs(sum - 1.0) > kProbTol) add("transition_row_sum", h, s, a, -1, std::abs(sum - 1.0));
      }
    }
  }

  double rho_sum = 0.0;
  for (int s = 0; s < spec.num_states; ++s) {
    if (spec.init_dist[s] < 0.0) add("init_dist_negative", -1, s, -1, -1, -spec.init_dist[s]);
    rho_sum += spec.init_dist[s];
  }
  if (std::abs(rho_sum - 1.0) > kProbTol) add("init_dist_sum", -1, -1, -1, -1, std::abs(rho_sum - 1.0));
  return report;
}

PolicyTable PolicyTable::zeros(int horizon, int num_states) {
  PolicyTable t;
  t.horizon = horizon;
  t.num_states = num_states;
  t.action.assign(static_cast<std::size_t>(horizon) * num_states, 0);
  return t;
}

OptimalSolution solve_optimal(const MdpSpec& spec) {
  const auto report = validate_mdp(spec);
  if (!report.ok()) throw std::invalid_argument("solve_optimal: invalid spec: " + report.summary());

  const int S = spec.num_states, A = spec.num_actions, H = spec.horizon;
  OptimalSolution sol;
  sol.horizon = H;
  sol.num_states = S;
  sol.num_actions = A;
  sol.q_star.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  sol.v_star.assign(static_cast<std::size_t>(H) * S, 0.0);
  sol.gaps.assign(sol.q_star.size(), 0.0);
  sol.pi_star = PolicyTable::zeros(H, S);

  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      double best = -1.0;
      int best_a = 0;
      for (int a = 0; a < A; ++a) {
        double q = spec.reward(h, s, a);
        if (h + 1 < H) {
          double cont = 0.0;
          for (int next = 0; next < S; ++next) cont += spec.transition(h, s, a, next) * sol.v(h + 1, next);
          q += cont;
        }
        sol.q_star[sol.sa_index(h, s, a)] = q;
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      sol.v_star[static_cast<std::size_t>(h) * S + s] = best;
      sol.pi_star.at(h, s) = best_a;
      int near = 0;
      for (int a = 0; a < A; ++a)
        if (sol.q(h, s, a) > best - kTieTol) ++near;
      if (near != 1) sol.unique_optimal = false;
    }
  }

  double gap_min = std::numeric_limits<double>::infinity();
  bool any_nonzero = false;
  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double gap = sol.v(h, s) - sol.q(h, s, a);
        sol.gaps[sol.sa_index(h, s, a)] = gap;
        if (gap > kGapTol) {
          any_nonzero = true;
          gap_min = std::min(gap_min, gap);
        }
      }
    }
  }
  sol.all_gaps_zero = !any_nonzero;
  sol.gap_min = any_nonzero ? gap_min : std::numeric_limits<double>::infinity();
  return sol;
}

PolicyValues evaluate_policy(const MdpSpec& spec, const PolicyTable& policy) {
  const auto report = validate_mdp(spec);
  if (!report.ok()) throw std::invalid_argument("evaluate_policy: invalid spec: " + report.summary());

  const int S = spec.num_states, A = spec.num_actions, H = spec.horizon;
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s)
      if (policy.at(h, s) < 0 || policy.at(h, s) >= A)
        throw std::out_of_range("evaluate_policy: action index out of range");

  PolicyValues values;
  values.horizon = H;
  values.num_states = S;
  values.num_actions = A;
  values.q.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  values.v.assign(static_cast<std::size_t>(H) * S, 0.0);

  for (int h = H - 1; h >= 0; --h) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double q = spec.reward(h, s, a);
        if (h + 1 < H) {
          double cont = 0.0;
          for (int next = 0; next < S; ++next) cont += spec.transition(h, s, a, next) * values.v_at(h + 1, next);
          q += cont;
        }
        values.q[(static_cast<std::size_t>(h) * S + s) * A + a] = q;
      }
      values.v[static_cast<std::size_t>(h) * S + s] = values.q_at(h, s, policy.at(h, s));
    }
  }
  return values;
}

OccupancyMeasure occupancy(const MdpSpec& spec, const PolicyTable& policy) {
  const int S = spec.num_states, H = spec.horizon;
  OccupancyMeasure occ;
  occ.horizon = H;
  occ.num_states = S;
  occ.d.assign(static_cast<std::size_t>(H) * S, 0.0);
  for (int s = 0; s < S; ++s) occ.d[s] = spec.init_dist[s];
  for (int h = 0; h + 1 < H; ++h) {
    for (int s = 0; s < S; ++s) {
      const double mass = occ.at(h, s);
      if (mass == 0.0) continue;
      const int a = policy.at(h, s);
      for (int next = 0; next < S; ++next)
        occ.d[static_cast<std::size_t>(h + 1) * S + next] += mass * spec.transition(h, s, a, next);
    }
  }
  return occ;
}

double Trajectory::total_reward() const {
  double total = 0.0;
  for (const auto& step : steps) total += step.reward;
  return total;
}

Trajectory sample_episode(const MdpSpec& spec, const PolicyTable& policy,
                          std::mt19937_64& init_rng, std::mt19937_64& transition_rng,
                          long episode) {
  Trajectory trajectory;
  trajectory.episode = episode;
  trajectory.steps.reserve(spec.horizon);
  int s = sample_categorical(init_rng, std::span<const double>(spec.init_dist));
  for (int h = 0; h < spec.horizon; ++h) {
    const int a = policy.at(h, s);
    const double r = spec.reward(h, s, a);
    std::span<const double> row(&spec.transitions[spec.transition_index(h, s, a, 0)],
                                static_cast<std::size_t>(spec.num_states));
    const int next = sample_categorical(transition_rng, row);
    trajectory.steps.push_back({h, s, a, r, next});
    s = next;
  }
  return trajectory;
}

namespace {

json mdp_to_json(const MdpSpec& spec) {
  json rewards = json::array();
  json transitions = json::array();
  for (int h = 0; h < spec.horizon; ++h) {
    json rh = json::array();
    json th = json::array();
    for (int s = 0; s < spec.num_states; ++s) {
      json rs = json::array();
      json ts = json::array();
      for (int a = 0; a < spec.num_actions; ++a) {
        rs.push_back(spec.reward(h, s, a));
        json row = json::array();
        for (int next = 0; next < spec.num_states; ++next) row.push_back(spec.transition(h, s, a, next));
        ts.push_back(std::move(row));
      }
      rh.push_back(std::move(rs));
      th.push_back(std::move(ts));
    }
    rewards.push_back(std::move(rh));
    transitions.push_back(std::move(th));
  }
  return json{{"num_states", spec.num_states},
              {"num_actions", spec.num_actions},
              {"horizon", spec.horizon},
              {"rewards", std::move(rewards)},
              {"transitions", std::move(transitions)},
              {"init_dist", spec.init_dist}};
}

MdpSpec mdp_from_json(const json& j) {
  MdpSpec spec;
  try {
    spec.num_states = j.at("num_states").get<int>();
    spec.num_actions = j.at("num_actions").get<int>();
    spec.horizon = j.at("horizon").get<int>();
    if (spec.num_states <= 0 || spec.num_actions <= 0 || spec.horizon <= 0)
      throw std::invalid_argument("instance JSON: nonpositive dimensions");
    const auto& rewards = j.at("rewards");
    const auto& transitions = j.at("transitions");
    spec.rewards.reserve(static_cast<std::size_t>(spec.horizon) * spec.num_states * spec.num_actions);
    spec.transitions.reserve(spec.rewards.capacity() * spec.num_states);
    for (int h = 0; h < spec.horizon; ++h) {
      for (int s = 0; s < spec.num_states; ++s) {
        for (int a = 0; a < spec.num_actions; ++a) {
          spec.rewards.push_back(rewards.at(h).at(s).at(a).get<double>());
          const auto& row = transitions.at(h).at(s).at(a);
          if (row.size() != static_cast<std::size_t>(spec.num_states))
            throw std::invalid_argument("instance JSON: transition row length mismatch");
          for (int next = 0; next < spec.num_states; ++next)
            spec.transitions.push_back(row.at(next).get<double>());
        }
      }
    }
    spec.init_dist = j.at("init_dist").get<std::vector<double>>();
    if (spec.init_dist.size() != static_cast<std::size_t>(spec.num_states))
      throw std::invalid_argument("instance JSON: init_dist length mismatch");
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("instance JSON: ") + e.what());
  }
  return spec;
}

}  // namespace

std::string mdp_to_json_string(const MdpSpec& spec) { return mdp_to_json(spec).dump(2); }

MdpSpec mdp_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("instance JSON: ") + e.what());
  }
  return mdp_from_json(j);
}

MdpSpec load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return mdp_from_json_string(buffer.str());
}

void save_mdp(const MdpSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  out << mdp_to_json_string(spec) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace relex
