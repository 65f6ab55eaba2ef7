#pragma once

#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace relex {

constexpr double kProbTol = 1e-9;

// Exact tabular episodic MDP. Flat row-major tables:
// rewards[h][s][a], transitions[h][s][a][s'], init_dist[s].
// Rewards and transitions are stored per step h even when an instance
// reuses one table across steps.
struct MdpSpec {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> rewards;
  std::vector<double> transitions;
  std::vector<double> init_dist;

  int num_pairs() const { return num_states * num_actions; }
  std::size_t reward_index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
  }
  std::size_t transition_index(int h, int s, int a, int next) const {
    return reward_index(h, s, a) * num_states + next;
  }
  double reward(int h, int s, int a) const { return rewards[reward_index(h, s, a)]; }
  double transition(int h, int s, int a, int next) const {
    return transitions[transition_index(h, s, a, next)];
  }
};

struct Violation {
  std::string constraint;
  int h = -1;
  int s = -1;
  int a = -1;
  int next = -1;
  double magnitude = 0.0;
  std::string describe() const;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

// Collects every invariant violation (shapes, kernel row sums, entry signs,
// reward range, initial distribution). Deterministic; never throws.
ValidationReport validate_mdp(const MdpSpec& spec);

// Deterministic policy, action[h][s].
struct PolicyTable {
  int horizon = 0;
  int num_states = 0;
  std::vector<int> action;

  static PolicyTable zeros(int horizon, int num_states);
  int at(int h, int s) const { return action[static_cast<std::size_t>(h) * num_states + s]; }
  int& at(int h, int s) { return action[static_cast<std::size_t>(h) * num_states + s]; }
};

struct OptimalSolution {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> q_star;  // [h][s][a]
  std::vector<double> v_star;  // [h][s]
  PolicyTable pi_star;
  std::vector<double> gaps;    // [h][s][a]
  double gap_min = std::numeric_limits<double>::infinity();
  bool all_gaps_zero = false;
  bool unique_optimal = true;

  std::size_t sa_index(int h, int s, int a) const {
    return (static_cast<std::size_t>(h) * num_states + s) * num_actions + a;
  }
  double q(int h, int s, int a) const { return q_star[sa_index(h, s, a)]; }
  double v(int h, int s) const { return v_star[static_cast<std::size_t>(h) * num_states + s]; }
  double gap(int h, int s, int a) const { return gaps[sa_index(h, s, a)]; }
};

// Backward induction on the Bellman optimality equation. Argmax ties break
// to the lowest action index; unique_optimal is true iff every state-step
// argmax is unique within 1e-9. All-zero gap tables report gap_min = +inf.
// Throws std::invalid_argument on an invalid spec.
OptimalSolution solve_optimal(const MdpSpec& spec);

struct PolicyValues {
  int horizon = 0;
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> v;  // [h][s]
  std::vector<double> q;  // [h][s][a]

  double v_at(int h, int s) const { return v[static_cast<std::size_t>(h) * num_states + s]; }
  double q_at(int h, int s, int a) const {
    return q[(static_cast<std::size_t>(h) * num_states + s) * num_actions + a];
  }
};

// Exact backward policy evaluation. Throws std::out_of_range when the policy
// holds an action index outside [0, num_actions).
PolicyValues evaluate_policy(const MdpSpec& spec, const PolicyTable& policy);

struct OccupancyMeasure {
  int horizon = 0;
  int num_states = 0;
  std::vector<double> d;  // [h][s]
  double at(int h, int s) const { return d[static_cast<std::size_t>(h) * num_states + s]; }
};

// State distribution under the policy: d_1 = init_dist, then the forward
// recursion through the kernel.
OccupancyMeasure occupancy(const MdpSpec& spec, const PolicyTable& policy);

struct TrajectoryStep {
  int h = 0;
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

struct Trajectory {
  long episode = 0;
  std::vector<TrajectoryStep> steps;
  double total_reward() const;
};

// One rollout: s_1 from init_dist via init_rng, actions from the policy,
// next states from the kernel via transition_rng. Equal stream states give
// identical trajectories.
Trajectory sample_episode(const MdpSpec& spec, const PolicyTable& policy,
                          std::mt19937_64& init_rng, std::mt19937_64& transition_rng,
                          long episode);

std::string mdp_to_json_string(const MdpSpec& spec);
MdpSpec mdp_from_json_string(const std::string& text);
MdpSpec load_mdp(const std::string& path);
void save_mdp(const MdpSpec& spec, const std::string& path);

}  // namespace relex
