#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relex/mdp.hpp"

namespace relex {

// Next-state feature map psi. table stacks psi(s') as rows (S x d').
struct StateFeatureMap {
  int dim = 0;
  Eigen::MatrixXd table;
  Eigen::MatrixXd gram;      // sum_s psi(s) psi(s)^T
  Eigen::MatrixXd gram_inv;
};

// Builds gram and its inverse. Throws std::invalid_argument when the gram
// matrix has an eigenvalue at or below 1e-8.
StateFeatureMap make_state_features(Eigen::MatrixXd table);

// State-action feature map, shared across steps. Row index is s * A + a.
struct FeatureMap {
  std::string name;
  int dim = 0;
  int num_actions = 0;
  Eigen::MatrixXd table;  // (S*A) x d

  Eigen::VectorXd row(int s, int a) const {
    return table.row(static_cast<Eigen::Index>(s) * num_actions + a).transpose();
  }
};

struct BilinearModel {
  std::vector<Eigen::MatrixXd> per_step;  // H entries, d x d'
  double residual = 0.0;
  int worst_h = -1;
  int worst_state = -1;
  int worst_action = -1;
  int worst_next = -1;
};

class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, double residual, int h, int s, int a, int next)
      : std::runtime_error(what), residual(residual), h(h), s(s), a(a), next(next) {}
  double residual;
  int h, s, a, next;
};

// Ridge-free exact fit: per step, the minimum-norm solution of
// Phi * M * Psi^T = P_h, i.e. M = pinv(Phi) * P_h * Psi * gram_inv.
// Throws FactorizationError when the reconstruction residual exceeds 1e-6,
// naming the worst (h, s, a, s').
BilinearModel fit_true_model(const MdpSpec& spec, const FeatureMap& map,
                             const StateFeatureMap& psi);

struct MapConstants {
  double c_phi = 0.0;
  int c_phi_witness_state = -1;
  int c_phi_witness_action = -1;
  double c_m = 0.0;
  int c_m_witness_step = -1;
};

struct ConstantsReport {
  std::vector<MapConstants> per_map;
  double c_psi = 0.0;
  bool c_psi_exact = true;                // exact sign-vector sup vs column-sum bound
  std::vector<int> c_psi_witness_signs;   // only in exact mode
  double c_psi_prime = 0.0;
  int c_psi_prime_witness_state = -1;
};

struct RepresentationClass {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  StateFeatureMap psi;
  std::vector<FeatureMap> maps;
  std::vector<BilinearModel> models;  // parallel to maps
  ConstantsReport constants;

  bool fitted() const { return !maps.empty() && models.size() == maps.size(); }
};

// Smallest constants satisfying the norm bounds, with the witness index
// attaining each one. The sup-norm-to-2-norm constant for psi is computed
// exactly over sign vectors when S <= 20, otherwise by the column
// absolute-sum upper bound (flagged via c_psi_exact).
ConstantsReport compute_constants(const RepresentationClass& cls);

// Second moment of phi(s, pi*(s)) under the optimal-policy state
// distribution at step h.
Eigen::MatrixXd diversity_matrix(const MdpSpec& spec, const OptimalSolution& solution,
                                 const FeatureMap& map, int h);

struct CoverageEntry {
  int h = 0;
  int map = 0;
  Eigen::MatrixXd lambda;
  Eigen::MatrixXd retained_basis;  // d x r, r == 0 when degenerate
  double min_retained_eig = 0.0;
  bool degenerate = false;         // lambda numerically zero
  std::vector<bool> covered;       // SA mask, index s * A + a
};

struct CoverageReport {
  double rank_tol = 1e-7;
  int horizon = 0;
  int num_maps = 0;
  std::vector<CoverageEntry> entries;         // h * num_maps + m
  std::vector<double> sigma;                  // per map, min retained eig over nondegenerate steps
  std::vector<bool> has_degenerate_step;      // per map
  std::vector<bool> union_covered;            // per h
  bool assumption3_holds = false;
  std::vector<std::array<int, 3>> uncovered;  // (h, s, a)

  const CoverageEntry& entry(int h, int m) const { return entries[static_cast<std::size_t>(h) * num_maps + m]; }
};

// Eigenspace membership per pair: eigenvalues below rank_tol * lambda_max
// count as zero, and (s, a) is covered by a map iff the residual of
// phi(s, a) after projection onto the retained eigenspace is at most
// rank_tol * ||phi(s, a)||.
CoverageReport coverage_check(const RepresentationClass& cls, const MdpSpec& spec,
                              const OptimalSolution& solution, double rank_tol = 1e-7);

// One-hot phi over (s, a) pairs and one-hot psi over states.
RepresentationClass make_tabular_class(const MdpSpec& spec);

struct ClusterParams {
  int num_states = 6;
  int num_actions = 2;
  int horizon = 3;
  int num_clusters = 3;
  double reward_margin = 0.3;     // per-(h,s) margin of the best action's reward
  int rotated_coarse_copies = 0;  // extra rotated copies of the coarse map
};

// Kernel rows constant on state clusters (exact rank <= num_clusters),
// uniform initial distribution, strictly positive rows, and a reward margin
// so the optimal policy is unique. Emits the fine pair one-hot map first,
// then the coarse cluster one-hot, then any rotated coarse copies.
std::pair<MdpSpec, RepresentationClass> make_cluster_instance(const ClusterParams& params,
                                                              std::uint64_t seed);

// Applies an invertible R to each map's features and R^{-T} to its models,
// preserving the reconstructed kernel exactly. The seeded overload draws
// well-conditioned rotations; the explicit overload rejects matrices with
// condition number above 1e6.
RepresentationClass rotate_class(const RepresentationClass& cls, std::uint64_t seed);
RepresentationClass rotate_class(const RepresentationClass& cls,
                                 const std::vector<Eigen::MatrixXd>& rotations);

RepresentationClass subset_class(const RepresentationClass& cls,
                                 const std::vector<int>& map_indices);

// Max abs reconstruction error over (map, h, s, a, s').
double bilinear_residual(const MdpSpec& spec, const RepresentationClass& cls);

std::string class_to_json_string(const RepresentationClass& cls);
RepresentationClass class_from_json_string(const std::string& text);
RepresentationClass load_class(const std::string& path);
void save_class(const RepresentationClass& cls, const std::string& path);

std::string coverage_to_json_string(const CoverageReport& report, const RepresentationClass& cls);
std::string uncovered_to_csv(const CoverageReport& report);

}  // namespace relex
