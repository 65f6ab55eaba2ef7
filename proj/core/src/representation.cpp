#include "relex/representation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relex/rng.hpp"

namespace relex {

using nlohmann::json;

namespace {

constexpr double kGramEigFloor = 1e-8;
constexpr double kFitResidualTol = 1e-6;
constexpr int kExactSignLimit = 20;

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
  if (!j.is_array() || j.empty()) throw std::invalid_argument("class JSON: expected a matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(i);
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument("class JSON: ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(k).get<double>();
  }
  return m;
}

// P_h as an (S*A) x S matrix in pair-row order.
Eigen::MatrixXd kernel_matrix(const MdpSpec& spec, int h) {
  Eigen::MatrixXd p(spec.num_pairs(), spec.num_states);
  for (int s = 0; s < spec.num_states; ++s)
    for (int a = 0; a < spec.num_actions; ++a)
      for (int next = 0; next < spec.num_states; ++next)
        p(static_cast<Eigen::Index>(s) * spec.num_actions + a, next) = spec.transition(h, s, a, next);
  return p;
}

struct ResidualProbe {
  double value = 0.0;
  int h = -1, s = -1, a = -1, next = -1;
};

ResidualProbe reconstruction_residual(const MdpSpec& spec, const FeatureMap& map,
                                      const StateFeatureMap& psi,
                                      const std::vector<Eigen::MatrixXd>& per_step) {
  ResidualProbe worst;
  for (int h = 0; h < spec.horizon; ++h) {
    const Eigen::MatrixXd rebuilt = map.table * per_step[h] * psi.table.transpose();
    for (int s = 0; s < spec.num_states; ++s) {
      for (int a = 0; a < spec.num_actions; ++a) {
        for (int next = 0; next < spec.num_states; ++next) {
          const double err = std::abs(rebuilt(static_cast<Eigen::Index>(s) * spec.num_actions + a, next) -
                                      spec.transition(h, s, a, next));
          if (err > worst.value) worst = {err, h, s, a, next};
        }
      }
    }
  }
  return worst;
}

Eigen::MatrixXd random_rotation(int dim, std::mt19937_64& gen) {
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) {
      // Box-Muller from the shared stream
      const double u1 = std::max(uniform01(gen), 1e-300);
      const double u2 = uniform01(gen);
      g(i, j) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd scale(dim);
  const double ln2 = std::log(2.0);
  for (int i = 0; i < dim; ++i) scale(i) = std::exp(-ln2 + 2.0 * ln2 * uniform01(gen));
  return q * scale.asDiagonal();
}

std::pair<FeatureMap, BilinearModel> rotate_map(const FeatureMap& map, const BilinearModel& model,
                                                const Eigen::MatrixXd& rotation,
                                                const std::string& name) {
  FeatureMap rotated;
  rotated.name = name;
  rotated.dim = map.dim;
  rotated.num_actions = map.num_actions;
  rotated.table = map.table * rotation.transpose();

  BilinearModel rotated_model;
  const Eigen::MatrixXd inv_t = rotation.inverse().transpose();
  rotated_model.per_step.reserve(model.per_step.size());
  for (const auto& m : model.per_step) rotated_model.per_step.push_back(inv_t * m);
  rotated_model.residual = model.residual;  // refreshed by callers that hold the spec
  return {std::move(rotated), std::move(rotated_model)};
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const double smin = svd.singularValues().minCoeff();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues().maxCoeff() / smin;
}

}  // namespace

StateFeatureMap make_state_features(Eigen::MatrixXd table) {
  StateFeatureMap psi;
  psi.table = std::move(table);
  psi.dim = static_cast<int>(psi.table.cols());
  psi.gram = psi.table.transpose() * psi.table;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(psi.gram);
  if (es.eigenvalues().minCoeff() <= kGramEigFloor)
    throw std::invalid_argument("state feature gram matrix is numerically singular");
  psi.gram_inv = psi.gram.llt().solve(Eigen::MatrixXd::Identity(psi.dim, psi.dim));
  return psi;
}

BilinearModel fit_true_model(const MdpSpec& spec, const FeatureMap& map,
                             const StateFeatureMap& psi) {
  BilinearModel model;
  model.per_step.reserve(spec.horizon);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(map.table);
  const Eigen::MatrixXd psi_side = psi.table * psi.gram_inv;  // S x d'
  for (int h = 0; h < spec.horizon; ++h)
    model.per_step.push_back(cod.solve(kernel_matrix(spec, h) * psi_side));

  const ResidualProbe worst = reconstruction_residual(spec, map, psi, model.per_step);
  model.residual = worst.value;
  model.worst_h = worst.h;
  model.worst_state = worst.s;
  model.worst_action = worst.a;
  model.worst_next = worst.next;
  if (model.residual > kFitResidualTol) {
    std::ostringstream os;
    os << "representation '" << map.name << "' does not factor this MDP: residual "
       << model.residual << " at (h=" << worst.h << ", s=" << worst.s << ", a=" << worst.a
       << ", next=" << worst.next << ")";
    throw FactorizationError(os.str(), model.residual, worst.h, worst.s, worst.a, worst.next);
  }
  return model;
}

ConstantsReport compute_constants(const RepresentationClass& cls) {
  if (!cls.fitted()) throw std::logic_error("compute_constants: class has no fitted models");
  ConstantsReport report;

  for (std::size_t m = 0; m < cls.maps.size(); ++m) {
    const FeatureMap& map = cls.maps[m];
    MapConstants mc;
    double max_sq = -1.0;
    for (int s = 0; s < cls.num_states; ++s) {
      for (int a = 0; a < cls.num_actions; ++a) {
        const double sq = map.table.row(static_cast<Eigen::Index>(s) * cls.num_actions + a).squaredNorm();
        if (sq > max_sq) {
          max_sq = sq;
          mc.c_phi_witness_state = s;
          mc.c_phi_witness_action = a;
        }
      }
    }
    mc.c_phi = max_sq / map.dim;

    double max_fro = -1.0;
    for (int h = 0; h < cls.horizon; ++h) {
      const double fro = cls.models[m].per_step[h].squaredNorm();
      if (fro > max_fro) {
        max_fro = fro;
        mc.c_m_witness_step = h;
      }
    }
    mc.c_m = max_fro / map.dim;
    report.per_map.push_back(mc);
  }

  const Eigen::MatrixXd& psi = cls.psi.table;
  const int S = cls.num_states;
  if (S <= kExactSignLimit) {
    // sup over sign vectors, attained at a vertex; v and -v coincide so fix v_0 = +1
    report.c_psi_exact = true;
    double best = -1.0;
    std::uint64_t best_mask = 0;
    const std::uint64_t limit = S > 1 ? (1ULL << (S - 1)) : 1ULL;
    Eigen::VectorXd v(S);
    for (std::uint64_t mask = 0; mask < limit; ++mask) {
      v(0) = 1.0;
      for (int s = 1; s < S; ++s) v(s) = (mask >> (s - 1)) & 1ULL ? -1.0 : 1.0;
      const double norm = (psi.transpose() * v).norm();
      if (norm > best) {
        best = norm;
        best_mask = mask;
      }
    }
    report.c_psi = best;
    report.c_psi_witness_signs.assign(S, 1);
    for (int s = 1; s < S; ++s)
      report.c_psi_witness_signs[s] = (best_mask >> (s - 1)) & 1ULL ? -1 : 1;
  } else {
    // column absolute-sum bound aggregated in 2-norm
    report.c_psi_exact = false;
    double sum_sq = 0.0;
    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
      const double col_abs = psi.col(j).cwiseAbs().sum();
      sum_sq += col_abs * col_abs;
    }
    report.c_psi = std::sqrt(sum_sq);
  }

  const Eigen::MatrixXd weighted = psi * cls.psi.gram_inv;
  double best_row = -1.0;
  for (int s = 0; s < S; ++s) {
    const double norm = weighted.row(s).norm();
    if (norm > best_row) {
      best_row = norm;
      report.c_psi_prime_witness_state = s;
    }
  }
  report.c_psi_prime = best_row;
  return report;
}

Eigen::MatrixXd diversity_matrix(const MdpSpec& spec, const OptimalSolution& solution,
                                 const FeatureMap& map, int h) {
  const OccupancyMeasure occ = occupancy(spec, solution.pi_star);
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(map.dim, map.dim);
  for (int s = 0; s < spec.num_states; ++s) {
    const double mass = occ.at(h, s);
    if (mass == 0.0) continue;
    const Eigen::VectorXd phi = map.row(s, solution.pi_star.at(h, s));
    lambda.noalias() += mass * phi * phi.transpose();
  }
  return 0.5 * (lambda + lambda.transpose());
}

CoverageReport coverage_check(const RepresentationClass& cls, const MdpSpec& spec,
                              const OptimalSolution& solution, double rank_tol) {
  CoverageReport report;
  report.rank_tol = rank_tol;
  report.horizon = cls.horizon;
  report.num_maps = static_cast<int>(cls.maps.size());
  report.sigma.assign(cls.maps.size(), 0.0);
  report.has_degenerate_step.assign(cls.maps.size(), false);

  std::vector<double> sigma(cls.maps.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> any_retained(cls.maps.size(), false);

  for (int h = 0; h < cls.horizon; ++h) {
    for (int m = 0; m < report.num_maps; ++m) {
      CoverageEntry entry;
      entry.h = h;
      entry.map = m;
      entry.lambda = diversity_matrix(spec, solution, cls.maps[m], h);

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(entry.lambda);
      const double lambda_max = es.eigenvalues().maxCoeff();
      if (lambda_max <= 0.0) {
        entry.degenerate = true;
      } else {
        const double cut = rank_tol * lambda_max;
        std::vector<int> keep;
        for (int i = 0; i < es.eigenvalues().size(); ++i)
          if (es.eigenvalues()(i) > cut) keep.push_back(i);
        entry.retained_basis.resize(cls.maps[m].dim, static_cast<Eigen::Index>(keep.size()));
        double min_eig = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < keep.size(); ++i) {
          entry.retained_basis.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(keep[i]);
          min_eig = std::min(min_eig, es.eigenvalues()(keep[i]));
        }
        entry.min_retained_eig = min_eig;
        any_retained[m] = true;
        sigma[m] = std::min(sigma[m], min_eig);
      }
      if (entry.degenerate) report.has_degenerate_step[m] = true;

      entry.covered.assign(static_cast<std::size_t>(cls.num_states) * cls.num_actions, false);
      for (int s = 0; s < cls.num_states; ++s) {
        for (int a = 0; a < cls.num_actions; ++a) {
          const Eigen::VectorXd phi = cls.maps[m].row(s, a);
          const double norm = phi.norm();
          double resid = norm;
          if (!entry.degenerate)
            resid = (phi - entry.retained_basis * (entry.retained_basis.transpose() * phi)).norm();
          entry.covered[static_cast<std::size_t>(s) * cls.num_actions + a] = resid <= rank_tol * norm;
        }
      }
      report.entries.push_back(std::move(entry));
    }
  }

  for (int m = 0; m < report.num_maps; ++m)
    report.sigma[m] = any_retained[m] ? sigma[m] : 0.0;

  report.union_covered.assign(cls.horizon, true);
  report.assumption3_holds = true;
  for (int h = 0; h < cls.horizon; ++h) {
    for (int s = 0; s < cls.num_states; ++s) {
      for (int a = 0; a < cls.num_actions; ++a) {
        bool covered = false;
        for (int m = 0; m < report.num_maps && !covered; ++m)
          covered = report.entry(h, m).covered[static_cast<std::size_t>(s) * cls.num_actions + a];
        if (!covered) {
          report.union_covered[h] = false;
          report.assumption3_holds = false;
          report.uncovered.push_back({h, s, a});
        }
      }
    }
  }
  return report;
}

RepresentationClass make_tabular_class(const MdpSpec& spec) {
  const auto check = validate_mdp(spec);
  if (!check.ok()) throw std::invalid_argument("make_tabular_class: invalid spec: " + check.summary());

  RepresentationClass cls;
  cls.num_states = spec.num_states;
  cls.num_actions = spec.num_actions;
  cls.horizon = spec.horizon;
  cls.psi = make_state_features(Eigen::MatrixXd::Identity(spec.num_states, spec.num_states));

  FeatureMap fine;
  fine.name = "tabular";
  fine.dim = spec.num_pairs();
  fine.num_actions = spec.num_actions;
  fine.table = Eigen::MatrixXd::Identity(fine.dim, fine.dim);
  cls.maps.push_back(std::move(fine));

  BilinearModel model;
  model.per_step.reserve(spec.horizon);
  for (int h = 0; h < spec.horizon; ++h) model.per_step.push_back(kernel_matrix(spec, h));
  model.residual = 0.0;
  cls.models.push_back(std::move(model));
  cls.constants = compute_constants(cls);
  return cls;
}

std::pair<MdpSpec, RepresentationClass> make_cluster_instance(const ClusterParams& params,
                                                              std::uint64_t seed) {
  const int S = params.num_states, A = params.num_actions, H = params.horizon;
  const int C = params.num_clusters;
  if (S <= 0 || A <= 0 || H <= 0 || C <= 0)
    throw std::invalid_argument("make_cluster_instance: nonpositive dimensions");
  if (C > S * A) throw std::invalid_argument("make_cluster_instance: more clusters than pairs");
  const double margin = std::clamp(params.reward_margin, 0.0, 0.6);

  std::mt19937_64 gen = named_stream(seed, "generator");

  // Cluster id per pair. With C <= S the id depends on the state only, which
  // makes the coarse map alias every pair with the on-policy pair of the same
  // state; otherwise fall back to clustering pairs directly.
  std::vector<int> cluster(static_cast<std::size_t>(S) * A, 0);
  if (C <= S) {
    std::vector<int> state_cluster(S);
    for (int s = 0; s < S; ++s)
      state_cluster[s] = s < C ? s : static_cast<int>(uniform01(gen) * C);
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) cluster[static_cast<std::size_t>(s) * A + a] = state_cluster[s];
  } else {
    for (int i = 0; i < S * A; ++i) cluster[i] = i < C ? i : static_cast<int>(uniform01(gen) * C);
  }

  // Strictly positive cluster rows: normalized exponentials mixed with 0.15
  // uniform mass, renormalized once here.
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(H) * C, std::vector<double>(S, 0.0));
  for (auto& row : rows) {
    double sum = 0.0;
    for (int s = 0; s < S; ++s) {
      row[s] = -std::log(std::max(uniform01(gen), 1e-300));
      sum += row[s];
    }
    double mixed_sum = 0.0;
    for (int s = 0; s < S; ++s) {
      row[s] = 0.85 * row[s] / sum + 0.15 / S;
      mixed_sum += row[s];
    }
    for (int s = 0; s < S; ++s) row[s] /= mixed_sum;
  }

  MdpSpec spec;
  spec.num_states = S;
  spec.num_actions = A;
  spec.horizon = H;
  spec.rewards.assign(static_cast<std::size_t>(H) * S * A, 0.0);
  spec.transitions.assign(static_cast<std::size_t>(H) * S * A * S, 0.0);
  spec.init_dist.assign(S, 1.0 / S);

  for (int h = 0; h < H; ++h) {
    for (int s = 0; s < S; ++s) {
      const int best = static_cast<int>(uniform01(gen) * A);
      const double best_reward = 0.75 + 0.2 * uniform01(gen);
      for (int a = 0; a < A; ++a) {
        double r;
        if (a == best) {
          r = best_reward;
        } else {
          const double hi = std::max(best_reward - margin, 0.06);
          r = 0.05 + (hi - 0.05) * uniform01(gen);
        }
        spec.rewards[spec.reward_index(h, s, a)] = r;
        const auto& row = rows[static_cast<std::size_t>(h) * C + cluster[static_cast<std::size_t>(s) * A + a]];
        for (int next = 0; next < S; ++next)
          spec.transitions[spec.transition_index(h, s, a, next)] = row[next];
      }
    }
  }

  RepresentationClass cls;
  cls.num_states = S;
  cls.num_actions = A;
  cls.horizon = H;
  cls.psi = make_state_features(Eigen::MatrixXd::Identity(S, S));

  FeatureMap fine;
  fine.name = "fine";
  fine.dim = S * A;
  fine.num_actions = A;
  fine.table = Eigen::MatrixXd::Identity(S * A, S * A);
  BilinearModel fine_model;
  for (int h = 0; h < H; ++h) fine_model.per_step.push_back(kernel_matrix(spec, h));
  fine_model.residual = 0.0;
  cls.maps.push_back(std::move(fine));
  cls.models.push_back(std::move(fine_model));

  FeatureMap coarse;
  coarse.name = "coarse";
  coarse.dim = C;
  coarse.num_actions = A;
  coarse.table = Eigen::MatrixXd::Zero(S * A, C);
  for (int i = 0; i < S * A; ++i) coarse.table(i, cluster[i]) = 1.0;
  BilinearModel coarse_model;
  for (int h = 0; h < H; ++h) {
    Eigen::MatrixXd m(C, S);
    for (int c = 0; c < C; ++c)
      for (int next = 0; next < S; ++next) m(c, next) = rows[static_cast<std::size_t>(h) * C + c][next];
    coarse_model.per_step.push_back(std::move(m));
  }
  coarse_model.residual = 0.0;
  cls.maps.push_back(std::move(coarse));
  cls.models.push_back(std::move(coarse_model));

  for (int copy = 0; copy < params.rotated_coarse_copies; ++copy) {
    const Eigen::MatrixXd rotation = random_rotation(C, gen);
    auto [map, model] = rotate_map(cls.maps[1], cls.models[1], rotation,
                                   "coarse_rot" + std::to_string(copy + 1));
    const ResidualProbe probe = reconstruction_residual(spec, map, cls.psi, model.per_step);
    model.residual = probe.value;
    cls.maps.push_back(std::move(map));
    cls.models.push_back(std::move(model));
  }

  cls.constants = compute_constants(cls);
  return {std::move(spec), std::move(cls)};
}

RepresentationClass rotate_class(const RepresentationClass& cls, std::uint64_t seed) {
  std::mt19937_64 gen = named_stream(seed, "generator");
  std::vector<Eigen::MatrixXd> rotations;
  rotations.reserve(cls.maps.size());
  for (const auto& map : cls.maps) rotations.push_back(random_rotation(map.dim, gen));
  return rotate_class(cls, rotations);
}

RepresentationClass rotate_class(const RepresentationClass& cls,
                                 const std::vector<Eigen::MatrixXd>& rotations) {
  if (!cls.fitted()) throw std::logic_error("rotate_class: class has no fitted models");
  if (rotations.size() != cls.maps.size())
    throw std::invalid_argument("rotate_class: one rotation per map required");

  RepresentationClass rotated = cls;
  for (std::size_t m = 0; m < cls.maps.size(); ++m) {
    const Eigen::MatrixXd& r = rotations[m];
    if (r.rows() != cls.maps[m].dim || r.cols() != cls.maps[m].dim)
      throw std::invalid_argument("rotate_class: rotation shape mismatch for map '" + cls.maps[m].name + "'");
    if (condition_number(r) > 1e6)
      throw std::invalid_argument("rotate_class: rotation for map '" + cls.maps[m].name +
                                  "' is numerically singular (condition number > 1e6)");
    auto [map, model] = rotate_map(cls.maps[m], cls.models[m], r, cls.maps[m].name + "_rot");
    // exact kernel preservation up to roundoff; track drift against the source
    double drift = 0.0;
    for (int h = 0; h < cls.horizon; ++h) {
      const Eigen::MatrixXd before = cls.maps[m].table * cls.models[m].per_step[h] * cls.psi.table.transpose();
      const Eigen::MatrixXd after = map.table * model.per_step[h] * cls.psi.table.transpose();
      drift = std::max(drift, (before - after).cwiseAbs().maxCoeff());
    }
    model.residual = cls.models[m].residual + drift;
    rotated.maps[m] = std::move(map);
    rotated.models[m] = std::move(model);
  }
  rotated.constants = compute_constants(rotated);
  return rotated;
}

RepresentationClass subset_class(const RepresentationClass& cls,
                                 const std::vector<int>& map_indices) {
  if (map_indices.empty()) throw std::invalid_argument("subset_class: empty selection");
  RepresentationClass out;
  out.num_states = cls.num_states;
  out.num_actions = cls.num_actions;
  out.horizon = cls.horizon;
  out.psi = cls.psi;
  for (int idx : map_indices) {
    if (idx < 0 || idx >= static_cast<int>(cls.maps.size()))
      throw std::invalid_argument("subset_class: map index out of range");
    out.maps.push_back(cls.maps[idx]);
    out.models.push_back(cls.models[idx]);
    out.constants.per_map.push_back(cls.constants.per_map.empty() ? MapConstants{}
                                                                  : cls.constants.per_map[idx]);
  }
  out.constants.c_psi = cls.constants.c_psi;
  out.constants.c_psi_exact = cls.constants.c_psi_exact;
  out.constants.c_psi_witness_signs = cls.constants.c_psi_witness_signs;
  out.constants.c_psi_prime = cls.constants.c_psi_prime;
  out.constants.c_psi_prime_witness_state = cls.constants.c_psi_prime_witness_state;
  return out;
}

double bilinear_residual(const MdpSpec& spec, const RepresentationClass& cls) {
  if (!cls.fitted()) throw std::logic_error("bilinear_residual: class has no fitted models");
  double worst = 0.0;
  for (std::size_t m = 0; m < cls.maps.size(); ++m)
    worst = std::max(worst, reconstruction_residual(spec, cls.maps[m], cls.psi, cls.models[m].per_step).value);
  return worst;
}

namespace {

json constants_to_json(const ConstantsReport& report) {
  json per_map = json::array();
  for (const auto& mc : report.per_map) {
    per_map.push_back(json{{"c_phi", mc.c_phi},
                           {"c_phi_witness", {mc.c_phi_witness_state, mc.c_phi_witness_action}},
                           {"c_m", mc.c_m},
                           {"c_m_witness_step", mc.c_m_witness_step}});
  }
  return json{{"per_map", std::move(per_map)},
              {"c_psi", report.c_psi},
              {"c_psi_exact", report.c_psi_exact},
              {"c_psi_witness_signs", report.c_psi_witness_signs},
              {"c_psi_prime", report.c_psi_prime},
              {"c_psi_prime_witness_state", report.c_psi_prime_witness_state}};
}

ConstantsReport constants_from_json(const json& j) {
  ConstantsReport report;
  for (const auto& entry : j.at("per_map")) {
    MapConstants mc;
    mc.c_phi = entry.at("c_phi").get<double>();
    mc.c_phi_witness_state = entry.at("c_phi_witness").at(0).get<int>();
    mc.c_phi_witness_action = entry.at("c_phi_witness").at(1).get<int>();
    mc.c_m = entry.at("c_m").get<double>();
    mc.c_m_witness_step = entry.at("c_m_witness_step").get<int>();
    report.per_map.push_back(mc);
  }
  report.c_psi = j.at("c_psi").get<double>();
  report.c_psi_exact = j.at("c_psi_exact").get<bool>();
  report.c_psi_witness_signs = j.at("c_psi_witness_signs").get<std::vector<int>>();
  report.c_psi_prime = j.at("c_psi_prime").get<double>();
  report.c_psi_prime_witness_state = j.at("c_psi_prime_witness_state").get<int>();
  return report;
}

}  // namespace

std::string class_to_json_string(const RepresentationClass& cls) {
  json maps = json::array();
  json models = json::array();
  json residuals = json::array();
  for (std::size_t m = 0; m < cls.maps.size(); ++m) {
    maps.push_back(json{{"name", cls.maps[m].name},
                        {"d", cls.maps[m].dim},
                        {"table", matrix_to_json(cls.maps[m].table)}});
    json steps = json::array();
    for (const auto& step : cls.models[m].per_step) steps.push_back(matrix_to_json(step));
    models.push_back(std::move(steps));
    residuals.push_back(cls.models[m].residual);
  }
  json j{{"num_states", cls.num_states},
         {"num_actions", cls.num_actions},
         {"horizon", cls.horizon},
         {"psi", matrix_to_json(cls.psi.table)},
         {"feature_maps", std::move(maps)},
         {"models", std::move(models)},
         {"residuals", std::move(residuals)},
         {"constants", constants_to_json(cls.constants)}};
  return j.dump(2);
}

RepresentationClass class_from_json_string(const std::string& text) {
  RepresentationClass cls;
  try {
    json j = json::parse(text);
    cls.num_states = j.at("num_states").get<int>();
    cls.num_actions = j.at("num_actions").get<int>();
    cls.horizon = j.at("horizon").get<int>();
    cls.psi = make_state_features(matrix_from_json(j.at("psi")));
    const auto& maps = j.at("feature_maps");
    const auto& models = j.at("models");
    const auto& residuals = j.at("residuals");
    if (maps.size() != models.size() || maps.size() != residuals.size())
      throw std::invalid_argument("class JSON: feature_maps and models length mismatch");
    for (std::size_t m = 0; m < maps.size(); ++m) {
      FeatureMap map;
      map.name = maps.at(m).at("name").get<std::string>();
      map.dim = maps.at(m).at("d").get<int>();
      map.num_actions = cls.num_actions;
      map.table = matrix_from_json(maps.at(m).at("table"));
      if (map.table.rows() != static_cast<Eigen::Index>(cls.num_states) * cls.num_actions ||
          map.table.cols() != map.dim)
        throw std::invalid_argument("class JSON: feature table shape mismatch for '" + map.name + "'");
      BilinearModel model;
      for (const auto& step : models.at(m)) model.per_step.push_back(matrix_from_json(step));
      if (model.per_step.size() != static_cast<std::size_t>(cls.horizon))
        throw std::invalid_argument("class JSON: model step count mismatch for '" + map.name + "'");
      model.residual = residuals.at(m).get<double>();
      cls.maps.push_back(std::move(map));
      cls.models.push_back(std::move(model));
    }
    cls.constants = constants_from_json(j.at("constants"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("class JSON: ") + e.what());
  }
  return cls;
}

RepresentationClass load_class(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open class file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return class_from_json_string(buffer.str());
}

void save_class(const RepresentationClass& cls, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write class file: " + path);
  out << class_to_json_string(cls) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string coverage_to_json_string(const CoverageReport& report, const RepresentationClass& cls) {
  json sigma = json::object();
  json degenerate = json::object();
  for (int m = 0; m < report.num_maps; ++m) {
    sigma[cls.maps[m].name] = report.sigma[m];
    degenerate[cls.maps[m].name] = static_cast<bool>(report.has_degenerate_step[m]);
  }
  json uncovered = json::array();
  for (const auto& triple : report.uncovered)
    uncovered.push_back(json::array({triple[0], triple[1], triple[2]}));
  json per_h = json::array();
  for (bool covered : report.union_covered) per_h.push_back(covered);
  json j{{"rank_tol", report.rank_tol},
         {"assumption3_holds", report.assumption3_holds},
         {"sigma", std::move(sigma)},
         {"has_degenerate_step", std::move(degenerate)},
         {"union_covered_per_h", std::move(per_h)},
         {"uncovered_count", report.uncovered.size()},
         {"uncovered", std::move(uncovered)}};
  return j.dump(2);
}

std::string uncovered_to_csv(const CoverageReport& report) {
  std::ostringstream os;
  os << "h,s,a\n";
  for (const auto& triple : report.uncovered)
    os << triple[0] << ',' << triple[1] << ',' << triple[2] << '\n';
  return os.str();
}

}  // namespace relex
