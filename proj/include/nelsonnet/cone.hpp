#pragma once

// The Froehlich cone of the occupation basis (the nonnegative orthant) and the
// order relations, projectors and Perron-Frobenius checks built on it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nelsonnet/errors.hpp"
#include "nelsonnet/fock.hpp"
#include "nelsonnet/linalg.hpp"
#include "nelsonnet/modegrid.hpp"

namespace nelsonnet {

struct ConeTolerance {
  double membership = 1e-12;  // in cone: every coefficient >= -membership
  double strict = 1e-14;      // strictly positive: every coefficient > strict * max|coeff|
};

inline bool in_cone(const Eigen::VectorXd& v, double tol = ConeTolerance{}.membership) {
  return v.size() == 0 || v.minCoeff() >= -tol;
}

inline bool strictly_positive(const Eigen::VectorXd& v, double rel_tol = ConeTolerance{}.strict) {
  if (v.size() == 0) return false;
  return v.minCoeff() > rel_tol * v.cwiseAbs().maxCoeff();
}

struct EntryWitness {
  Eigen::Index row = -1;
  Eigen::Index col = -1;
  double value = 0.0;
};

enum class OrderMode { preserves, improves };

struct OrderVerdict {
  bool holds = false;
  std::optional<EntryWitness> witness;  // first offending entry when !holds
  double extremal = 0.0;                // smallest entry
};

/// A >= 0 (preserves) iff every entry >= -tol; A > 0 (improves) iff every
/// entry > tol. The orthant's extreme rays are the basis vectors, so these
/// entrywise tests are exactly the cone order relations.
inline OrderVerdict operator_order(const Eigen::MatrixXd& a, OrderMode mode, double tol = 0.0) {
  OrderVerdict v;
  v.holds = true;
  v.extremal = a.size() ? a.minCoeff() : 0.0;
  for (Eigen::Index c = 0; c < a.cols() && v.holds; ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double x = a(r, c);
      const bool bad = mode == OrderMode::preserves ? x < -tol : !(x > tol);
      if (bad) {
        v.holds = false;
        v.witness = EntryWitness{r, c, x};
        break;
      }
    }
  }
  return v;
}

inline OrderVerdict operator_order(const SparseOperator& a, OrderMode mode, double tol = 0.0) {
  return operator_order(a.dense(), mode, tol);
}

/// phi = phi_plus - phi_minus with disjointly supported nonnegative parts.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> jordan_decompose(const Eigen::VectorXd& phi) {
  return {phi.cwiseMax(0.0), (-phi).cwiseMax(0.0)};
}

/// xi ^ eta = eta - (xi - eta)_minus. In the orthant this is the entrywise
/// minimum, evaluated directly so that the result is symmetric in rounding too.
inline Eigen::VectorXd meet(const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
  if (xi.size() != eta.size()) throw DomainError("meet needs vectors of equal length");
  return xi.cwiseMin(eta);
}

/// Truncated coherent vector c * prod_i xi_i^{n_i} / sqrt(n_i!), renormalized.
struct CoherentVector {
  Eigen::VectorXd vector;
  double tail_mass = 0.0;  // untruncated weight above N_max, 1 - sum_{|n|<=N} |coeff|^2
};

inline CoherentVector coherent_vector(const OccupationBasis& basis, std::span<const double> xi) {
  if (xi.size() != static_cast<std::size_t>(basis.modes())) throw DomainError("xi needs one value per mode");
  double xi_norm2 = 0.0;
  for (double x : xi) {
    if (!(x > 0.0)) throw DomainError("xi must be strictly positive");
    xi_norm2 += x * x;
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t s = 0; s < basis.size(); ++s) {
    double log_c = -0.5 * xi_norm2;
    const auto st = basis.state(s);
    for (std::size_t i = 0; i < xi.size(); ++i) {
      if (st[i] == 0) continue;
      log_c += st[i] * std::log(xi[i]) - 0.5 * std::lgamma(st[i] + 1.0);
    }
    v(static_cast<Eigen::Index>(s)) = std::exp(log_c);
  }
  CoherentVector out;
  out.tail_mass = std::max(0.0, 1.0 - v.squaredNorm());
  out.vector = v.normalized();
  return out;
}

/// Reference vectors of the cone calculus: the coherent vector Omega built from
/// xi > 0 and the Fock vacuum omega.
struct ReferenceState {
  std::vector<double> xi;
  Eigen::VectorXd omega_ref;  // Omega
  Eigen::VectorXd vacuum;     // omega
  double tail_mass = 0.0;
};

/// Default xi_i = exp(-k_i^2 / 2) sqrt(w_i).
inline std::vector<double> default_xi(const ModeGrid& grid) {
  std::vector<double> xi(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) xi[i] = std::exp(-0.5 * grid.momentum_squared(i)) * std::sqrt(grid.weight(i));
  return xi;
}

inline Eigen::VectorXd vacuum_vector(const OccupationBasis& basis) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  v(0) = 1.0;
  return v;
}

inline ReferenceState reference_state(const OccupationBasis& basis, std::vector<double> xi) {
  ReferenceState r;
  const CoherentVector c = coherent_vector(basis, xi);
  r.xi = std::move(xi);
  r.omega_ref = c.vector;
  r.tail_mass = c.tail_mass;
  r.vacuum = vacuum_vector(basis);
  return r;
}

inline ReferenceState reference_state(const ModeGrid& grid, const OccupationBasis& basis) {
  if (grid.size() != static_cast<std::size_t>(basis.modes())) throw DomainError("grid and basis differ in mode count");
  return reference_state(basis, default_xi(grid));
}

/// max |Omega - E^*(Omega_1 (x) Omega_2)|: the product structure of Omega,
/// exact before truncation, here of the order of the tail masses.
inline double coherent_factorization_defect(const FactorizationMap& map, std::span<const double> xi) {
  std::vector<double> x1;
  std::vector<double> x2;
  for (auto i : map.left_modes()) x1.push_back(xi[i]);
  for (auto i : map.right_modes()) x2.push_back(xi[i]);
  OccupationBasis full(static_cast<int>(map.left_modes().size() + map.right_modes().size()), map.left().max_total());
  const Eigen::VectorXd omega = coherent_vector(full, xi).vector;
  const Eigen::VectorXd product =
      map.embed_product(coherent_vector(map.left(), x1).vector, coherent_vector(map.right(), x2).vector);
  return (omega - product).cwiseAbs().maxCoeff();
}

/// E^* (1 (x) |chi><chi|) E for a normalized cone vector chi on the second factor.
/// With chi = Omega_{Lambda^c} this is Q_Lambda; with the vacuum it is q_Lambda.
inline SparseOperator cone_projector(const FactorizationMap& map, const Eigen::VectorXd& chi) {
  if (static_cast<std::size_t>(chi.size()) != map.right().size()) {
    throw DomainError("projector state has the wrong dimension for the second factor");
  }
  if (!in_cone(chi)) throw DomainError("projector state is not in the cone");
  if (std::abs(chi.norm() - 1.0) > 1e-12) throw DomainError("projector state is not normalized");
  // Group full states by their first-factor index.
  std::vector<std::vector<std::size_t>> groups(map.left().size());
  for (std::size_t s = 0; s < map.full_dim(); ++s) groups[map.split(s).first].push_back(s);
  std::vector<SparseOperator::Triplet> t;
  for (const auto& g : groups) {
    for (auto r : g) {
      const double cr = chi(static_cast<Eigen::Index>(map.split(r).second));
      if (cr == 0.0) continue;
      for (auto c : g) {
        const double cc = chi(static_cast<Eigen::Index>(map.split(c).second));
        if (cc != 0.0) t.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), cr * cc);
      }
    }
  }
  return SparseOperator::from_triplets(static_cast<Eigen::Index>(map.full_dim()), t);
}

struct TensorConeVerdict {
  bool holds = false;
  std::optional<Eigen::Index> witness_column;
};

/// Every column of E must be a single unit entry (a full basis ray goes to a
/// product of factor rays) and distinct columns must hit distinct rows.
inline TensorConeVerdict tensor_cone_check(const Eigen::SparseMatrix<double>& isometry) {
  TensorConeVerdict v;
  std::vector<char> used(static_cast<std::size_t>(isometry.rows()), 0);
  for (Eigen::Index c = 0; c < isometry.outerSize(); ++c) {
    int count = 0;
    bool ok = true;
    for (Eigen::SparseMatrix<double>::InnerIterator it(isometry, c); it; ++it) {
      if (it.value() == 0.0) continue;
      ++count;
      if (it.value() != 1.0 || used[static_cast<std::size_t>(it.row())]) ok = false;
      used[static_cast<std::size_t>(it.row())] = 1;
    }
    if (count != 1 || !ok) {
      v.witness_column = c;
      return v;
    }
  }
  v.holds = true;
  return v;
}

inline TensorConeVerdict tensor_cone_check(const FactorizationMap& map) { return tensor_cone_check(map.isometry()); }

struct PerronOptions {
  double beta = 1.0;
  double gap_tol = 1e-8;
  double pos_tol = 1e-10;
  std::size_t dense_cap = 3000;
  bool cross_check = true;  // also test e^{-beta H} > 0 on the dense path
  std::uint64_t seed = 7;   // Lanczos start vector
};

struct PerronReport {
  double ground_energy = 0.0;
  double gap = 0.0;
  double min_entry = 0.0;           // of the unit ground vector after the sign fix
  Eigen::Index min_index = -1;
  bool unique_positive = false;     // gap > gap_tol and min_entry > pos_tol
  std::optional<bool> semigroup_improves;  // e^{-beta H} entrywise > 0 (dense path only)
  std::optional<EntryWitness> semigroup_witness;
  Eigen::VectorXd ground_vector;
  std::string solver;

  /// Perron-Frobenius-Faris consistency: improvement <=> simple positive ground state.
  bool consistent() const { return !semigroup_improves || *semigroup_improves == unique_positive; }
};

/// Lowest eigenpair, spectral gap and positivity of the ground vector,
/// cross-checked against positivity improvement of e^{-beta H}.
inline PerronReport perron_frobenius_check(const SparseOperator& h, const PerronOptions& opt = {}) {
  if (!h.is_symmetric(1e-12)) throw DomainError("perron_frobenius_check needs a symmetric operator");
  PerronReport rep;
  const auto n = static_cast<std::size_t>(h.dim());
  if (n == 0) throw DomainError("empty operator");
  Eigen::MatrixXd dense;
  if (n <= opt.dense_cap) {
    dense = h.dense();
    const auto eig = linalg::symmetric_eigen(dense);
    rep.ground_energy = eig.values(0);
    rep.gap = n > 1 ? eig.values(1) - eig.values(0) : std::numeric_limits<double>::infinity();
    rep.ground_vector = eig.vectors.col(0);
    rep.solver = "dense";
  } else {
    const auto eig = linalg::lanczos_lowest(h, n > 1 ? 2 : 1, 300, 1e-10, opt.seed);
    rep.ground_energy = eig.values(0);
    rep.gap = n > 1 ? eig.values(1) - eig.values(0) : std::numeric_limits<double>::infinity();
    rep.ground_vector = eig.vectors.col(0);
    rep.solver = "lanczos";
  }
  if (rep.ground_vector.sum() < 0.0) rep.ground_vector = -rep.ground_vector;
  rep.min_entry = rep.ground_vector.minCoeff(&rep.min_index);
  rep.unique_positive = rep.gap > opt.gap_tol && rep.min_entry > opt.pos_tol;
  if (opt.cross_check && dense.size() > 0) {
    const auto verdict = operator_order(linalg::semigroup_dense(dense, opt.beta), OrderMode::improves);
    rep.semigroup_improves = verdict.holds;
    rep.semigroup_witness = verdict.witness;
  }
  return rep;
}

}  // namespace nelsonnet
