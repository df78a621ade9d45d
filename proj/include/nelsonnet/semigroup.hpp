#pragma once

// Semigroups e^{-beta H}, Lie-Trotter products, spectral clamps and the
// positivity-equivalence harness comparing a full Hamiltonian with its
// decoupled tensor counterpart.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nelsonnet/cone.hpp"
#include "nelsonnet/errors.hpp"
#include "nelsonnet/fock.hpp"
#include "nelsonnet/linalg.hpp"

namespace nelsonnet {

/// Runs fn(0..n-1) on up to `threads` workers. Each index writes its own
/// output slot, so results do not depend on scheduling.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct SemigroupPlan {
  enum class Method { dense, krylov };

  Method method = Method::dense;
  std::vector<double> betas = default_betas();
  int krylov_dim = 40;
  double tol = 1e-12;
  std::size_t dense_cap = 3000;
  unsigned threads = 1;

  /// Geometric grid 2^-6, 2^-5, ..., 2^2.
  static std::vector<double> default_betas() {
    std::vector<double> b;
    for (int e = -6; e <= 2; ++e) b.push_back(std::ldexp(1.0, e));
    return b;
  }

  void validate() const {
    if (betas.empty()) throw DomainError("beta grid is empty");
    for (std::size_t i = 0; i < betas.size(); ++i) {
      if (!(betas[i] > 0.0) || !std::isfinite(betas[i])) throw DomainError("beta values must be positive and finite");
      if (i > 0 && !(betas[i] > betas[i - 1])) throw DomainError("beta values must be strictly increasing");
    }
    if (krylov_dim < 2) throw DomainError("Krylov subspace size must be at least 2");
    if (!(tol > 0.0)) throw DomainError("semigroup tolerance must be positive");
  }
};

/// Dense e^{-beta H}; refuses dimensions above the plan's dense cap.
inline Eigen::MatrixXd semigroup_matrix(const SparseOperator& h, double beta, const SemigroupPlan& plan = {}) {
  if (static_cast<std::size_t>(h.dim()) > plan.dense_cap) {
    throw SizeError("dense semigroup requested", static_cast<std::size_t>(h.dim()), plan.dense_cap);
  }
  return linalg::semigroup_dense(h.dense(), beta);
}

struct SemigroupAction {
  Eigen::VectorXd value;
  bool dense_fallback = false;
  std::string notice;
};

/// e^{-beta H} psi. The Krylov path falls back to the dense matrix, with a
/// notice, when the projection does not converge within the plan's subspace size.
inline SemigroupAction semigroup_apply(const SparseOperator& h, double beta, const Eigen::VectorXd& psi,
                                       const SemigroupPlan& plan = {}) {
  if (!(beta >= 0.0)) throw DomainError("beta must be nonnegative");
  if (psi.size() != h.dim()) throw DomainError("vector dimension does not match the operator");
  if (!h.is_symmetric(1e-12)) throw DomainError("semigroup_apply needs a symmetric operator");
  SemigroupAction out;
  if (plan.method == SemigroupPlan::Method::krylov) {
    auto k = linalg::krylov_expv(h, beta, psi, plan.krylov_dim, plan.tol);
    if (k.converged) {
      out.value = std::move(k.value);
      return out;
    }
    out.dense_fallback = true;
    out.notice = "Krylov projection did not converge in " + std::to_string(k.steps) + " steps; using dense exponential";
  }
  out.value = semigroup_matrix(h, beta, plan) * psi;
  return out;
}

/// (e^{-beta L / l} e^{-beta W / l})^l for diagonal W.
inline Eigen::MatrixXd trotter_product(const SparseOperator& l_op, const SparseOperator& w, double beta, int steps) {
  if (steps < 1) throw DomainError("Trotter step count must be at least 1");
  if (!w.is_diagonal()) throw DomainError("Trotter multiplier W must be diagonal");
  if (l_op.dim() != w.dim()) throw DomainError("Trotter factors differ in dimension");
  if (!l_op.is_symmetric(1e-12) || !w.is_symmetric()) throw DomainError("Trotter factors must be symmetric");
  const double tau = beta / steps;
  const Eigen::MatrixXd el = linalg::semigroup_dense(l_op.dense(), tau);
  const Eigen::VectorXd ew = (-tau * w.diagonal_values()).array().exp();
  const Eigen::MatrixXd factor = el * ew.asDiagonal();
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(factor.rows(), factor.cols());
  Eigen::MatrixXd power = factor;
  for (int e = steps; e > 0; e >>= 1) {
    if (e & 1) result = result * power;
    if (e > 1) power = power * power;
  }
  return result;
}

enum class ClampSide { upper, lower };

/// W_n^+ keeps the diagonal entries <= n, W_n^- keeps those >= -n; the rest become 0.
inline SparseOperator spectral_clamp(const SparseOperator& w, double n, ClampSide side) {
  if (!w.is_diagonal()) throw DomainError("spectral clamp needs a diagonal operator");
  Eigen::VectorXd d = w.diagonal_values();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const bool keep = side == ClampSide::upper ? d(i) <= n : d(i) >= -n;
    if (!keep) d(i) = 0.0;
  }
  return SparseOperator::diagonal(d);
}

using RayMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// First ray pair (row, col) not covered by the mask, column-major order.
inline std::optional<std::pair<Eigen::Index, Eigen::Index>> first_unreached(const RayMask& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!m(r, c)) return std::make_pair(r, c);
    }
  }
  return std::nullopt;
}

struct BetaRecord {
  double beta = 0.0;
  double full_min_entry = 0.0;
  bool full_improves = false;
  std::optional<EntryWitness> full_witness;
  double tensor_min_entry = 0.0;
};

struct EquivalenceReport {
  bool full_side = false;    // e^{-beta H} > 0 entrywise for every beta in the grid
  bool tensor_side = false;  // every ray pair reached by e^{-beta L} for some beta in the grid
  std::optional<EntryWitness> full_witness;
  std::optional<std::pair<Eigen::Index, Eigen::Index>> unreached_pair;
  std::vector<BetaRecord> per_beta;
  RayMask reached;  // (r, c) true when some beta gives <e_r | L e_c> > 0

  bool agree() const { return full_side == tensor_side; }
};

/// Both sides of the local-reduction equivalence on the supplied beta grid.
/// Side (a) tests e^{-beta H_full}; side (b) tests L = E^*(e^{-beta H_1} (x) e^{-beta H_2})E,
/// i.e. the decomposition with the cross term dropped.
inline EquivalenceReport positivity_equivalence_scan(const SparseOperator& h_full, const SparseOperator& h_first,
                                                     const SparseOperator& h_second, const FactorizationMap& map,
                                                     const SemigroupPlan& plan = {}) {
  plan.validate();
  if (static_cast<std::size_t>(h_full.dim()) != map.full_dim()) throw DomainError("full operator does not match the map");
  const std::size_t n = map.full_dim();
  if (n > plan.dense_cap) throw SizeError("positivity scan is dense", n, plan.dense_cap);

  EquivalenceReport rep;
  rep.per_beta.resize(plan.betas.size());
  std::vector<Eigen::MatrixXd> tensor(plan.betas.size());
  const Eigen::MatrixXd hf = h_full.dense();
  const Eigen::MatrixXd h1 = h_first.dense();
  const Eigen::MatrixXd h2 = h_second.dense();
  parallel_for(plan.betas.size(), plan.threads, [&](std::size_t k) {
    const double beta = plan.betas[k];
    BetaRecord& r = rep.per_beta[k];
    r.beta = beta;
    const Eigen::MatrixXd full = linalg::semigroup_dense(hf, beta);
    const OrderVerdict v = operator_order(full, OrderMode::improves);
    r.full_improves = v.holds;
    r.full_witness = v.witness;
    r.full_min_entry = v.extremal;
    tensor[k] = kron_embed(linalg::semigroup_dense(h1, beta), linalg::semigroup_dense(h2, beta), map);
    r.tensor_min_entry = tensor[k].minCoeff();
  });

  rep.full_side = true;
  for (const auto& r : rep.per_beta) {
    if (!r.full_improves) {
      rep.full_side = false;
      rep.full_witness = r.full_witness;
      break;
    }
  }
  const auto dim = static_cast<Eigen::Index>(n);
  rep.reached = RayMask::Constant(dim, dim, false);
  for (const auto& t : tensor) rep.reached = rep.reached.array() || (t.array() > 0.0);
  rep.unreached_pair = first_unreached(rep.reached);
  rep.tensor_side = !rep.unreached_pair;
  return rep;
}

/// Verdicts of both sides of the pairing/entrywise equivalence for a single
/// generator: e^{-tA} on the sampled times.
struct PairingVerdict {
  bool pairing = false;    // every ray pair positive for some sampled t
  bool entrywise = false;  // every entry positive for every sampled t
};

inline PairingVerdict pairing_equivalence(const Eigen::MatrixXd& a, const std::vector<double>& times) {
  PairingVerdict v;
  const Eigen::Index n = a.rows();
  RayMask reached = RayMask::Constant(n, n, false);
  v.entrywise = true;
  for (double t : times) {
    const Eigen::MatrixXd e = linalg::semigroup_dense(a, t);
    v.entrywise = v.entrywise && operator_order(e, OrderMode::improves).holds;
    reached = reached.array() || (e.array() > 0.0);
  }
  v.pairing = reached.all();
  return v;
}

}  // namespace nelsonnet
