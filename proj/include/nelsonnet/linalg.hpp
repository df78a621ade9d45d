#pragma once

// Dense matrix exponentials and symmetric eigensolvers used by the semigroup
// and cone modules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include "nelsonnet/errors.hpp"
#include "nelsonnet/fock.hpp"

namespace nelsonnet::linalg {

/// True when every off-diagonal entry is >= 0 (A generates a nonnegative semigroup e^{tA}).
inline bool has_nonnegative_off_diagonal(const Eigen::MatrixXd& a) {
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      if (r != c && a(r, c) < 0.0) return false;
    }
  }
  return true;
}

/// e^A for a matrix with nonnegative off-diagonal entries.
///
/// A is shifted to B = A + sI >= 0 entrywise, so e^A = e^{-s} e^B and every
/// term of the Taylor series and of the squaring phase is a sum of
/// nonnegative numbers. Each entry is therefore computed to relative
/// accuracy, and an entry is exactly zero iff it is structurally zero.
inline Eigen::MatrixXd expm_nonnegative(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DomainError("expm needs a square matrix");
  if (!has_nonnegative_off_diagonal(a)) throw DomainError("expm_nonnegative needs nonnegative off-diagonal entries");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  const double shift = std::max(0.0, -a.diagonal().minCoeff());
  Eigen::MatrixXd b = a;
  b.diagonal().array() += shift;

  // Scale so that the max row sum of B / 2^j is at most 1/2.
  const double norm = b.rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const double scale = std::ldexp(1.0, -squarings);
  const Eigen::MatrixXd x = b * scale;

  // Taylor series; the tail after degree q is bounded by 0.5^{q+1}/(q+1)! * e^{0.5}.
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int q = 1; q <= 30; ++q) {
    term = term * x / static_cast<double>(q);
    result += term;
    if (term.maxCoeff() <= 1e-20 * result.maxCoeff()) break;
  }
  // Apply e^{-shift} per factor so neither e^B nor e^{-shift} over/underflows alone.
  result *= std::exp(-shift * scale);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

/// General dense exponential (Pade scaling-and-squaring).
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DomainError("expm needs a square matrix");
  if (a.rows() == 0) return a;
  return a.exp();
}

/// e^{-beta H} for symmetric H. Uses the sign-exact path whenever H has
/// nonpositive off-diagonal entries.
inline Eigen::MatrixXd semigroup_dense(const Eigen::MatrixXd& h, double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be nonnegative");
  const Eigen::MatrixXd a = -beta * h;
  if (has_nonnegative_off_diagonal(a)) return expm_nonnegative(a);
  return expm(a);
}

struct Eigenpairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

inline Eigenpairs symmetric_eigen(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw ConvergenceError("dense symmetric eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Deterministic positive start vector for Krylov methods.
inline Eigen::VectorXd start_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v.normalized();
}

/// Lowest `count` eigenpairs of a sparse symmetric operator by Lanczos with
/// full reorthogonalization. Throws ConvergenceError if the residuals stay
/// above `tol` after `max_steps` steps.
inline Eigenpairs lanczos_lowest(const SparseOperator& h, int count, int max_steps = 300, double tol = 1e-10,
                                 std::uint64_t seed = 7) {
  const Eigen::Index n = h.dim();
  if (count < 1 || count > n) throw DomainError("lanczos: invalid number of eigenpairs");
  const Eigen::Index steps = std::min<Eigen::Index>(n, max_steps);
  Eigen::MatrixXd v(n, steps);
  std::vector<double> alpha;
  std::vector<double> beta;
  v.col(0) = start_vector(n, seed);
  Eigen::Index m = 0;
  Eigenpairs best;
  for (Eigen::Index j = 0; j < steps; ++j) {
    Eigen::VectorXd w = h * Eigen::VectorXd(v.col(j));
    alpha.push_back(v.col(j).dot(w));
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeff = v.leftCols(j + 1).transpose() * w;
      w -= v.leftCols(j + 1) * coeff;
    }
    const double b = w.norm();
    m = j + 1;
    const bool invariant = b <= 1e-13 * std::max(1.0, std::abs(alpha.back()));
    if (m >= count && (m % 5 == 0 || invariant || m == steps)) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        t(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(t);
      double worst = 0.0;
      for (int k = 0; k < count; ++k) worst = std::max(worst, std::abs(b * small.eigenvectors()(m - 1, k)));
      const double scale = std::max(1.0, small.eigenvalues().cwiseAbs().maxCoeff());
      if (worst <= tol * scale || invariant || m == n) {
        best.values = small.eigenvalues().head(count);
        best.vectors = v.leftCols(m) * small.eigenvectors().leftCols(count);
        for (int k = 0; k < count; ++k) best.vectors.col(k).normalize();
        return best;
      }
    }
    if (invariant) break;
    if (j + 1 < steps) {
      beta.push_back(b);
      v.col(j + 1) = w / b;
    }
  }
  throw ConvergenceError("lanczos did not converge after " + std::to_string(m) + " steps");
}

struct KrylovResult {
  Eigen::VectorXd value;
  int steps = 0;
  bool converged = false;
};

/// e^{-beta H} psi by a Lanczos projection of dimension at most `max_dim`.
/// Convergence is declared when two successive approximations agree to `tol`
/// relative to the size of the approximation, or on an invariant subspace.
inline KrylovResult krylov_expv(const SparseOperator& h, double beta, const Eigen::VectorXd& psi, int max_dim,
                                double tol) {
  const Eigen::Index n = h.dim();
  if (psi.size() != n) throw DomainError("krylov: vector dimension mismatch");
  KrylovResult out;
  const double norm = psi.norm();
  if (norm == 0.0 || beta == 0.0) {
    out.value = psi;
    out.converged = true;
    return out;
  }
  const Eigen::Index steps = std::min<Eigen::Index>(n, max_dim);
  Eigen::MatrixXd v(n, steps);
  v.col(0) = psi / norm;
  std::vector<double> alpha;
  std::vector<double> off;
  Eigen::VectorXd previous;
  for (Eigen::Index j = 0; j < steps; ++j) {
    Eigen::VectorXd w = h * Eigen::VectorXd(v.col(j));
    alpha.push_back(v.col(j).dot(w));
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeff = v.leftCols(j + 1).transpose() * w;
      w -= v.leftCols(j + 1) * coeff;
    }
    const double b = w.norm();
    const Eigen::Index m = j + 1;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = off[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(t);
    const Eigen::VectorXd coeffs =
        small.eigenvectors() *
        (small.eigenvalues().array() * -beta).exp().matrix().cwiseProduct(small.eigenvectors().row(0).transpose());
    Eigen::VectorXd current = norm * (v.leftCols(m) * coeffs);
    out.steps = static_cast<int>(m);
    const bool invariant = b <= 1e-13 * std::max(1.0, t.cwiseAbs().maxCoeff());
    if (invariant || m == n || (previous.size() == n && (current - previous).norm() <= tol * current.norm())) {
      out.value = std::move(current);
      out.converged = true;
      return out;
    }
    previous = std::move(current);
    if (j + 1 < steps) {
      off.push_back(b);
      v.col(j + 1) = w / b;
    }
  }
  out.value = previous;
  out.converged = false;
  return out;
}

}  // namespace nelsonnet::linalg
