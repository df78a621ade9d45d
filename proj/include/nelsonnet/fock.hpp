#pragma once

// Truncated bosonic Fock space: occupation basis, sparse operators, ladder
// operators, second quantization and tensor factorization across mode partitions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nelsonnet/errors.hpp"
#include "nelsonnet/modegrid.hpp"

namespace nelsonnet {

/// All occupation vectors n = (n_1..n_M) with sum n_i <= N_max. States are
/// ordered by total number, and within a sector by descending lexicographic
/// order, so index 0 is the vacuum.
class OccupationBasis {
 public:
  static constexpr std::size_t kDefaultDimensionCap = 2'000'000;

  OccupationBasis(int modes, int max_total, std::size_t dimension_cap = kDefaultDimensionCap)
      : modes_(modes), max_total_(max_total) {
    if (modes < 0 || max_total < 0) throw DomainError("basis needs modes >= 0 and max_total >= 0");
    const std::size_t dim = dimension(modes, max_total, dimension_cap);
    states_.reserve(dim * static_cast<std::size_t>(modes));
    std::vector<int> current(static_cast<std::size_t>(modes), 0);
    for (int n = 0; n <= max_total; ++n) emit_sector(current, 0, n);
    size_ = dim;
  }

  /// C(M + N, N), or SizeError once it passes `cap`.
  static std::size_t dimension(int modes, int max_total, std::size_t cap = kDefaultDimensionCap) {
    // C(M+N, N) built incrementally as prod_{j=1..N} (M+j)/j; every partial
    // product is itself a binomial coefficient, so the division is exact.
    unsigned __int128 value = 1;
    for (int j = 1; j <= max_total; ++j) {
      value = value * static_cast<unsigned __int128>(modes + j) / static_cast<unsigned __int128>(j);
      if (value > cap) {
        throw SizeError("occupation basis too large for M=" + std::to_string(modes) +
                            ", N_max=" + std::to_string(max_total),
                        value > std::numeric_limits<std::size_t>::max()
                            ? std::numeric_limits<std::size_t>::max()
                            : static_cast<std::size_t>(value),
                        cap);
      }
    }
    if (value > cap) throw SizeError("occupation basis too large", static_cast<std::size_t>(value), cap);
    return static_cast<std::size_t>(value);
  }

  int modes() const { return modes_; }
  int max_total() const { return max_total_; }
  std::size_t size() const { return size_; }

  std::span<const int> state(std::size_t index) const {
    return {states_.data() + index * static_cast<std::size_t>(modes_), static_cast<std::size_t>(modes_)};
  }

  int occupation(std::size_t index, std::size_t mode) const {
    return states_[index * static_cast<std::size_t>(modes_) + mode];
  }

  int total(std::size_t index) const {
    int t = 0;
    for (int n : state(index)) t += n;
    return t;
  }

  std::optional<std::size_t> index_of(std::span<const int> occ) const {
    if (occ.size() != static_cast<std::size_t>(modes_)) return std::nullopt;
    int t = 0;
    for (int n : occ) {
      if (n < 0) return std::nullopt;
      t += n;
    }
    if (t > max_total_) return std::nullopt;
    std::size_t lo = 0;
    std::size_t hi = size_;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (precedes(state(mid), occ, total(mid), t)) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    if (lo < size_ && std::equal(occ.begin(), occ.end(), state(lo).begin())) return lo;
    return std::nullopt;
  }

 private:
  static bool precedes(std::span<const int> a, std::span<const int> b, int ta, int tb) {
    if (ta != tb) return ta < tb;
    return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  }

  void emit_sector(std::vector<int>& current, std::size_t mode, int remaining) {
    if (current.empty()) return;  // zero modes: the single vacuum state has no entries
    if (mode + 1 == current.size()) {
      current[mode] = remaining;
      states_.insert(states_.end(), current.begin(), current.end());
      current[mode] = 0;
      return;
    }
    for (int n = remaining; n >= 0; --n) {
      current[mode] = n;
      emit_sector(current, mode + 1, remaining - n);
    }
    current[mode] = 0;
  }

  int modes_ = 0;
  int max_total_ = 0;
  std::size_t size_ = 0;
  std::vector<int> states_;
};

/// Real sparse matrix acting on an occupation basis.
class SparseOperator {
 public:
  using Matrix = Eigen::SparseMatrix<double>;
  using Triplet = Eigen::Triplet<double>;

  SparseOperator() = default;
  explicit SparseOperator(Eigen::Index dim) : m_(dim, dim) {}
  explicit SparseOperator(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DomainError("operator must be square");
    m_.prune(0.0);
    m_.makeCompressed();
  }

  /// Duplicate (row, col) entries are summed; exact zeros are dropped.
  static SparseOperator from_triplets(Eigen::Index dim, const std::vector<Triplet>& triplets) {
    Matrix m(dim, dim);
    for (const auto& t : triplets) {
      if (t.row() < 0 || t.row() >= dim || t.col() < 0 || t.col() >= dim) {
        throw DomainError("triplet index out of range");
      }
    }
    m.setFromTriplets(triplets.begin(), triplets.end());
    return SparseOperator(std::move(m));
  }

  static SparseOperator identity(Eigen::Index dim) {
    Matrix m(dim, dim);
    m.setIdentity();
    return SparseOperator(std::move(m));
  }

  static SparseOperator diagonal(const Eigen::VectorXd& d) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(d.size()));
    for (Eigen::Index i = 0; i < d.size(); ++i) t.emplace_back(i, i, d(i));
    return from_triplets(d.size(), t);
  }

  static SparseOperator from_dense(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw DomainError("operator must be square");
    return SparseOperator(Matrix(a.sparseView()));
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }
  Eigen::Index nonzeros() const { return m_.nonZeros(); }
  double coeff(Eigen::Index r, Eigen::Index c) const { return m_.coeff(r, c); }

  SparseOperator transpose() const { return SparseOperator(Matrix(m_.transpose())); }

  bool is_diagonal() const {
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c) {
      for (Matrix::InnerIterator it(m_, c); it; ++it) {
        if (it.row() != it.col()) return false;
      }
    }
    return true;
  }

  bool is_symmetric(double tol = 0.0) const {
    const Matrix diff = m_ - Matrix(m_.transpose());
    for (Eigen::Index c = 0; c < diff.outerSize(); ++c) {
      for (Matrix::InnerIterator it(diff, c); it; ++it) {
        if (std::abs(it.value()) > tol) return false;
      }
    }
    return true;
  }

  Eigen::VectorXd diagonal_values() const { return m_.diagonal(); }

  /// Largest off-diagonal entry (or -inf when there is none).
  double max_off_diagonal() const {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c) {
      for (Matrix::InnerIterator it(m_, c); it; ++it) {
        if (it.row() != it.col()) best = std::max(best, it.value());
      }
    }
    return best;
  }

  /// Entries sorted by (row, col).
  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(m_.nonZeros()));
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c) {
      for (Matrix::InnerIterator it(m_, c); it; ++it) out.emplace_back(it.row(), it.col(), it.value());
    }
    std::sort(out.begin(), out.end(), [](const Triplet& a, const Triplet& b) {
      return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
    });
    return out;
  }

  SparseOperator& operator+=(const SparseOperator& o) {
    check_dim(o);
    m_ += o.m_;
    m_.prune(0.0);
    return *this;
  }
  SparseOperator& operator-=(const SparseOperator& o) {
    check_dim(o);
    m_ -= o.m_;
    m_.prune(0.0);
    return *this;
  }
  SparseOperator& operator*=(double s) {
    m_ *= s;
    m_.prune(0.0);
    return *this;
  }

  friend SparseOperator operator+(SparseOperator a, const SparseOperator& b) { return a += b; }
  friend SparseOperator operator-(SparseOperator a, const SparseOperator& b) { return a -= b; }
  friend SparseOperator operator*(double s, SparseOperator a) { return a *= s; }
  friend SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
    a.check_dim(b);
    return SparseOperator(Matrix(a.m_ * b.m_));
  }
  friend Eigen::VectorXd operator*(const SparseOperator& a, const Eigen::VectorXd& v) { return a.m_ * v; }

 private:
  void check_dim(const SparseOperator& o) const {
    if (o.dim() != dim()) throw DomainError("operator dimensions differ");
  }

  Matrix m_;
};

/// Max-abs entry of a - b.
inline double max_abs_difference(const SparseOperator& a, const SparseOperator& b) {
  if (a.dim() != b.dim()) throw DomainError("operator dimensions differ");
  const SparseOperator::Matrix d = a.matrix() - b.matrix();
  double best = 0.0;
  for (Eigen::Index c = 0; c < d.outerSize(); ++c) {
    for (SparseOperator::Matrix::InnerIterator it(d, c); it; ++it) best = std::max(best, std::abs(it.value()));
  }
  return best;
}

/// Plain-text triplet export: a "# dim N" line, then "row col value" per entry.
inline void write_triplets(const SparseOperator& op, std::ostream& os) {
  os << "# dim " << op.dim() << "\n";
  os << std::setprecision(17);
  for (const auto& t : op.triplets()) os << t.row() << ' ' << t.col() << ' ' << t.value() << '\n';
}

inline SparseOperator read_triplets(std::istream& is) {
  std::string hash;
  std::string word;
  Eigen::Index dim = -1;
  if (!(is >> hash >> word >> dim) || hash != "#" || word != "dim" || dim < 0) {
    throw DomainError("triplet stream must start with '# dim N'");
  }
  std::vector<SparseOperator::Triplet> t;
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  double v = 0.0;
  while (is >> r >> c >> v) t.emplace_back(r, c, v);
  return SparseOperator::from_triplets(dim, t);
}

enum class LadderKind { annihilate, create };

/// a(f) = sum_i f_i a_i, or its transpose a(f)^*. Creation out of the top
/// sector is truncated to zero.
inline SparseOperator ladder_operator(const OccupationBasis& basis, std::span<const double> f, LadderKind kind) {
  if (f.size() != static_cast<std::size_t>(basis.modes())) {
    throw DomainError("ladder coefficient vector has length " + std::to_string(f.size()) + ", basis has " +
                      std::to_string(basis.modes()) + " modes");
  }
  std::vector<SparseOperator::Triplet> t;
  std::vector<int> occ(static_cast<std::size_t>(basis.modes()));
  for (std::size_t s = 0; s < basis.size(); ++s) {
    const auto st = basis.state(s);
    std::copy(st.begin(), st.end(), occ.begin());
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (occ[i] == 0 || f[i] == 0.0) continue;
      const double amp = f[i] * std::sqrt(static_cast<double>(occ[i]));
      --occ[i];
      const auto target = basis.index_of(occ);
      ++occ[i];
      const auto row = static_cast<Eigen::Index>(*target);
      const auto col = static_cast<Eigen::Index>(s);
      if (kind == LadderKind::annihilate) {
        t.emplace_back(row, col, amp);
      } else {
        t.emplace_back(col, row, amp);
      }
    }
  }
  return SparseOperator::from_triplets(static_cast<Eigen::Index>(basis.size()), t);
}

/// Single-mode annihilator/creator a_i, a_i^*.
inline SparseOperator mode_ladder(const OccupationBasis& basis, std::size_t mode, LadderKind kind) {
  std::vector<double> e(static_cast<std::size_t>(basis.modes()), 0.0);
  if (mode >= e.size()) throw DomainError("mode index out of range");
  e[mode] = 1.0;
  return ladder_operator(basis, e, kind);
}

/// Per-state values sum_i F_i n_i.
inline Eigen::VectorXd second_quantization_values(const OccupationBasis& basis, std::span<const double> F) {
  if (F.size() != static_cast<std::size_t>(basis.modes())) {
    throw DomainError("second quantization needs one value per mode");
  }
  Eigen::VectorXd d(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t s = 0; s < basis.size(); ++s) {
    double sum = 0.0;
    const auto st = basis.state(s);
    for (std::size_t i = 0; i < F.size(); ++i) sum += F[i] * st[i];
    d(static_cast<Eigen::Index>(s)) = sum;
  }
  return d;
}

/// dGamma(F): diagonal with entry sum_i F_i n_i.
inline SparseOperator second_quantization(const OccupationBasis& basis, std::span<const double> F) {
  return SparseOperator::diagonal(second_quantization_values(basis, F));
}

/// Index bijection between the truncated Fock space over S1 u S2 and the
/// (p + q <= N_max) sector of F(S1) (x) F(S2). Tensor index = i1 * dim2 + i2.
class FactorizationMap {
 public:
  FactorizationMap(const OccupationBasis& basis, std::vector<std::size_t> first, std::vector<std::size_t> second)
      : first_modes_(std::move(first)),
        second_modes_(std::move(second)),
        left_(static_cast<int>(first_modes_.size()), basis.max_total()),
        right_(static_cast<int>(second_modes_.size()), basis.max_total()) {
    std::vector<int> seen(static_cast<std::size_t>(basis.modes()), 0);
    for (auto i : first_modes_) {
      if (i >= seen.size()) throw DomainError("partition mode out of range");
      ++seen[i];
    }
    for (auto i : second_modes_) {
      if (i >= seen.size()) throw DomainError("partition mode out of range");
      ++seen[i];
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (seen[i] != 1) throw DomainError("mode " + std::to_string(i) + " is not covered exactly once by the partition");
    }

    const std::size_t dim = basis.size();
    left_index_.resize(dim);
    right_index_.resize(dim);
    full_index_.assign(left_.size() * right_.size(), -1);
    std::vector<int> a(first_modes_.size());
    std::vector<int> b(second_modes_.size());
    for (std::size_t s = 0; s < dim; ++s) {
      const auto st = basis.state(s);
      for (std::size_t j = 0; j < a.size(); ++j) a[j] = st[first_modes_[j]];
      for (std::size_t j = 0; j < b.size(); ++j) b[j] = st[second_modes_[j]];
      left_index_[s] = *left_.index_of(a);
      right_index_[s] = *right_.index_of(b);
      full_index_[left_index_[s] * right_.size() + right_index_[s]] = static_cast<std::ptrdiff_t>(s);
    }
  }

  FactorizationMap(const OccupationBasis& basis, const Region& first, const Region& second)
      : FactorizationMap(basis, checked_members(basis, first, second, true),
                         checked_members(basis, first, second, false)) {}

  const OccupationBasis& left() const { return left_; }
  const OccupationBasis& right() const { return right_; }
  const std::vector<std::size_t>& left_modes() const { return first_modes_; }
  const std::vector<std::size_t>& right_modes() const { return second_modes_; }
  std::size_t full_dim() const { return left_index_.size(); }
  std::size_t tensor_dim() const { return left_.size() * right_.size(); }

  std::pair<std::size_t, std::size_t> split(std::size_t full) const { return {left_index_[full], right_index_[full]}; }

  std::optional<std::size_t> join(std::size_t i1, std::size_t i2) const {
    const auto v = full_index_[i1 * right_.size() + i2];
    if (v < 0) return std::nullopt;
    return static_cast<std::size_t>(v);
  }

  /// E as a (tensor_dim x full_dim) 0/1 matrix.
  Eigen::SparseMatrix<double> isometry() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(full_dim());
    for (std::size_t s = 0; s < full_dim(); ++s) {
      t.emplace_back(static_cast<Eigen::Index>(left_index_[s] * right_.size() + right_index_[s]),
                     static_cast<Eigen::Index>(s), 1.0);
    }
    Eigen::SparseMatrix<double> e(static_cast<Eigen::Index>(tensor_dim()), static_cast<Eigen::Index>(full_dim()));
    e.setFromTriplets(t.begin(), t.end());
    return e;
  }

  /// E^* (u (x) v) for factor vectors u, v.
  Eigen::VectorXd embed_product(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    if (static_cast<std::size_t>(u.size()) != left_.size() || static_cast<std::size_t>(v.size()) != right_.size()) {
      throw DomainError("factor vector dimensions do not match the partition");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(full_dim()));
    for (std::size_t s = 0; s < full_dim(); ++s) {
      out(static_cast<Eigen::Index>(s)) =
          u(static_cast<Eigen::Index>(left_index_[s])) * v(static_cast<Eigen::Index>(right_index_[s]));
    }
    return out;
  }

 private:
  static std::vector<std::size_t> checked_members(const OccupationBasis& basis, const Region& first,
                                                  const Region& second, bool want_first) {
    Region::same_grid(first, second);
    if (first.grid()->size() != static_cast<std::size_t>(basis.modes())) {
      throw DomainError("partition grid does not match the basis");
    }
    if (!disjoint(first, second) || first.size() + second.size() != first.grid()->size()) {
      throw DomainError("regions " + first.descriptor() + " and " + second.descriptor() +
                        " do not partition the grid");
    }
    return want_first ? first.members() : second.members();
  }

  std::vector<std::size_t> first_modes_;
  std::vector<std::size_t> second_modes_;
  OccupationBasis left_;
  OccupationBasis right_;
  std::vector<std::size_t> left_index_;
  std::vector<std::size_t> right_index_;
  std::vector<std::ptrdiff_t> full_index_;
};

/// E^* (A (x) B) E on the full truncated basis.
inline SparseOperator kron_embed(const SparseOperator& a, const SparseOperator& b, const FactorizationMap& map) {
  if (static_cast<std::size_t>(a.dim()) != map.left().size() ||
      static_cast<std::size_t>(b.dim()) != map.right().size()) {
    throw DomainError("kron_embed: factor dimensions " + std::to_string(a.dim()) + "x" + std::to_string(b.dim()) +
                      " do not match the map (" + std::to_string(map.left().size()) + "x" +
                      std::to_string(map.right().size()) + ")");
  }
  const auto& am = a.matrix();
  const auto& bm = b.matrix();
  std::vector<SparseOperator::Triplet> t;
  for (std::size_t c = 0; c < map.full_dim(); ++c) {
    const auto [c1, c2] = map.split(c);
    for (SparseOperator::Matrix::InnerIterator ia(am, static_cast<Eigen::Index>(c1)); ia; ++ia) {
      for (SparseOperator::Matrix::InnerIterator ib(bm, static_cast<Eigen::Index>(c2)); ib; ++ib) {
        const auto r = map.join(static_cast<std::size_t>(ia.row()), static_cast<std::size_t>(ib.row()));
        if (r) t.emplace_back(static_cast<Eigen::Index>(*r), static_cast<Eigen::Index>(c), ia.value() * ib.value());
      }
    }
  }
  return SparseOperator::from_triplets(static_cast<Eigen::Index>(map.full_dim()), t);
}

/// Dense variant of kron_embed for dense factors (semigroups, projectors).
inline Eigen::MatrixXd kron_embed(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FactorizationMap& map) {
  if (static_cast<std::size_t>(a.rows()) != map.left().size() ||
      static_cast<std::size_t>(b.rows()) != map.right().size() || a.rows() != a.cols() || b.rows() != b.cols()) {
    throw DomainError("kron_embed: factor dimensions do not match the map");
  }
  const auto n = static_cast<Eigen::Index>(map.full_dim());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto [c1, c2] = map.split(static_cast<std::size_t>(c));
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto [r1, r2] = map.split(static_cast<std::size_t>(r));
      out(r, c) = a(static_cast<Eigen::Index>(r1), static_cast<Eigen::Index>(c1)) *
                  b(static_cast<Eigen::Index>(r2), static_cast<Eigen::Index>(c2));
    }
  }
  return out;
}

}  // namespace nelsonnet
