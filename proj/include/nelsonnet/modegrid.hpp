#pragma once

// Discretized momentum grids, cutoff regions and the energy counterterm.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nelsonnet/errors.hpp"

namespace nelsonnet {

class ModeGrid;
using GridPtr = std::shared_ptr<const ModeGrid>;

enum class GridLayout {
  cell_centered,  // k = (j + 1/2) h, the origin is never a mode
  vertex,         // k = j h, includes the origin
};

/// A finite set of boson modes: momenta k_i in R^d, quadrature weights w_i and
/// the dispersion eps_i = sqrt(k_i^2 + m^2).
class ModeGrid {
 public:
  static GridPtr build(int dimension, double extent, double spacing, double mass,
                       GridLayout layout = GridLayout::cell_centered) {
    if (dimension < 1 || dimension > 3) {
      throw DomainError("grid dimension must be 1, 2 or 3");
    }
    if (!(spacing > 0.0) || !(extent > 0.0) || !(mass >= 0.0)) {
      throw DomainError("grid needs spacing > 0, extent > 0 and mass >= 0");
    }
    // Small slack so that extent/spacing = integer does not drop the last cell.
    const double ratio = extent / spacing + 1e-9;
    std::vector<double> axis;
    if (layout == GridLayout::cell_centered) {
      const long n = static_cast<long>(std::floor(ratio));
      if (n < 1) throw DomainError("grid extent is smaller than one cell");
      for (long j = -n; j < n; ++j) axis.push_back((static_cast<double>(j) + 0.5) * spacing);
    } else {
      const long n = static_cast<long>(std::floor(ratio));
      for (long j = -n; j <= n; ++j) axis.push_back(static_cast<double>(j) * spacing);
    }

    std::size_t count = 1;
    for (int a = 0; a < dimension; ++a) count *= axis.size();
    if (count > kModeCap) throw SizeError("grid has too many modes", count, kModeCap);

    Eigen::MatrixXd momenta(dimension, static_cast<Eigen::Index>(count));
    std::vector<std::size_t> digit(static_cast<std::size_t>(dimension), 0);
    for (std::size_t m = 0; m < count; ++m) {
      std::size_t rest = m;
      for (int a = dimension - 1; a >= 0; --a) {
        digit[static_cast<std::size_t>(a)] = rest % axis.size();
        rest /= axis.size();
      }
      for (int a = 0; a < dimension; ++a) {
        momenta(a, static_cast<Eigen::Index>(m)) = axis[digit[static_cast<std::size_t>(a)]];
      }
    }
    const double cell = std::pow(spacing, dimension);
    std::vector<double> weights(count, cell);
    auto grid = std::shared_ptr<ModeGrid>(new ModeGrid(std::move(momenta), std::move(weights), mass));
    grid->extent_ = extent;
    grid->spacing_ = spacing;
    grid->layout_ = layout;
    grid->validate();
    return grid;
  }

  /// Grid from an explicit list of modes (columns of `momenta`).
  static GridPtr from_modes(Eigen::MatrixXd momenta, std::vector<double> weights, double mass) {
    if (momenta.rows() < 1 || momenta.rows() > 3) {
      throw DomainError("grid dimension must be 1, 2 or 3");
    }
    if (static_cast<std::size_t>(momenta.cols()) != weights.size()) {
      throw DomainError("one weight per mode is required");
    }
    if (!(mass >= 0.0)) throw DomainError("mass must be nonnegative");
    double extent = 0.0;
    if (momenta.size() > 0) extent = momenta.cwiseAbs().maxCoeff();
    auto grid = std::shared_ptr<ModeGrid>(new ModeGrid(std::move(momenta), std::move(weights), mass));
    grid->extent_ = extent;
    grid->validate();
    return grid;
  }

  int dimension() const { return static_cast<int>(momenta_.rows()); }
  std::size_t size() const { return weights_.size(); }
  double mass() const { return mass_; }
  /// Half-width of the momentum box the grid was built on.
  double extent() const { return extent_; }
  double spacing() const { return spacing_; }
  GridLayout layout() const { return layout_; }

  Eigen::VectorXd momentum(std::size_t i) const { return momenta_.col(static_cast<Eigen::Index>(i)); }
  const Eigen::MatrixXd& momenta() const { return momenta_; }
  double momentum_squared(std::size_t i) const {
    return momenta_.col(static_cast<Eigen::Index>(i)).squaredNorm();
  }
  double weight(std::size_t i) const { return weights_[i]; }
  double dispersion(std::size_t i) const { return dispersion_[i]; }

  /// New grid holding the listed modes, in the listed order.
  GridPtr restricted(const std::vector<std::size_t>& indices) const {
    Eigen::MatrixXd momenta(momenta_.rows(), static_cast<Eigen::Index>(indices.size()));
    std::vector<double> weights;
    weights.reserve(indices.size());
    for (std::size_t j = 0; j < indices.size(); ++j) {
      if (indices[j] >= size()) throw DomainError("mode index out of range");
      momenta.col(static_cast<Eigen::Index>(j)) = momenta_.col(static_cast<Eigen::Index>(indices[j]));
      weights.push_back(weights_[indices[j]]);
    }
    auto grid = std::shared_ptr<ModeGrid>(new ModeGrid(std::move(momenta), std::move(weights), mass_));
    grid->extent_ = extent_;
    grid->spacing_ = spacing_;
    grid->layout_ = layout_;
    return grid;
  }

  std::string descriptor() const {
    std::ostringstream os;
    os.precision(17);
    os << "grid(d=" << dimension() << ", modes=" << size() << ", extent=" << extent_
       << ", spacing=" << spacing_ << ", mass=" << mass_ << ")";
    return os.str();
  }

  static constexpr std::size_t kModeCap = 20'000'000;

 private:
  ModeGrid(Eigen::MatrixXd momenta, std::vector<double> weights, double mass)
      : momenta_(std::move(momenta)), weights_(std::move(weights)), mass_(mass) {
    dispersion_.resize(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      dispersion_[i] = std::sqrt(momentum_squared(i) + mass_ * mass_);
    }
  }

  void validate() const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (!(weights_[i] > 0.0)) throw DomainError("quadrature weights must be strictly positive");
      if (!(dispersion_[i] > 0.0)) {
        throw InfraredError("massless grid contains the mode k = 0 with zero dispersion (mode " +
                            std::to_string(i) + ")");
      }
    }
    // Distinct momenta: sort columns lexicographically and compare neighbours.
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto column_less = [this](std::size_t a, std::size_t b) {
      for (Eigen::Index r = 0; r < momenta_.rows(); ++r) {
        const double x = momenta_(r, static_cast<Eigen::Index>(a));
        const double y = momenta_(r, static_cast<Eigen::Index>(b));
        if (x != y) return x < y;
      }
      return false;
    };
    std::sort(order.begin(), order.end(), column_less);
    for (std::size_t j = 1; j < order.size(); ++j) {
      if (!column_less(order[j - 1], order[j])) throw DomainError("mode momenta must be pairwise distinct");
    }
  }

  Eigen::MatrixXd momenta_;
  std::vector<double> weights_;
  std::vector<double> dispersion_;
  double mass_ = 0.0;
  double extent_ = 0.0;
  double spacing_ = 0.0;
  GridLayout layout_ = GridLayout::cell_centered;
};

/// A set of grid modes; plays the role of a cutoff region. Membership is fixed
/// at construction, so set algebra is exact.
class Region {
 public:
  static Region ball(GridPtr grid, double kappa) {
    require_grid(grid);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (grid->momentum_squared(i) <= kappa * kappa) members.push_back(i);
    }
    return Region(std::move(grid), std::move(members), "ball(" + format(kappa) + ")");
  }

  /// sigma < |k| <= kappa.
  static Region annulus(GridPtr grid, double sigma, double kappa) {
    require_grid(grid);
    if (sigma > kappa) throw DomainError("annulus needs sigma <= kappa");
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      const double k2 = grid->momentum_squared(i);
      if (k2 > sigma * sigma && k2 <= kappa * kappa) members.push_back(i);
    }
    return Region(std::move(grid), std::move(members),
                  "annulus(" + format(sigma) + ", " + format(kappa) + ")");
  }

  static Region all(GridPtr grid) {
    require_grid(grid);
    std::vector<std::size_t> members(grid->size());
    for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
    return Region(std::move(grid), std::move(members), "all");
  }

  static Region none(GridPtr grid) {
    require_grid(grid);
    return Region(std::move(grid), {}, "empty");
  }

  static Region explicit_set(GridPtr grid, std::vector<std::size_t> members) {
    require_grid(grid);
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    if (!members.empty() && members.back() >= grid->size()) {
      throw DomainError("region member " + std::to_string(members.back()) + " outside the grid");
    }
    std::ostringstream os;
    os << "explicit(";
    for (std::size_t j = 0; j < members.size(); ++j) os << (j ? ", " : "") << members[j];
    os << ")";
    return Region(std::move(grid), std::move(members), os.str());
  }

  Region complement() const {
    std::vector<std::size_t> out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < grid_->size(); ++i) {
      if (j < members_.size() && members_[j] == i) {
        ++j;
      } else {
        out.push_back(i);
      }
    }
    const std::string prefix = "complement(";
    std::string desc = descriptor_.rfind(prefix, 0) == 0
                           ? descriptor_.substr(prefix.size(), descriptor_.size() - prefix.size() - 1)
                           : prefix + descriptor_ + ")";
    return Region(grid_, std::move(out), std::move(desc));
  }

  const GridPtr& grid() const { return grid_; }
  const std::vector<std::size_t>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const std::string& descriptor() const { return descriptor_; }

  bool contains(std::size_t mode) const {
    return std::binary_search(members_.begin(), members_.end(), mode);
  }

  std::vector<bool> mask() const {
    std::vector<bool> out(grid_->size(), false);
    for (auto i : members_) out[i] = true;
    return out;
  }

  /// The grid of this region's modes alone, ordered as `members()`.
  GridPtr subgrid() const { return grid_->restricted(members_); }

  /// Re-express `other` (which must lie inside this region) on `subgrid()`.
  Region localize(const Region& other, GridPtr sub) const {
    same_grid(*this, other);
    if (!sub || sub->size() != members_.size()) throw DomainError("subgrid does not match region");
    std::vector<std::size_t> local;
    for (auto i : other.members_) {
      auto it = std::lower_bound(members_.begin(), members_.end(), i);
      if (it == members_.end() || *it != i) {
        throw DomainError("region " + other.descriptor_ + " is not contained in " + descriptor_);
      }
      local.push_back(static_cast<std::size_t>(it - members_.begin()));
    }
    return Region(std::move(sub), std::move(local), other.descriptor_);
  }

  friend bool operator==(const Region& a, const Region& b) {
    return a.grid_ == b.grid_ && a.members_ == b.members_;
  }

  static void same_grid(const Region& a, const Region& b) {
    if (a.grid_ != b.grid_) throw DomainError("regions live on different grids");
  }

  Region(GridPtr grid, std::vector<std::size_t> sorted_members, std::string descriptor)
      : grid_(std::move(grid)), members_(std::move(sorted_members)), descriptor_(std::move(descriptor)) {}

 private:
  static void require_grid(const GridPtr& grid) {
    if (!grid) throw DomainError("region needs a grid");
  }

  static std::string format(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
  }

  GridPtr grid_;
  std::vector<std::size_t> members_;
  std::string descriptor_;
};

inline Region unite(const Region& a, const Region& b) {
  Region::same_grid(a, b);
  std::vector<std::size_t> out;
  std::set_union(a.members().begin(), a.members().end(), b.members().begin(), b.members().end(),
                 std::back_inserter(out));
  return Region(a.grid(), std::move(out), "union(" + a.descriptor() + ", " + b.descriptor() + ")");
}

inline Region difference(const Region& a, const Region& b) {
  Region::same_grid(a, b);
  std::vector<std::size_t> out;
  std::set_difference(a.members().begin(), a.members().end(), b.members().begin(), b.members().end(),
                      std::back_inserter(out));
  return Region(a.grid(), std::move(out), "difference(" + a.descriptor() + ", " + b.descriptor() + ")");
}

inline Region intersect(const Region& a, const Region& b) {
  Region::same_grid(a, b);
  std::vector<std::size_t> out;
  std::set_intersection(a.members().begin(), a.members().end(), b.members().begin(), b.members().end(),
                        std::back_inserter(out));
  return Region(a.grid(), std::move(out), "intersection(" + a.descriptor() + ", " + b.descriptor() + ")");
}

inline bool is_subset(const Region& a, const Region& b) {
  Region::same_grid(a, b);
  return std::includes(b.members().begin(), b.members().end(), a.members().begin(), a.members().end());
}

inline bool disjoint(const Region& a, const Region& b) {
  return intersect(a, b).empty();
}

/// Total momentum P, coupling g and Gross cutoff K.
struct NelsonParams {
  Eigen::VectorXd P;
  double g = 0.0;
  double K = 1.0;

  /// g = 0 is accepted so that decoupled controls can be built.
  void validate(const ModeGrid& grid) const {
    if (P.size() != grid.dimension()) throw DomainError("total momentum must have the grid dimension");
    if (!(g >= 0.0)) throw DomainError("coupling g must be nonnegative");
    if (!(K > 0.0)) throw DomainError("Gross cutoff K must be positive");
    if (K > grid.extent()) throw DomainError("Gross cutoff K lies outside the grid extent");
  }
};

/// Discrete counterterm E(Lambda) = -g^2 sum_{i in Lambda} w_i / (eps_i (eps_i + k_i^2/2)).
inline double counterterm_energy(const ModeGrid& grid, const Region& region, double g) {
  if (region.grid().get() != &grid) throw DomainError("region is not defined on this grid");
  double sum = 0.0;
  for (auto i : region.members()) {
    const double eps = grid.dispersion(i);
    sum += grid.weight(i) / (eps * (eps + 0.5 * grid.momentum_squared(i)));
  }
  return -g * g * sum;
}

inline double counterterm_energy(const Region& region, double g) {
  return counterterm_energy(*region.grid(), region, g);
}

}  // namespace nelsonnet
