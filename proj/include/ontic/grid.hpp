#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ontic {

/// Upper bound on configuration-space dimension. Points are stored inline.
inline constexpr int kMaxDims = 6;

using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDims, 1>;

enum class Boundary { periodic, vanishing };

inline std::string_view to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "vanishing";
}

inline Boundary boundary_from_string(std::string_view s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "vanishing") return Boundary::vanishing;
  throw std::invalid_argument("unknown boundary policy '" + std::string(s) + "'");
}

/// One axis of a cell-centred uniform grid. Sample i sits at
/// lower + (i + 1/2) * spacing, so quadrature is the midpoint rule.
struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t points = 4;
  Boundary boundary = Boundary::vanishing;

  double length() const { return upper - lower; }
  double spacing() const { return length() / static_cast<double>(points); }
  double coord(std::size_t i) const { return lower + (static_cast<double>(i) + 0.5) * spacing(); }

  bool operator==(const Axis&) const = default;
};

/// Uniform rectangular discretisation of an N-dimensional configuration
/// space. Storage is row-major: the last axis varies fastest.
class Grid {
 public:
  Grid() = default;

  explicit Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw std::invalid_argument("grid needs at least one axis");
    if (axes_.size() > static_cast<std::size_t>(kMaxDims))
      throw std::invalid_argument("grid has more than kMaxDims axes");
    strides_.assign(axes_.size(), 1);
    size_ = 1;
    for (std::size_t a = axes_.size(); a-- > 0;) {
      const Axis& ax = axes_[a];
      if (ax.points < 4) throw std::invalid_argument("grid axis needs at least 4 points");
      if (!(ax.upper > ax.lower)) throw std::invalid_argument("grid axis needs upper > lower");
      strides_[a] = size_;
      size_ *= ax.points;
    }
    if (!(cell_volume() > 0.0)) throw std::invalid_argument("grid cell volume must be positive");
  }

  /// Convenience for the common 1D case.
  static Grid line(double lower, double upper, std::size_t points,
                   Boundary boundary = Boundary::vanishing) {
    return Grid({Axis{lower, upper, points, boundary}});
  }

  std::size_t dims() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const Axis& axis(std::size_t a) const { return axes_.at(a); }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t stride(std::size_t a) const { return strides_[a]; }
  double spacing(std::size_t a) const { return axes_[a].spacing(); }

  double cell_volume() const {
    double v = 1.0;
    for (const auto& ax : axes_) v *= ax.spacing();
    return v;
  }

  /// Index of `linear` along axis a.
  std::size_t index(std::size_t linear, std::size_t a) const {
    return (linear / strides_[a]) % axes_[a].points;
  }

  double coord(std::size_t linear, std::size_t a) const { return axes_[a].coord(index(linear, a)); }

  Point point(std::size_t linear) const {
    Point p(dims());
    for (std::size_t a = 0; a < dims(); ++a) p[a] = coord(linear, a);
    return p;
  }

  bool contains(const Point& q) const {
    if (static_cast<std::size_t>(q.size()) != dims()) return false;
    for (std::size_t a = 0; a < dims(); ++a)
      if (q[a] < axes_[a].lower || q[a] > axes_[a].upper) return false;
    return true;
  }

  /// Same extents and boundaries, `factor` times as many points per axis.
  Grid refined(std::size_t factor = 2) const {
    auto axes = axes_;
    for (auto& ax : axes) ax.points *= factor;
    return Grid(std::move(axes));
  }

  bool operator==(const Grid& o) const { return axes_ == o.axes_; }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

}  // namespace ontic
