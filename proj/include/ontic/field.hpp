#pragma once

#include "ontic/grid.hpp"

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <type_traits>

namespace ontic {

using Complex = std::complex<double>;

namespace detail {
template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};
}  // namespace detail

template <typename Scalar>
inline constexpr bool is_complex_v = detail::is_complex<Scalar>::value;

/// A scalar quantity sampled at every point of a Grid.
///
/// Values live in an Eigen column vector so that pointwise algebra can be
/// written with the usual `.array()` expressions:
///
///   ScalarField rho = ...;
///   ScalarField r(rho.grid(), rho.values().array().sqrt());
template <typename Scalar>
class Field {
 public:
  using scalar_type = Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Field() = default;

  explicit Field(Grid grid, Scalar fill = Scalar(0))
      : grid_(std::move(grid)), values_(Vector::Constant(static_cast<Eigen::Index>(grid_.size()), fill)) {}

  template <typename Derived>
  Field(Grid grid, const Eigen::DenseBase<Derived>& values) : grid_(std::move(grid)), values_(values) {
    if (static_cast<std::size_t>(values_.size()) != grid_.size())
      throw std::invalid_argument("field value count does not match grid size");
  }

  /// Sample `fn(Point)` at every grid point.
  template <typename Fn>
  static Field sample(const Grid& grid, Fn&& fn) {
    Field f(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) f.values_[static_cast<Eigen::Index>(k)] = fn(grid.point(k));
    return f;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return grid_.size(); }

  const Vector& values() const { return values_; }
  Vector& values() { return values_; }

  Scalar operator[](std::size_t k) const { return values_[static_cast<Eigen::Index>(k)]; }
  Scalar& operator[](std::size_t k) { return values_[static_cast<Eigen::Index>(k)]; }

  bool all_finite() const {
    if constexpr (is_complex_v<Scalar>) {
      return values_.real().allFinite() && values_.imag().allFinite();
    } else {
      return values_.allFinite();
    }
  }

 private:
  Grid grid_;
  Vector values_;
};

using ScalarField = Field<double>;
using ComplexField = Field<Complex>;

/// Throws unless both fields live on the same grid.
template <typename A, typename B>
void require_same_grid(const Field<A>& a, const Field<B>& b, const char* what) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument(std::string(what) + ": fields on different grids");
}

}  // namespace ontic
