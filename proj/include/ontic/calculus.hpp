#pragma once

#include "ontic/field.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ontic {

namespace detail {

inline void require_axis(const Grid& g, std::size_t axis) {
  if (axis >= g.dims()) throw std::out_of_range("axis index out of range");
}

/// Calls fn(first_linear_index) once for every grid line parallel to `axis`.
template <typename Fn>
void for_each_line(const Grid& g, std::size_t axis, Fn&& fn) {
  const std::size_t stride = g.stride(axis);
  const std::size_t n = g.axis(axis).points;
  const std::size_t block = stride * n;
  for (std::size_t outer = 0; outer < g.size(); outer += block)
    for (std::size_t inner = 0; inner < stride; ++inner) fn(outer + inner);
}

template <typename T>
T pairwise_sum(const T* x, std::size_t n) {
  if (n <= 64) {
    T s(0);
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace detail

/// Order-independent (fixed-tree) sum of an Eigen vector.
template <typename Derived>
typename Derived::Scalar pairwise_sum(const Eigen::DenseBase<Derived>& v) {
  const Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> tmp = v;
  return detail::pairwise_sum(tmp.data(), static_cast<std::size_t>(tmp.size()));
}

/// Second-order central difference along `axis`. Periodic axes wrap;
/// vanishing axes use second-order one-sided stencils at the two edges.
template <typename Scalar>
Field<Scalar> gradient(const Field<Scalar>& f, std::size_t axis) {
  const Grid& g = f.grid();
  detail::require_axis(g, axis);
  const Axis& ax = g.axis(axis);
  const std::size_t n = ax.points;
  const std::size_t s = g.stride(axis);
  const double inv2h = 1.0 / (2.0 * ax.spacing());
  Field<Scalar> out(g);
  const auto& v = f.values();
  auto& o = out.values();
  detail::for_each_line(g, axis, [&](std::size_t base) {
    auto at = [&](std::size_t i) { return v[static_cast<Eigen::Index>(base + i * s)]; };
    auto put = [&](std::size_t i, Scalar x) { o[static_cast<Eigen::Index>(base + i * s)] = x; };
    for (std::size_t i = 1; i + 1 < n; ++i) put(i, (at(i + 1) - at(i - 1)) * inv2h);
    if (ax.boundary == Boundary::periodic) {
      put(0, (at(1) - at(n - 1)) * inv2h);
      put(n - 1, (at(0) - at(n - 2)) * inv2h);
    } else {
      // 3(f1 - f0) - (f2 - f1) == -3 f0 + 4 f1 - f2, but exact for constants.
      put(0, (Scalar(3) * (at(1) - at(0)) - (at(2) - at(1))) * inv2h);
      put(n - 1, (Scalar(3) * (at(n - 1) - at(n - 2)) - (at(n - 2) - at(n - 3))) * inv2h);
    }
  });
  return out;
}

/// Compact three-point second derivative along `axis`
/// (four-point one-sided stencil at vanishing edges).
template <typename Scalar>
Field<Scalar> second_derivative(const Field<Scalar>& f, std::size_t axis) {
  const Grid& g = f.grid();
  detail::require_axis(g, axis);
  const Axis& ax = g.axis(axis);
  const std::size_t n = ax.points;
  const std::size_t s = g.stride(axis);
  const double inv_h2 = 1.0 / (ax.spacing() * ax.spacing());
  Field<Scalar> out(g);
  const auto& v = f.values();
  auto& o = out.values();
  detail::for_each_line(g, axis, [&](std::size_t base) {
    auto at = [&](std::size_t i) { return v[static_cast<Eigen::Index>(base + i * s)]; };
    auto put = [&](std::size_t i, Scalar x) { o[static_cast<Eigen::Index>(base + i * s)] = x; };
    for (std::size_t i = 1; i + 1 < n; ++i) put(i, ((at(i + 1) - at(i)) - (at(i) - at(i - 1))) * inv_h2);
    if (ax.boundary == Boundary::periodic) {
      put(0, ((at(1) - at(0)) - (at(0) - at(n - 1))) * inv_h2);
      put(n - 1, ((at(0) - at(n - 1)) - (at(n - 1) - at(n - 2))) * inv_h2);
    } else {
      // 2 f0 - 5 f1 + 4 f2 - f3, written in differences.
      auto edge = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return (Scalar(2) * (at(a) - at(b)) - Scalar(3) * (at(b) - at(c)) + (at(c) - at(d))) * inv_h2;
      };
      put(0, edge(0, 1, 2, 3));
      put(n - 1, edge(n - 1, n - 2, n - 3, n - 4));
    }
  });
  return out;
}

/// Second derivative d_i d_j f. For i != j this composes two central
/// differences (which commute); for i == j it is the compact stencil.
template <typename Scalar>
Field<Scalar> mixed_derivative(const Field<Scalar>& f, std::size_t i, std::size_t j) {
  detail::require_axis(f.grid(), i);
  detail::require_axis(f.grid(), j);
  if (i == j) return second_derivative(f, i);
  return gradient(gradient(f, std::min(i, j)), std::max(i, j));
}

template <typename Scalar>
Field<Scalar> laplacian(const Field<Scalar>& f) {
  Field<Scalar> out(f.grid());
  for (std::size_t a = 0; a < f.grid().dims(); ++a) out.values() += second_derivative(f, a).values();
  return out;
}

/// Midpoint rule: sum of f times the cell volume.
template <typename Scalar>
Scalar integrate(const Field<Scalar>& f) {
  return pairwise_sum(f.values()) * f.grid().cell_volume();
}

/// Midpoint-rule integral of a pointwise expression over `grid`.
template <typename Derived>
typename Derived::Scalar integrate(const Grid& grid, const Eigen::DenseBase<Derived>& values) {
  if (static_cast<std::size_t>(values.size()) != grid.size())
    throw std::invalid_argument("integrand size does not match grid");
  return pairwise_sum(values) * grid.cell_volume();
}

/// Corners and weights for multilinear interpolation at one point.
/// Computed once per point and applied to any number of fields.
struct InterpolationStencil {
  std::array<std::size_t, (1u << kMaxDims)> index{};
  std::array<double, (1u << kMaxDims)> weight{};
  std::size_t count = 0;

  template <typename Scalar>
  Scalar apply(const Field<Scalar>& f) const {
    Scalar s(0);
    for (std::size_t c = 0; c < count; ++c) s += weight[c] * f[index[c]];
    return s;
  }
};

/// Locate `q` on the grid. Periodic axes wrap; on vanishing axes points
/// between the outermost sample and the wall take the edge value.
inline InterpolationStencil locate(const Grid& g, const Point& q) {
  if (!g.contains(q)) throw std::out_of_range("interpolation point outside grid domain");
  const std::size_t d = g.dims();
  std::array<std::size_t, kMaxDims> lo{}, hi{};
  std::array<double, kMaxDims> t{};
  for (std::size_t a = 0; a < d; ++a) {
    const Axis& ax = g.axis(a);
    const double s = (q[static_cast<Eigen::Index>(a)] - ax.lower) / ax.spacing() - 0.5;
    const auto n = static_cast<long>(ax.points);
    if (ax.boundary == Boundary::periodic) {
      const double fl = std::floor(s);
      long i0 = static_cast<long>(fl) % n;
      if (i0 < 0) i0 += n;
      lo[a] = static_cast<std::size_t>(i0);
      hi[a] = static_cast<std::size_t>((i0 + 1) % n);
      t[a] = s - fl;
    } else if (s <= 0.0) {
      lo[a] = hi[a] = 0;
      t[a] = 0.0;
    } else if (s >= static_cast<double>(n - 1)) {
      lo[a] = hi[a] = static_cast<std::size_t>(n - 1);
      t[a] = 0.0;
    } else {
      const double fl = std::floor(s);
      lo[a] = static_cast<std::size_t>(fl);
      hi[a] = lo[a] + 1;
      t[a] = s - fl;
    }
  }
  InterpolationStencil st;
  st.count = std::size_t{1} << d;
  for (std::size_t c = 0; c < st.count; ++c) {
    std::size_t k = 0;
    double w = 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const bool up = (c >> a) & 1u;
      k += (up ? hi[a] : lo[a]) * g.stride(a);
      w *= up ? t[a] : 1.0 - t[a];
    }
    st.index[c] = k;
    st.weight[c] = w;
  }
  return st;
}

template <typename Scalar>
Scalar interpolate(const Field<Scalar>& f, const Point& q) {
  return locate(f.grid(), q).apply(f);
}

/// One Richardson step for a quantity with error expansion c h^order + ...:
/// combines a coarse value and a value at half the spacing.
inline double richardson(double coarse, double fine, int order = 2) {
  const double r = std::pow(2.0, order);
  return (r * fine - coarse) / (r - 1.0);
}

inline Complex richardson(Complex coarse, Complex fine, int order = 2) {
  return {richardson(coarse.real(), fine.real(), order), richardson(coarse.imag(), fine.imag(), order)};
}

/// Evaluates fn on `coarse` and on its 2x refinement and extrapolates,
/// assuming the second-order error of every stencil in this header.
template <typename Fn>
auto extrapolated(const Grid& coarse, Fn&& fn) {
  const auto c = fn(coarse);
  const auto f = fn(coarse.refined(2));
  return richardson(c, f);
}

/// Observed convergence order from errors at spacing h and h/2.
inline double observed_order(double error_coarse, double error_fine) {
  return std::log2(error_coarse / error_fine);
}

}  // namespace ontic
