#pragma once

#include "ontic/calculus.hpp"
#include "ontic/expression.hpp"
#include "ontic/field.hpp"

#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace ontic {

/// A q-dependent coefficient: a constant, a function of the configuration,
/// or a field sampled on some grid (evaluated off-grid by interpolation).
class Coefficient {
 public:
  using Function = std::function<double(const Point&)>;

  Coefficient(double c = 0.0) : v_(c) {}  // NOLINT: implicit on purpose
  Coefficient(Function fn) : v_(std::move(fn)) {}
  Coefficient(ScalarField f) : v_(std::move(f)) {}

  bool is_constant() const { return std::holds_alternative<double>(v_); }
  bool is_zero() const { return is_constant() && std::get<double>(v_) == 0.0; }
  double constant() const { return std::get<double>(v_); }

  double at(const Point& q) const;
  /// Samples on `g`. A field coefficient must already live on `g`.
  ScalarField on(const Grid& g) const;
  /// d/dq_axis at q: exact for constants, 4th-order differences for
  /// functions (step `step`), interpolated 2nd-order gradient for fields.
  double derivative(const Point& q, std::size_t axis, double step) const;

 private:
  std::variant<double, Function, ScalarField> v_;
};

/// O(p, q) = 1/2 g^ij(q) (p_i - A_i(q)) (p_j - A_j(q)) + b^i(q) p_i + V(q).
///
/// The linear term b.p is an addition to the pure quadratic form so that
/// momentum and angular momentum can be written directly; its quantum
/// ordering is the symmetric 1/2 (b p + p b). The metric is stored
/// symmetric: set_metric(i, j) writes both (i, j) and (j, i).
class QuadraticObservable {
 public:
  explicit QuadraticObservable(std::size_t dims, std::string label = {});

  std::size_t dims() const { return gauge_.size(); }
  const std::string& label() const { return label_; }
  void set_label(std::string l) { label_ = std::move(l); }

  const Coefficient& metric(std::size_t i, std::size_t j) const { return metric_.at(i * dims() + j); }
  const Coefficient& gauge(std::size_t i) const { return gauge_.at(i); }
  const Coefficient& linear(std::size_t i) const { return linear_.at(i); }
  const Coefficient& potential() const { return potential_; }

  QuadraticObservable& set_metric(std::size_t i, std::size_t j, Coefficient c);
  QuadraticObservable& set_gauge(std::size_t i, Coefficient c);
  QuadraticObservable& set_linear(std::size_t i, Coefficient c);
  QuadraticObservable& set_potential(Coefficient c);

  bool has_metric(std::size_t i, std::size_t j) const { return !metric(i, j).is_zero(); }

  /// O at a phase-space point, coefficients evaluated at q.
  double operator()(const Point& q, const Point& p) const;

 private:
  std::vector<Coefficient> metric_;
  std::vector<Coefficient> gauge_;
  std::vector<Coefficient> linear_;
  Coefficient potential_;
  std::string label_;
};

/// The coefficients of an observable sampled on one grid. Used by the
/// expectation engines; off-grid evaluation is multilinear interpolation.
struct DiscreteObservable {
  std::size_t dims = 0;
  std::vector<ScalarField> metric;  // dims * dims, row-major; empty entry = zero
  std::vector<bool> metric_present;
  std::vector<ScalarField> gauge;
  std::vector<ScalarField> linear;
  ScalarField potential;

  DiscreteObservable(const QuadraticObservable& obs, const Grid& g);
  double operator()(const InterpolationStencil& st, const Point& p) const;
};

// Named observables -------------------------------------------------------

QuadraticObservable position_observable(std::size_t dims, std::size_t axis);
QuadraticObservable momentum_observable(std::size_t dims, std::size_t axis);
/// sum_i p_i^2 / 2 m_i
QuadraticObservable kinetic_observable(const std::vector<double>& masses);
/// p^2 / 2m + m omega^2 q^2 / 2, isotropic about the origin
QuadraticObservable harmonic_observable(std::size_t dims, double mass, double omega);
/// (p_axis - shift)^2
QuadraticObservable momentum_spread_observable(std::size_t dims, std::size_t axis, double shift);
/// (q_axis - shift)^2
QuadraticObservable position_spread_observable(std::size_t dims, std::size_t axis, double shift);
/// q_x p_y - q_y p_x on axes (x_axis, y_axis)
QuadraticObservable angular_momentum_observable(std::size_t dims, std::size_t x_axis = 0, std::size_t y_axis = 1);
/// p_i p_j, i != j
QuadraticObservable momentum_product_observable(std::size_t dims, std::size_t i, std::size_t j);

/// Symbols for expressions over q: q0.. (also x, y, z, and q when dims = 1).
/// With `momenta`, p0.. (px, py, pz, p) occupy slots dims..2 dims-1.
Expression::Symbols configuration_symbols(std::size_t dims, bool momenta,
                                          const std::map<std::string, double>& constants = {});

/// Coefficient from an expression over q (slots 0..dims-1).
Coefficient expression_coefficient(const Expression& e, std::size_t dims);

/// Builds an observable from a polynomial in p with q-dependent
/// coefficients, e.g. "0.5*p^2 + q^2/2". Rejects anything above second
/// order in momentum (or not polynomial in it) with ExpressionError.
QuadraticObservable observable_from_expression(const std::string& text, std::size_t dims,
                                               const std::map<std::string, double>& constants = {});

}  // namespace ontic
