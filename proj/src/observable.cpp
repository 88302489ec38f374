#include "ontic/observable.hpp"

#include <array>
#include <memory>

namespace ontic {

double Coefficient::at(const Point& q) const {
  if (const auto* c = std::get_if<double>(&v_)) return *c;
  if (const auto* fn = std::get_if<Function>(&v_)) return (*fn)(q);
  return interpolate(std::get<ScalarField>(v_), q);
}

ScalarField Coefficient::on(const Grid& g) const {
  if (const auto* c = std::get_if<double>(&v_)) return ScalarField(g, *c);
  if (const auto* fn = std::get_if<Function>(&v_)) return ScalarField::sample(g, *fn);
  const auto& f = std::get<ScalarField>(v_);
  if (!(f.grid() == g)) throw std::invalid_argument("coefficient field lives on a different grid");
  return f;
}

double Coefficient::derivative(const Point& q, std::size_t axis, double step) const {
  if (is_constant()) return 0.0;
  if (const auto* fn = std::get_if<Function>(&v_)) {
    auto shifted = [&](double k) {
      Point x = q;
      x[static_cast<Eigen::Index>(axis)] += k * step;
      return (*fn)(x);
    };
    return (8.0 * (shifted(1) - shifted(-1)) - (shifted(2) - shifted(-2))) / (12.0 * step);
  }
  const auto& f = std::get<ScalarField>(v_);
  return interpolate(gradient(f, axis), q);
}

// ---------------------------------------------------------------------------

QuadraticObservable::QuadraticObservable(std::size_t dims, std::string label)
    : metric_(dims * dims), gauge_(dims), linear_(dims), label_(std::move(label)) {
  if (dims == 0 || dims > static_cast<std::size_t>(kMaxDims)) throw std::invalid_argument("observable dims out of range");
}

QuadraticObservable& QuadraticObservable::set_metric(std::size_t i, std::size_t j, Coefficient c) {
  if (i >= dims() || j >= dims()) throw std::out_of_range("metric index out of range");
  metric_[i * dims() + j] = c;
  metric_[j * dims() + i] = std::move(c);
  return *this;
}

QuadraticObservable& QuadraticObservable::set_gauge(std::size_t i, Coefficient c) {
  gauge_.at(i) = std::move(c);
  return *this;
}

QuadraticObservable& QuadraticObservable::set_linear(std::size_t i, Coefficient c) {
  linear_.at(i) = std::move(c);
  return *this;
}

QuadraticObservable& QuadraticObservable::set_potential(Coefficient c) {
  potential_ = std::move(c);
  return *this;
}

double QuadraticObservable::operator()(const Point& q, const Point& p) const {
  const std::size_t d = dims();
  std::array<double, kMaxDims> k{};
  for (std::size_t i = 0; i < d; ++i) k[i] = p[static_cast<Eigen::Index>(i)] - gauge_[i].at(q);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      if (!metric(i, j).is_zero()) quad += metric(i, j).at(q) * k[i] * k[j];
    if (!linear_[i].is_zero()) lin += linear_[i].at(q) * p[static_cast<Eigen::Index>(i)];
  }
  return 0.5 * quad + lin + potential_.at(q);
}

DiscreteObservable::DiscreteObservable(const QuadraticObservable& obs, const Grid& g)
    : dims(obs.dims()), metric(dims * dims), metric_present(dims * dims, false), potential(obs.potential().on(g)) {
  if (dims != g.dims()) throw std::invalid_argument("observable and grid dimensions differ");
  for (std::size_t i = 0; i < dims; ++i) {
    gauge.push_back(obs.gauge(i).on(g));
    linear.push_back(obs.linear(i).on(g));
    for (std::size_t j = 0; j < dims; ++j) {
      if (!obs.has_metric(i, j)) continue;
      metric[i * dims + j] = obs.metric(i, j).on(g);
      metric_present[i * dims + j] = true;
    }
  }
}

double DiscreteObservable::operator()(const InterpolationStencil& st, const Point& p) const {
  std::array<double, kMaxDims> k{};
  for (std::size_t i = 0; i < dims; ++i) k[i] = p[static_cast<Eigen::Index>(i)] - st.apply(gauge[i]);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < dims; ++i) {
    for (std::size_t j = 0; j < dims; ++j)
      if (metric_present[i * dims + j]) quad += st.apply(metric[i * dims + j]) * k[i] * k[j];
    lin += st.apply(linear[i]) * p[static_cast<Eigen::Index>(i)];
  }
  return 0.5 * quad + lin + st.apply(potential);
}

// ---------------------------------------------------------------------------

namespace {

Coefficient coordinate(std::size_t axis, double shift = 0.0, double scale = 1.0) {
  return Coefficient([=](const Point& q) { return scale * (q[static_cast<Eigen::Index>(axis)] - shift); });
}

void require_axis(std::size_t dims, std::size_t axis) {
  if (axis >= dims) throw std::out_of_range("observable axis out of range");
}

}  // namespace

QuadraticObservable position_observable(std::size_t dims, std::size_t axis) {
  require_axis(dims, axis);
  QuadraticObservable o(dims, "position");
  o.set_potential(coordinate(axis));
  return o;
}

QuadraticObservable momentum_observable(std::size_t dims, std::size_t axis) {
  require_axis(dims, axis);
  QuadraticObservable o(dims, "momentum");
  o.set_linear(axis, 1.0);
  return o;
}

QuadraticObservable kinetic_observable(const std::vector<double>& masses) {
  QuadraticObservable o(masses.size(), "kinetic");
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0)) throw std::invalid_argument("masses must be positive");
    o.set_metric(i, i, 1.0 / masses[i]);
  }
  return o;
}

QuadraticObservable harmonic_observable(std::size_t dims, double mass, double omega) {
  QuadraticObservable o = kinetic_observable(std::vector<double>(dims, mass));
  o.set_label("harmonic");
  const double k = mass * omega * omega;
  o.set_potential(Coefficient([=](const Point& q) { return 0.5 * k * q.squaredNorm(); }));
  return o;
}

QuadraticObservable momentum_spread_observable(std::size_t dims, std::size_t axis, double shift) {
  require_axis(dims, axis);
  QuadraticObservable o(dims, "momentum_spread");
  o.set_metric(axis, axis, 2.0);
  o.set_gauge(axis, shift);
  return o;
}

QuadraticObservable position_spread_observable(std::size_t dims, std::size_t axis, double shift) {
  require_axis(dims, axis);
  QuadraticObservable o(dims, "position_spread");
  o.set_potential(Coefficient([=](const Point& q) {
    const double d = q[static_cast<Eigen::Index>(axis)] - shift;
    return d * d;
  }));
  return o;
}

QuadraticObservable angular_momentum_observable(std::size_t dims, std::size_t x_axis, std::size_t y_axis) {
  require_axis(dims, x_axis);
  require_axis(dims, y_axis);
  if (x_axis == y_axis) throw std::invalid_argument("angular momentum needs two distinct axes");
  QuadraticObservable o(dims, "angular_momentum_z");
  o.set_linear(x_axis, coordinate(y_axis, 0.0, -1.0));
  o.set_linear(y_axis, coordinate(x_axis));
  return o;
}

QuadraticObservable momentum_product_observable(std::size_t dims, std::size_t i, std::size_t j) {
  require_axis(dims, i);
  require_axis(dims, j);
  if (i == j) throw std::invalid_argument("momentum product needs distinct axes");
  QuadraticObservable o(dims, "momentum_product");
  o.set_metric(i, j, 1.0);
  return o;
}

// ---------------------------------------------------------------------------

Expression::Symbols configuration_symbols(std::size_t dims, bool momenta,
                                          const std::map<std::string, double>& constants) {
  Expression::Symbols s;
  s.constants = constants;
  static const char* xyz[] = {"x", "y", "z"};
  for (std::size_t a = 0; a < dims; ++a) {
    const int q = static_cast<int>(a);
    s.variables["q" + std::to_string(a)] = q;
    if (a < 3 && dims > 1) s.variables[xyz[a]] = q;
    if (momenta) {
      const int p = static_cast<int>(dims + a);
      s.variables["p" + std::to_string(a)] = p;
      if (a < 3 && dims > 1) s.variables[std::string("p") + xyz[a]] = p;
    }
  }
  if (dims == 1) {
    s.variables["q"] = 0;
    s.variables["x"] = 0;
    if (momenta) s.variables["p"] = 1;
  }
  return s;
}

Coefficient expression_coefficient(const Expression& e, std::size_t dims) {
  bool uses_q = false;
  for (std::size_t a = 0; a < dims; ++a) uses_q = uses_q || e.uses(static_cast<int>(a));
  std::array<double, 2 * kMaxDims> zero{};
  if (!uses_q) return Coefficient(e(zero.data()));
  return Coefficient([e, dims](const Point& q) {
    std::array<double, 2 * kMaxDims> x{};
    for (std::size_t a = 0; a < dims; ++a) x[a] = q[static_cast<Eigen::Index>(a)];
    return e(x.data());
  });
}

QuadraticObservable observable_from_expression(const std::string& text, std::size_t dims,
                                               const std::map<std::string, double>& constants) {
  const Expression e = Expression::parse(text, configuration_symbols(dims, true, constants));
  const int deg = e.degree([dims](int slot) { return slot >= static_cast<int>(dims); });
  if (deg > 2) throw ExpressionError("observable '" + text + "' is above second order in momentum");

  // O(q, p) = 1/2 G p p + b p + c is recovered exactly from values at p in
  // {0, +-e_i, e_i + e_j}.
  auto value = [e, dims](const Point& q, int i, double si, int j, double sj) {
    std::array<double, 2 * kMaxDims> x{};
    for (std::size_t a = 0; a < dims; ++a) x[a] = q[static_cast<Eigen::Index>(a)];
    if (i >= 0) x[dims + static_cast<std::size_t>(i)] += si;
    if (j >= 0) x[dims + static_cast<std::size_t>(j)] += sj;
    return e(x.data());
  };
  QuadraticObservable o(dims, text);
  o.set_potential(Coefficient([value](const Point& q) { return value(q, -1, 0, -1, 0); }));
  std::vector<bool> uses_p(dims);
  for (std::size_t i = 0; i < dims; ++i) uses_p[i] = e.uses(static_cast<int>(dims + i));
  for (int i = 0; i < static_cast<int>(dims); ++i) {
    if (!uses_p[static_cast<std::size_t>(i)]) continue;
    o.set_linear(static_cast<std::size_t>(i), Coefficient([value, i](const Point& q) {
                   return 0.5 * (value(q, i, 1, -1, 0) - value(q, i, -1, -1, 0));
                 }));
    if (deg < 2) continue;
    auto gii = [value](const Point& q, int k) {
      return value(q, k, 1, -1, 0) + value(q, k, -1, -1, 0) - 2.0 * value(q, -1, 0, -1, 0);
    };
    o.set_metric(static_cast<std::size_t>(i), static_cast<std::size_t>(i),
                 Coefficient([gii, i](const Point& q) { return gii(q, i); }));
    for (int j = 0; j < i; ++j) {
      if (!uses_p[static_cast<std::size_t>(j)]) continue;
      o.set_metric(static_cast<std::size_t>(i), static_cast<std::size_t>(j), Coefficient([value, gii, i, j](const Point& q) {
                     const double c = value(q, -1, 0, -1, 0);
                     const double bi = 0.5 * (value(q, i, 1, -1, 0) - value(q, i, -1, -1, 0));
                     const double bj = 0.5 * (value(q, j, 1, -1, 0) - value(q, j, -1, -1, 0));
                     return value(q, i, 1, j, 1) - 0.5 * gii(q, i) - 0.5 * gii(q, j) - bi - bj - c;
                   }));
    }
  }
  return o;
}

}  // namespace ontic
