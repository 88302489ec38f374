#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ontic/correlation.hpp"
#include "ontic/families.hpp"

#include <cmath>

using namespace ontic;

namespace {

const Grid kPlane({Axis{-8, 8, 256}, Axis{-8, 8, 256}});

// <p1 p2> = (hbar^2 / 4)(1/b^2 - 1/a^2) for the entangled Gaussian
double entangled_oracle(double a, double b, double hbar) { return 0.25 * hbar * hbar * (1 / (b * b) - 1 / (a * a)); }

EpistemicState product_real_state() {
  return gaussian_state(kPlane, {0.3, -0.5}, {1.0, 1.4}, {0.0, 0.0});
}

}  // namespace

TEST_CASE("mode names round-trip") {
  CHECK(xi_mode_from_string(to_string(XiMode::separable)) == XiMode::separable);
  CHECK(correlation_method_from_string(to_string(CorrelationMethod::mc)) == CorrelationMethod::mc);
  CHECK_THROWS_AS(xi_mode_from_string("shared"), std::invalid_argument);
}

TEST_CASE("product state has no momentum correlation") {
  const EpistemicState s = product_real_state();
  for (XiMode mode : {XiMode::nonseparable, XiMode::separable}) {
    const XiStructure xs{mode, XiModel{1.0, XiLaw::two_point, 3}};
    CHECK(std::abs(momentum_correlation(s, xs, CorrelationMethod::closed).value) < 1e-8);
    const CorrelationResult mc = momentum_correlation(s, xs, CorrelationMethod::mc, 50000);
    CHECK(std::abs(mc.value) < 4 * mc.std_error);
  }
  CHECK(std::abs(quantum_correction(s, 1.0).value) < 1e-8);
}

TEST_CASE("entangled Gaussian") {
  const double a = 0.7, b = 1.6, hbar = 1.0;
  const EpistemicState s = entangled_gaussian_state(kPlane, a, b);
  const double exact = entangled_oracle(a, b, hbar);
  const XiStructure ns{XiMode::nonseparable, XiModel{hbar, XiLaw::two_point, 9}};
  const XiStructure sep{XiMode::separable, XiModel{hbar, XiLaw::two_point, 9}};

  const double closed = momentum_correlation(s, ns, CorrelationMethod::closed).value;
  CHECK(closed == doctest::Approx(exact).epsilon(1e-4));
  // the sandwich quadrature converges to the same number at second order
  const Complex q = quantum_expectation(momentum_product_observable(2, 0, 1), to_wavefunction(s, hbar), hbar);
  const double q2 = extrapolated(kPlane, [&](const Grid& g) {
    const EpistemicState e = entangled_gaussian_state(g, a, b);
    return quantum_expectation(momentum_product_observable(2, 0, 1), to_wavefunction(e, hbar), hbar).real();
  });
  CHECK(std::abs(closed - q.real()) < 0.01 * std::abs(exact));
  CHECK(std::abs(closed - q2) < 1e-5);
  CHECK(std::abs(q.imag()) < 1e-10);

  CHECK(momentum_correlation(s, sep, CorrelationMethod::closed).value == 0.0);
  const CorrelationResult mc_sep = momentum_correlation(s, sep, CorrelationMethod::mc, 100000);
  CHECK(std::abs(mc_sep.value) < 4 * mc_sep.std_error);
  const CorrelationResult mc_ns = momentum_correlation(s, ns, CorrelationMethod::mc, 100000);
  CHECK(std::abs(mc_ns.value - closed) < 4 * mc_ns.std_error);

  const QuantumCorrection qc = quantum_correction(s, hbar);
  CHECK(qc.value == doctest::Approx(closed).epsilon(1e-12));
  CHECK(qc.gradient_form == doctest::Approx(exact).epsilon(1e-4));
}

TEST_CASE("the two forms of the correction converge together") {
  auto gap = [](std::size_t n) {
    const Grid g({Axis{-8, 8, n}, Axis{-8, 8, n}});
    const QuantumCorrection qc = quantum_correction(entangled_gaussian_state(g, 0.7, 1.6), 1.0);
    return std::abs(qc.gradient_form - qc.curvature_form);
  };
  const double e1 = gap(64), e2 = gap(128);
  CHECK(observed_order(e1, e2) > 1.8);

  // one Richardson step on the curvature form closes the gap to 1e-6
  const Grid g({Axis{-8, 8, 512}, Axis{-8, 8, 512}});
  const double grad = quantum_correction(entangled_gaussian_state(g.refined(2), 0.7, 1.6), 1.0).gradient_form;
  const double curv = extrapolated(g, [](const Grid& h) {
    return quantum_correction(entangled_gaussian_state(h, 0.7, 1.6), 1.0).curvature_form;
  });
  CHECK(std::abs(grad - curv) < 1e-6 * std::abs(grad));
}

TEST_CASE("correction scales with hbar squared") {
  const EpistemicState s = entangled_gaussian_state(kPlane, 0.7, 1.6);
  CHECK(quantum_correction(s, 2.0).value == doctest::Approx(4 * quantum_correction(s, 1.0).value).epsilon(1e-12));
}

TEST_CASE("a drift term survives separation") {
  // S = k q1 q2 gives d1 S d2 S = k^2 q1 q2, which correlates under an entangled rho
  const double k = 0.4;
  const EpistemicState e = entangled_gaussian_state(kPlane, 0.7, 1.6);
  const EpistemicState s(e.density(), ScalarField::sample(kPlane, [&](const Point& q) { return k * q[0] * q[1]; }));
  // <q1 q2> = (b^2 - a^2) / 4
  const double drift = k * k * (1.6 * 1.6 - 0.7 * 0.7) / 4;
  const XiStructure sep{XiMode::separable, XiModel{1.0, XiLaw::gaussian, 4}};
  CHECK(momentum_correlation(s, sep, CorrelationMethod::closed).value == doctest::Approx(drift).epsilon(1e-3));
  const CorrelationResult mc = momentum_correlation(s, sep, CorrelationMethod::mc, 100000);
  CHECK(std::abs(mc.value - momentum_correlation(s, sep, CorrelationMethod::closed).value) < 4 * mc.std_error);
}

TEST_CASE("two-point law has the smaller variance") {
  const EpistemicState s = entangled_gaussian_state(kPlane, 0.7, 1.6);
  const auto tp = momentum_correlation(s, {XiMode::nonseparable, XiModel{1.0, XiLaw::two_point, 1}}, CorrelationMethod::mc, 100000);
  const auto ga = momentum_correlation(s, {XiMode::nonseparable, XiModel{1.0, XiLaw::gaussian, 1}}, CorrelationMethod::mc, 100000);
  CHECK(tp.std_error < ga.std_error);
  CHECK(std::abs(tp.value - ga.value) < 4 * std::hypot(tp.std_error, ga.std_error));
}

TEST_CASE("nodes are rejected") {
  // a node line on the grid where the asymmetric envelope gives a nonzero central gradient
  const Grid g({Axis{-4, 4, 33}, Axis{-4, 4, 32}});
  auto rho = ScalarField::sample(g, [](const Point& q) { return q[0] * q[0] * std::exp(-std::pow(q[0] - 1, 2) - q[1] * q[1]); });
  rho.values() /= integrate(rho);
  const EpistemicState s(rho, ScalarField(g));
  CHECK_THROWS_AS(momentum_correlation(s, {}, CorrelationMethod::closed), NodeError);
  CHECK_THROWS_AS(quantum_correction(s, 1.0), NodeError);
}

TEST_CASE("schmidt rank") {
  const Grid l = Grid::line(-8, 8, 64);
  const ComplexField a0 = harmonic_mode(l, 0, 1, 1, 1), a1 = harmonic_mode(l, 1, 1, 1, 1);
  CHECK(schmidt_rank(product_state(a0, a1)) == 1);
  ComplexField bell = product_state(a0, a0);
  bell.values() = (bell.values() + product_state(a1, a1).values()) / std::sqrt(2.0);
  CHECK(schmidt_rank(bell) == 2);
  const Eigen::VectorXd s = schmidt_coefficients(bell);
  CHECK(s[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-10));
  CHECK(s[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-10));
  CHECK_THROWS_AS(schmidt_rank(a0), std::invalid_argument);
}
