#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ontic/expectation.hpp"
#include "ontic/families.hpp"

#include <cmath>
#include <numbers>

using namespace ontic;
using std::numbers::pi;

namespace {

Point pt(double x) {
  Point p(1);
  p << x;
  return p;
}

OnticSample sample_at(double q, double p) { return OnticSample{pt(q), 0.0, pt(p)}; }

// Gaussian on a wide vanishing line; Richardson over N and 2N
const Grid kWide = Grid::line(-12, 12, 512);

}  // namespace

TEST_CASE("evaluate") {
  QuadraticObservable p2(1, "p^2");
  p2.set_metric(0, 0, 2.0);
  CHECK(evaluate(p2, sample_at(0.3, 2.0)) == doctest::Approx(4.0));

  QuadraticObservable v(1);
  v.set_potential(Coefficient([](const Point& q) { return std::cos(q[0]); }));
  CHECK(evaluate(v, sample_at(0.4, 17.0)) == doctest::Approx(std::cos(0.4)));

  CHECK(evaluate(kinetic_observable({1.0}), sample_at(-2.0, 3.0)) == doctest::Approx(4.5));

  const auto lz = angular_momentum_observable(2);
  Point q(2), p(2);
  q << 1.5, -0.5;
  p << 2.0, 3.0;
  CHECK(lz(q, p) == doctest::Approx(1.5 * 3.0 - (-0.5) * 2.0));
}

TEST_CASE("metric is stored symmetric") {
  QuadraticObservable o(3);
  o.set_metric(0, 2, 1.25);
  CHECK(o.metric(2, 0).constant() == 1.25);
  CHECK(o.metric(1, 2).is_zero());
  CHECK_THROWS_AS(o.set_metric(0, 3, 1.0), std::out_of_range);
}

TEST_CASE("observables from expressions") {
  const auto h = observable_from_expression("0.5*p^2 + w^2*q^2/2", 1, {{"w", 2.0}});
  const auto ref = harmonic_observable(1, 1.0, 2.0);
  for (double q : {-1.0, 0.3, 2.0})
    for (double p : {-2.0, 0.0, 1.7}) CHECK(h(pt(q), pt(p)) == doctest::Approx(ref(pt(q), pt(p))));

  const auto lz = observable_from_expression("x*py - y*px", 2);
  Point q(2), p(2);
  q << 0.5, 2.0;
  p << -1.0, 4.0;
  CHECK(lz(q, p) == doctest::Approx(0.5 * 4.0 - 2.0 * -1.0));
  CHECK(lz.metric(0, 0).is_zero());

  const auto mixed = observable_from_expression("p0*p1*(1 + q0^2) + 3*p1", 2);
  CHECK(mixed(q, p) == doctest::Approx(-1.0 * 4.0 * 1.25 + 12.0));

  CHECK_THROWS_AS(observable_from_expression("p^3", 1), ExpressionError);
  CHECK_THROWS_AS(observable_from_expression("sin(p)", 1), ExpressionError);
  CHECK_THROWS_AS(observable_from_expression("q/p", 1), ExpressionError);
  CHECK_THROWS_AS(observable_from_expression("p^2*p0", 2), ExpressionError);  // p is not defined in 2D
  CHECK_THROWS_AS(observable_from_expression("(q + 1", 1), ExpressionError);
  CHECK_NOTHROW(observable_from_expression("p^2 / (1 + q^2)", 1));
}

TEST_CASE("Monte Carlo averages") {
  const double hbar = 1.0, s = 0.9;
  const auto st = gaussian_state(kWide.refined(2), 0.0, s);
  const XiModel m{hbar, XiLaw::two_point, 17};
  const std::size_t n = 100000;

  const auto q = ensemble_average_mc(position_observable(1, 0), st, m, n);
  CHECK(std::abs(q.value) < 4 * q.std_error);

  const auto p2 = ensemble_average_mc(momentum_spread_observable(1, 0, 0.0), st, m, n);
  CHECK(std::abs(p2.value - hbar * hbar / (4 * s * s)) < 4 * p2.std_error);

  const Grid box = Grid::line(-0.5, 0.5, 1024);
  const auto b = ensemble_average_mc(momentum_spread_observable(1, 0, 0.0), box_ground_state(box), m, n);
  CHECK(std::abs(b.value - pi * pi * hbar * hbar) < 4 * b.std_error);

  CHECK_THROWS_AS(ensemble_average_mc(position_observable(1, 0), st, m, 1), std::invalid_argument);
  const auto again = ensemble_average_mc(momentum_spread_observable(1, 0, 0.0), st, m, n);
  CHECK(again.value == p2.value);
  CHECK(again.std_error == p2.std_error);
}

TEST_CASE("closed-form averages") {
  const double hbar = 0.8, s = 1.1;
  SUBCASE("Gaussian momentum spread") {
    const double v = extrapolated(kWide, [&](const Grid& g) {
      return ensemble_average_closed(momentum_spread_observable(1, 0, 0.0), gaussian_state(g, 0.2, s), hbar);
    });
    CHECK(v == doctest::Approx(hbar * hbar / (4 * s * s)).epsilon(1e-6));
  }
  SUBCASE("plane wave momentum is exact") {
    const Grid g = Grid::line(0, 1, 32, Boundary::periodic);
    CHECK(ensemble_average_closed(momentum_observable(1, 0), plane_wave_state(g, 2.5), hbar) ==
          doctest::Approx(2.5).epsilon(1e-14));
  }
  SUBCASE("box kinetic energy") {
    const double v = extrapolated(Grid::line(-0.5, 0.5, 512), [&](const Grid& g) {
      return ensemble_average_closed(kinetic_observable({1.0}), box_ground_state(g), hbar);
    });
    CHECK(v == doctest::Approx(pi * pi * hbar * hbar / 2).epsilon(1e-6));
  }
}

TEST_CASE("quantum expectation") {
  const double hbar = 1.3, s = 0.7;
  SUBCASE("real Gaussian momentum spread") {
    const Complex v = extrapolated(kWide, [&](const Grid& g) {
      return quantum_expectation(momentum_spread_observable(1, 0, 0.0), to_wavefunction(gaussian_state(g, 0, s), hbar), hbar);
    });
    CHECK(v.real() == doctest::Approx(hbar * hbar / (4 * s * s)).epsilon(1e-6));
    CHECK(std::abs(v.imag()) < 1e-12);
  }
  SUBCASE("position of a moving packet") {
    const auto psi = gaussian_packet(kWide, 1.25, 0.9, 2.0, hbar);
    const Complex v = quantum_expectation(position_observable(1, 0), psi, hbar);
    CHECK(v.real() == doctest::Approx(1.25).epsilon(1e-10));
    CHECK(std::abs(v.imag()) < 1e-14);
  }
  SUBCASE("imaginary part vanishes for random observables") {
    Rng rng = substream(9, 0);
    for (int t = 0; t < 5; ++t) {
      const auto params = SmoothStateParams::draw(rng);
      const auto obs = random_observable(rng);
      const Complex v = quantum_expectation(obs, to_wavefunction(params.on(kWide), hbar), hbar);
      CHECK(std::abs(v.imag()) < 1e-10 * (1 + std::abs(v.real())));
    }
  }
  SUBCASE("rejects unnormalised input") {
    CHECK_THROWS_AS(quantum_expectation(position_observable(1, 0), ComplexField(kWide, 1.0), hbar), std::invalid_argument);
  }
}

TEST_CASE("three engines agree on random states") {
  const double hbar = 1.0;
  Rng rng = substream(123, 0);
  for (int t = 0; t < 4; ++t) {
    const auto params = SmoothStateParams::draw(rng);
    const auto obs = random_observable(rng);
    const double closed = extrapolated(kWide, [&](const Grid& g) { return ensemble_average_closed(obs, params.on(g), hbar); });
    const Complex quantum = extrapolated(kWide, [&](const Grid& g) {
      return quantum_expectation(obs, to_wavefunction(params.on(g), hbar), hbar);
    });
    CHECK(std::abs(closed - quantum.real()) < 1e-5);
    const auto mc = ensemble_average_mc(obs, params.on(kWide.refined(2)), XiModel{hbar, XiLaw::two_point, std::uint64_t(t)}, 100000);
    CHECK(std::abs(mc.value - closed) < 4 * mc.std_error);
  }
}

TEST_CASE("mu-law independence") {
  const double hbar = 0.6;
  Rng rng = substream(77, 0);
  const auto st = SmoothStateParams::draw(rng).on(kWide.refined(2));
  const auto obs = random_observable(rng);
  const auto a = ensemble_average_mc(obs, st, XiModel{hbar, XiLaw::two_point, 1}, 100000);
  const auto b = ensemble_average_mc(obs, st, XiModel{hbar, XiLaw::gaussian, 2}, 100000);
  CHECK(std::abs(a.value - b.value) < 4 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("uncertainty products") {
  const double hbar = 1.0;
  SUBCASE("Gaussian saturates") {
    const double prod = extrapolated(kWide, [&](const Grid& g) {
      return uncertainty_product(gaussian_state(g, 0.5, 1.3, 0.4), XiModel{hbar}).product;
    });
    CHECK(prod == doctest::Approx(hbar / 2).epsilon(1e-6));
  }
  SUBCASE("box ground state") {
    const Grid g = Grid::line(-0.5, 0.5, 512);
    const double prod = extrapolated(g, [&](const Grid& x) { return uncertainty_product(box_ground_state(x), XiModel{hbar}).product; });
    CHECK(prod == doctest::Approx(std::sqrt((pi * pi - 6) / 3) * hbar / 2).epsilon(1e-6));
  }
  SUBCASE("random states respect the bound and the chain") {
    Rng rng = substream(5, 0);
    for (int t = 0; t < 100; ++t) {
      const auto st = SmoothStateParams::draw(rng).on(kWide);
      const auto u = uncertainty_product(st, XiModel{hbar});
      CHECK(u.product >= hbar / 2 - 1e-6);
      const auto c = uncertainty_chain(st, hbar);
      CHECK(c.position_holds(1e-9));
      CHECK(c.momentum_holds(1e-12));
      CHECK(c.variance_q == doctest::Approx(u.sigma_q * u.sigma_q));
    }
  }
}
