#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ontic/calculus.hpp"
#include "ontic/field_io.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace ontic;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::VectorXd& v) { return v.cwiseAbs().maxCoeff(); }

// max error of d/dq sin(2 pi q) on a periodic unit grid with n points
double sine_gradient_error(std::size_t n) {
  const Grid g = Grid::line(0, 1, n, Boundary::periodic);
  const auto f = ScalarField::sample(g, [](const Point& q) { return std::sin(2 * pi * q[0]); });
  const auto exact = ScalarField::sample(g, [](const Point& q) { return 2 * pi * std::cos(2 * pi * q[0]); });
  return max_abs(gradient(f, 0).values() - exact.values());
}

}  // namespace

TEST_CASE("grid validates its axes") {
  CHECK_THROWS_AS(Grid::line(0, 1, 3), std::invalid_argument);
  CHECK_THROWS_AS(Grid::line(1, 1, 8), std::invalid_argument);
  CHECK_THROWS_AS(Grid(std::vector<Axis>{}), std::invalid_argument);
  const Grid g({Axis{0, 2, 4, Boundary::vanishing}, Axis{-1, 1, 8, Boundary::periodic}});
  CHECK(g.size() == 32);
  CHECK(g.cell_volume() == doctest::Approx(0.5 * 0.25));
  CHECK(g.coord(0, 0) == doctest::Approx(0.25));
  CHECK(g.coord(1, 1) == doctest::Approx(-0.625));
  CHECK(g.index(9, 0) == 1);
  CHECK(g.index(9, 1) == 1);
}

TEST_CASE("field rejects a wrong value count") {
  const Grid g = Grid::line(0, 1, 8);
  CHECK_THROWS_AS(ScalarField(g, Eigen::VectorXd::Zero(7)), std::invalid_argument);
}

TEST_CASE("gradient of a linear function is exact on a vanishing axis") {
  const Grid g = Grid::line(-1, 1, 16);
  const auto f = ScalarField::sample(g, [](const Point& q) { return q[0]; });
  CHECK(max_abs(gradient(f, 0).values().array() - 1.0) < 1e-13);
}

TEST_CASE("gradient of a constant is exactly zero") {
  for (auto b : {Boundary::periodic, Boundary::vanishing}) {
    const Grid g({Axis{0, 1, 9, b}, Axis{-2, 3, 7, b}});
    const ScalarField f(g, 0.1234567);
    for (std::size_t a = 0; a < 2; ++a) {
      CHECK(gradient(f, a).values().isZero(0.0));
      CHECK(second_derivative(f, a).values().isZero(0.0));
    }
    CHECK(mixed_derivative(f, 0, 1).values().isZero(0.0));
  }
}

TEST_CASE("periodic gradient converges at second order") {
  const double e1 = sine_gradient_error(64), e2 = sine_gradient_error(128), e3 = sine_gradient_error(256);
  CHECK(observed_order(e1, e2) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(observed_order(e2, e3) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("vanishing-edge stencils are second order") {
  auto err = [](std::size_t n) {
    const Grid g = Grid::line(0, 1, n);
    const auto f = ScalarField::sample(g, [](const Point& q) { return std::exp(q[0]); });
    return std::max(max_abs(gradient(f, 0).values() - f.values()),
                    max_abs(second_derivative(f, 0).values() - f.values()));
  };
  CHECK(observed_order(err(64), err(128)) > 1.9);
}

TEST_CASE("gradient rejects a bad axis") {
  const ScalarField f(Grid::line(0, 1, 8));
  CHECK_THROWS_AS(gradient(f, 1), std::out_of_range);
  CHECK_THROWS_AS(mixed_derivative(f, 0, 2), std::out_of_range);
}

TEST_CASE("integrate") {
  SUBCASE("constant on the unit box") {
    const Grid g({Axis{0, 1, 10}, Axis{0, 1, 12}});
    CHECK(integrate(ScalarField(g, 1.0)) == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("box density") {
    const Grid g = Grid::line(-0.5, 0.5, 100);
    const auto f = ScalarField::sample(g, [](const Point& q) { return 2 * std::pow(std::cos(pi * q[0]), 2); });
    CHECK(std::abs(integrate(f) - 1.0) < 1e-12);
  }
  SUBCASE("normalised Gaussian") {
    const Grid g = Grid::line(-20, 20, 400);
    const double s = 1.3;
    const auto f = ScalarField::sample(g, [&](const Point& q) {
      return std::exp(-q[0] * q[0] / (2 * s * s)) / std::sqrt(2 * pi * s * s);
    });
    CHECK(std::abs(integrate(f) - 1.0) < 1e-8);
  }
}

TEST_CASE("mixed and second derivatives") {
  const Grid g({Axis{-1, 1, 12}, Axis{-2, 1, 10}});
  const auto f = ScalarField::sample(g, [](const Point& q) { return q[0] * q[1]; });
  CHECK(max_abs(mixed_derivative(f, 0, 1).values().array() - 1.0) < 1e-12);
  CHECK(max_abs(mixed_derivative(f, 1, 0).values() - mixed_derivative(f, 0, 1).values()) == 0.0);

  const Grid l = Grid::line(-1, 1, 16);
  const auto sq = ScalarField::sample(l, [](const Point& q) { return q[0] * q[0]; });
  CHECK(max_abs(mixed_derivative(sq, 0, 0).values().array() - 2.0) < 1e-10);

  auto err = [](std::size_t n) {
    const Grid g1 = Grid::line(-1, 1, n, Boundary::periodic);
    const auto c = ScalarField::sample(g1, [](const Point& q) { return std::cos(pi * q[0]); });
    return max_abs(mixed_derivative(c, 0, 0).values() + pi * pi * c.values());
  };
  CHECK(observed_order(err(50), err(100)) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("integral of a periodic gradient telescopes") {
  const Grid g({Axis{0, 2, 33, Boundary::periodic}, Axis{0, 1, 17, Boundary::periodic}});
  const auto f = ScalarField::sample(g, [](const Point& q) { return std::exp(std::sin(pi * q[0]) * std::cos(2 * pi * q[1])); });
  CHECK(std::abs(integrate(gradient(f, 0))) < 1e-12);
  CHECK(std::abs(integrate(gradient(f, 1))) < 1e-12);
}

TEST_CASE("log-density identity residual vanishes at second order") {
  // 1/4 (d rho / rho)^2 + R'' / R - 1/2 rho'' / rho = 0 with R = sqrt(rho)
  auto residual = [](std::size_t n) {
    const Grid g = Grid::line(-3, 3, n);
    const auto rho = ScalarField::sample(g, [](const Point& q) {
      return std::exp(-q[0] * q[0] / 2) * (1.2 + std::sin(q[0]));
    });
    const ScalarField r(g, rho.values().array().sqrt());
    const Eigen::ArrayXd d1 = gradient(rho, 0).values().array() / rho.values().array();
    const Eigen::ArrayXd res = 0.25 * d1 * d1 + second_derivative(r, 0).values().array() / r.values().array() -
                     0.5 * second_derivative(rho, 0).values().array() / rho.values().array();
    double e = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(g.coord(k, 0)) < 2) e = std::max(e, std::abs(res[static_cast<Eigen::Index>(k)]));
    return e;
  };
  const double a = residual(100), b = residual(200), c = residual(400);
  CHECK(observed_order(a, b) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(observed_order(b, c) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("Richardson removes the second-order error") {
  auto integral = [](const Grid& g) {
    const auto f = ScalarField::sample(g, [](const Point& q) { return std::exp(q[0]); });
    return integrate(f);
  };
  const Grid g = Grid::line(0, 1, 16);
  const double exact = std::exp(1.0) - 1.0;
  CHECK(std::abs(integral(g) - exact) > 1e-4);
  CHECK(std::abs(extrapolated(g, integral) - exact) < 1e-7);
}

TEST_CASE("interpolation is exact for multilinear functions") {
  const Grid g({Axis{0, 1, 8}, Axis{-1, 1, 6, Boundary::periodic}});
  const auto f = ScalarField::sample(g, [](const Point& q) { return 2 + 3 * q[0] - q[0] * q[1] + 0.5 * q[1]; });
  Point q(2);
  q << 0.41, 0.13;
  CHECK(interpolate(f, q) == doctest::Approx(2 + 3 * 0.41 - 0.41 * 0.13 + 0.5 * 0.13));
  q << 1.5, 0.0;
  CHECK_THROWS_AS(interpolate(f, q), std::out_of_range);
}

TEST_CASE("field files round-trip") {
  const Grid g({Axis{-1, 1, 5, Boundary::periodic}, Axis{0, 3, 4}});
  const auto f = ScalarField::sample(g, [](const Point& q) { return std::sin(q[0]) + q[1] / 3; });
  ComplexField c(g);
  for (std::size_t k = 0; k < g.size(); ++k) c[k] = Complex(f[k], -2 * f[k]);

  std::stringstream bin;
  write_binary(bin, f);
  const ScalarField fb = read_scalar_binary(bin);
  CHECK(fb.grid() == g);
  CHECK(fb.values() == f.values());

  std::stringstream csv;
  write_csv(csv, c);
  const ComplexField cc = read_complex_csv(csv);
  CHECK(cc.grid() == g);
  CHECK((cc.values() - c.values()).cwiseAbs().maxCoeff() < 1e-15);

  std::stringstream wrong;
  write_binary(wrong, f);
  CHECK_THROWS(read_complex_binary(wrong));

  const auto dir = std::filesystem::temp_directory_path();
  save(dir / "ontic_field_test.csv", f);
  save(dir / "ontic_field_test.bin", c);
  CHECK(load_scalar(dir / "ontic_field_test.csv").values().isApprox(f.values(), 1e-15));
  CHECK(load_complex(dir / "ontic_field_test.bin").values() == c.values());
  std::filesystem::remove(dir / "ontic_field_test.csv");
  std::filesystem::remove(dir / "ontic_field_test.bin");
}
