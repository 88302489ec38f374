#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ontic/dynamics.hpp"
#include "ontic/expectation.hpp"
#include "ontic/families.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace ontic;
using std::numbers::pi;

namespace {

double variance_q(const ComplexField& psi) {
  const Grid& g = psi.grid();
  const Eigen::ArrayXd rho = psi.values().cwiseAbs2().array();
  Eigen::ArrayXd q(rho.size());
  for (std::size_t k = 0; k < g.size(); ++k) q[static_cast<Eigen::Index>(k)] = g.coord(k, 0);
  const double n = integrate(g, rho.matrix());
  const double m = integrate(g, (rho * q).matrix()) / n;
  return integrate(g, (rho * (q - m) * (q - m)).matrix()) / n;
}

double l2_distance(const ScalarField& a, const ScalarField& b) {
  return std::sqrt(integrate(a.grid(), (a.values() - b.values()).cwiseAbs2()));
}

ScalarField density_of(const ComplexField& psi) { return ScalarField(psi.grid(), psi.values().cwiseAbs2()); }

// same sample points, periodic wrap
Grid periodic_twin(const Grid& g) {
  auto axes = g.axes();
  for (auto& a : axes) a.boundary = Boundary::periodic;
  return Grid(axes);
}

}  // namespace

TEST_CASE("Hamiltonian") {
  CHECK_THROWS_AS(Hamiltonian({1.0, 0.0}), std::invalid_argument);
  const Hamiltonian h = Hamiltonian::harmonic(1, 2.0, 3.0);
  Point q(1), p(1);
  q << 0.5;
  p << 1.0;
  CHECK(h(q, p) == doctest::Approx(0.25 + 0.5 * 2 * 9 * 0.25));
  CHECK(h.observable()(q, p) == doctest::Approx(h(q, p)));
  Hamiltonian a = Hamiltonian::free(1);
  a.set_gauge(0, 0.5);
  CHECK(a.has_gauge());
  CHECK(a(q, p) == doctest::Approx(0.125));
  CHECK(method_from_string("madelung") == Method::madelung);
  CHECK_THROWS(method_from_string("euler"));
}

TEST_CASE("free Gaussian follows the spreading law") {
  const double hbar = 1.0, s0 = 1.0;
  const auto H = Hamiltonian::free(1);
  SUBCASE("split-step on a periodic grid") {
    const Grid g = Grid::line(-40, 40, 1024, Boundary::periodic);
    const auto run = evolve_schrodinger(gaussian_packet(g, 0.0, s0, 0.7, hbar), H, hbar, {10.0, 0.05, 20});
    const double tau = hbar * 10.0 / (2 * s0 * s0);
    CHECK(variance_q(run.state) == doctest::Approx(s0 * s0 * (1 + tau * tau)).epsilon(1e-4));
    CHECK(run.report.max_norm_drift() <= kMaxNormDrift);
    CHECK(run.report.energy_defect() < 1e-10);
    CHECK(run.report.mean_q.back()[0] == doctest::Approx(7.0).epsilon(1e-8));
  }
  SUBCASE("Crank-Nicolson on a vanishing grid") {
    const Grid g = Grid::line(-30, 30, 2048);
    const auto run = evolve_schrodinger(gaussian_packet(g, 0.0, s0, 0.0, hbar), H, hbar, {4.0, 0.005, 100});
    CHECK(variance_q(run.state) == doctest::Approx(s0 * s0 * 5).epsilon(1e-3));
    CHECK(run.report.max_norm_drift() <= kMaxNormDrift);
    CHECK(run.report.energy_defect() < 1e-10);
  }
}

TEST_CASE("plane wave only rotates its phase") {
  const double hbar = 0.7, T = 1.3;
  const Grid g = Grid::line(0, 2 * pi, 64, Boundary::periodic);
  const auto psi0 = plane_wave_mode(g, 3);
  const auto run = evolve_schrodinger(psi0, Hamiltonian::free(1), hbar, {T, 0.01});
  const double p0 = 3 * hbar;
  const Complex rot = std::polar(1.0, -p0 * p0 * T / (2 * hbar));
  CHECK((run.state.values() - rot * psi0.values()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("coherent state follows the classical orbit") {
  const double hbar = 1.0, q0 = 2.0;
  const Grid g = Grid::line(-16, 16, 512, Boundary::periodic);
  const auto psi0 = gaussian_packet(g, q0, std::sqrt(0.5), 0.0, hbar);
  const double T = 2 * pi;
  const auto run = evolve_schrodinger(psi0, Hamiltonian::harmonic(1, 1.0, 1.0), hbar, {T, 0.002, 50});
  const auto& r = run.report;
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    CHECK(std::abs(r.mean_q[k][0] - q0 * std::cos(r.times[k])) < 1e-4 * q0);
    CHECK(std::abs(r.mean_p[k][0] + q0 * std::sin(r.times[k])) < 1e-4 * q0);
  }
  CHECK(r.max_norm_drift() <= kMaxNormDrift);
  CHECK(r.energy_defect() < 1e-6);
  CHECK(r.energy.front() == doctest::Approx(0.5 + 0.5 * q0 * q0).epsilon(1e-8));
  // after one period the packet is back where it started
  CHECK(l2_distance(density_of(run.state), density_of(psi0)) < 1e-4);
}

TEST_CASE("evolution is linear") {
  const double hbar = 1.0;
  const Grid g = Grid::line(-10, 10, 256);
  const auto H = Hamiltonian::harmonic(1, 1.0, 0.8);
  const auto a = gaussian_packet(g, -1.0, 0.8, 0.5, hbar), b = gaussian_packet(g, 2.0, 0.6, -1.0, hbar);
  const Complex ca(0.6, 0.2), cb(-0.3, 0.7);
  ComplexField mix(g, ca * a.values() + cb * b.values());
  const double n = std::sqrt(integrate(g, mix.values().cwiseAbs2()));
  mix.values() /= n;
  const StepControl c{0.8, 0.01};
  const auto ra = evolve_schrodinger(a, H, hbar, c), rb = evolve_schrodinger(b, H, hbar, c);
  const auto rm = evolve_schrodinger(mix, H, hbar, c);
  const Eigen::VectorXcd expect = (ca * ra.state.values() + cb * rb.state.values()) / n;
  CHECK((rm.state.values() - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stationary eigenstate keeps its energy") {
  const double hbar = 1.0;
  const Grid g = Grid::line(-8, 8, 200);
  const auto H = Hamiltonian::harmonic(1, 1.0, 1.0);
  // eigenvector of the discrete Hamiltonian used by the propagator
  const std::size_t n = g.size();
  const double h = g.spacing(0), t = hbar * hbar / (2 * h * h);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double q = g.coord(i, 0);
    M(k, k) = 2 * t + 0.5 * q * q;
    if (k + 1 < M.rows()) M(k, k + 1) = M(k + 1, k) = -t;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  ComplexField psi(g, es.eigenvectors().col(0).cast<Complex>());
  psi = normalized(psi);
  const double e0 = es.eigenvalues()[0];
  const auto run = evolve_schrodinger(psi, H, hbar, {3.0, 0.01});
  for (double e : run.report.energy) CHECK(e == doctest::Approx(e0).epsilon(1e-6));
  CHECK(std::abs(e0 - 0.5) < 1e-3);
}

TEST_CASE("Schrodinger errors") {
  const Grid g = Grid::line(-5, 5, 64);
  CHECK_THROWS_AS(evolve_schrodinger(ComplexField(g, 1.0), Hamiltonian::free(1), 1.0, {1.0}), std::invalid_argument);
  const auto psi = gaussian_packet(g, 0, 1, 0, 1.0);
  CHECK_THROWS_AS(evolve_schrodinger(psi, Hamiltonian::free(2), 1.0, {1.0}), std::invalid_argument);
  const Hamiltonian bad({1.0}, Coefficient([](const Point& q) { return q[0] > 2 ? std::nan("") : 0.0; }));
  CHECK_THROWS_AS(evolve_schrodinger(psi, bad, 1.0, {0.1, 0.01}), InstabilityError);
  Hamiltonian varying = Hamiltonian::free(1);
  varying.set_gauge(0, Coefficient([](const Point& q) { return q[0]; }));
  const Grid p = Grid::line(-5, 5, 64, Boundary::periodic);
  CHECK_THROWS_AS(evolve_schrodinger(gaussian_packet(p, 0, 1, 0, 1.0), varying, 1.0, {0.1}), std::invalid_argument);
}

TEST_CASE("constant gauge shifts the kinetic momentum") {
  // with A constant, the velocity of the packet is (p - A) / m on both kinds of grid
  const double hbar = 1.0, A = 0.4, p0 = 1.0;
  Hamiltonian H = Hamiltonian::free(1);
  H.set_gauge(0, A);
  for (auto b : {Boundary::periodic, Boundary::vanishing}) {
    const Grid g = Grid::line(-20, 20, 1024, b);
    const auto run = evolve_schrodinger(gaussian_packet(g, 0, 1.0, p0, hbar), H, hbar, {2.0, 0.002, 1000});
    CHECK(run.report.mean_q.back()[0] == doctest::Approx(2.0 * (p0 - A)).epsilon(2e-3));
    CHECK(run.report.max_norm_drift() <= kMaxNormDrift);
  }
}

TEST_CASE("two-dimensional split-step") {
  const double hbar = 1.0;
  const Grid g({Axis{-10, 10, 64, Boundary::periodic}, Axis{-10, 10, 256}});
  const auto st = gaussian_state(g, {1.0, -0.5}, {1.0, 0.8}, {0.0, 0.0});
  const auto run = evolve_schrodinger(to_wavefunction(st, hbar), Hamiltonian::harmonic(2, 1.0, 1.0), hbar, {pi / 2, 0.005, 0});
  // a quarter period maps positions into momenta
  CHECK(run.report.mean_q.back()[0] == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(run.report.mean_p.back()[0] == doctest::Approx(-1.0).epsilon(2e-3));
  CHECK(run.report.mean_p.back()[1] == doctest::Approx(0.5).epsilon(2e-3));
  CHECK(run.report.max_norm_drift() <= kMaxNormDrift);
  CHECK(run.report.energy_defect() < 1e-4);
}

TEST_CASE("Madelung agrees with Schrodinger on a node-free packet") {
  const double hbar = 1.0, T = 0.5;
  // a Gaussian is reproduced exactly by both solvers, so modulate it
  auto discrepancy = [&](std::size_t n, double dt) {
    const Grid g = Grid::line(-8, 8, n);
    const auto rho = ScalarField::sample(g, [](const Point& q) { return std::exp(-q[0] * q[0] / 2) * (1 + 0.3 * std::cos(q[0])); });
    const auto st = EpistemicState::normalized(rho, ScalarField::sample(g, [](const Point& q) { return 0.8 * q[0]; }));
    const auto m = evolve_madelung(st, Hamiltonian::free(1), hbar, {T, dt});
    const ComplexField psi0(periodic_twin(g), to_wavefunction(st, hbar).values());
    const auto s = evolve_schrodinger(psi0, Hamiltonian::free(1), hbar, {T, dt});
    return l2_distance(m.state.density(), ScalarField(g, density_of(s.state).values()));
  };
  const double e1 = discrepancy(128, 0.004), e2 = discrepancy(256, 0.001);
  CHECK(e1 < 1e-3);
  CHECK(observed_order(e1, e2) > 1.8);
}

TEST_CASE("Madelung ground state is stationary") {
  const double hbar = 1.0, T = 1.0;
  // tails are kept near the node threshold: deeper ones amplify round-off
  const Grid g = Grid::line(-6, 6, 256);
  const auto st = gaussian_state(g, 0.0, std::sqrt(0.5), 0.0);
  const auto run = evolve_madelung(st, Hamiltonian::harmonic(1, 1.0, 1.0), hbar, {T, 0.0, 100});
  CHECK(l2_distance(run.state.density(), st.density()) < 1e-8);
  CHECK((run.state.phase().values().array() - (st.phase().values().array() - 0.5 * T)).abs().maxCoeff() < 1e-4);
  CHECK(run.report.energy_defect() < 1e-8);
  CHECK(run.report.energy.front() == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("Madelung without the quantum term is the classical flow") {
  const Grid g = Grid::line(-10, 10, 200);
  const auto H = Hamiltonian::harmonic(1, 1.0, 0.5);
  const auto st = gaussian_state(g, 1.0, 1.2, 0.3);
  const StepControl c{1.5, 0.005, 10};
  const auto m = evolve_madelung(st, H, 0.0, c);
  const auto cl = evolve_classical_hj(st, H, c);
  CHECK(m.state.kind() == StateKind::classical);
  CHECK(l2_distance(m.state.density(), cl.state.density()) < 5e-3);
  for (std::size_t r = 0; r < m.report.times.size(); ++r) {
    CHECK(m.report.mean_q[r][0] == doctest::Approx(cl.report.mean_q[r][0]).epsilon(1e-6));
    CHECK(m.report.mean_p[r][0] == doctest::Approx(cl.report.mean_p[r][0]).epsilon(1e-6));
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (m.state.density()[k] > 1e-3) worst = std::max(worst, std::abs(m.state.phase()[k] - cl.state.phase()[k]));
  CHECK(worst < 1e-6);
}

TEST_CASE("Madelung aborts at nodes and on long steps") {
  const double hbar = 1.0;
  const Grid g = Grid::line(-12, 12, 256);
  SUBCASE("colliding packets interfere") {
    const auto psi = normalized(ComplexField(g, gaussian_packet(g, -3, 0.7, 3.0, hbar).values() +
                                                    gaussian_packet(g, 3, 0.7, -3.0, hbar).values()));
    CHECK_THROWS_AS(evolve_madelung(from_wavefunction(psi, hbar), Hamiltonian::free(1), hbar, {1.0, 0.0005}), NodeError);
  }
  SUBCASE("initial node") {
    // odd point count puts the node of the second mode on a sample
    const auto box = box_ground_state(Grid::line(0, 1, 65));
    ComplexField two = box_mode(Grid::line(0, 1, 65), 2);
    CHECK_THROWS_AS(evolve_madelung(from_wavefunction(two, hbar), Hamiltonian::free(1), hbar, {0.1}), NodeError);
    CHECK_NOTHROW(evolve_madelung(box, Hamiltonian::free(1), hbar, {1e-3}));
  }
  SUBCASE("CFL") {
    const auto st = gaussian_state(g, 0, 1.0, 0.0);
    CHECK_THROWS_AS(evolve_madelung(st, Hamiltonian::free(1), hbar, {0.1, 0.05}), CflError);
    CHECK_THROWS_AS(evolve_madelung(gaussian_state(g, 0, 1.0, 40.0), Hamiltonian::free(1), 0.0, {0.1, 0.01}), CflError);
  }
}

TEST_CASE("classical characteristics") {
  SUBCASE("free particle: straight lines and linear action") {
    const double p0 = 1.5, T = 2.0;
    const Grid g = Grid::line(-15, 15, 300);
    const auto st = gaussian_state(g, -2.0, 1.0, p0);
    const auto run = evolve_classical_hj(st, Hamiltonian::free(1), {T, 0.01, 10}, 8, 3);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double q = g.coord(k, 0);
      CHECK(run.state.phase()[k] == doctest::Approx(p0 * q - p0 * p0 * T / 2).epsilon(1e-10));
    }
    CHECK(run.trajectories.size() == 8);
    for (const auto& tr : run.trajectories)
      for (std::size_t r = 0; r < tr.times.size(); ++r) {
        CHECK(tr.q[r][0] == doctest::Approx(tr.q[0][0] + tr.p[0][0] * tr.times[r]).epsilon(1e-12));
        CHECK(tr.p[r][0] == doctest::Approx(p0).epsilon(1e-12));
      }
    CHECK(run.report.mean_q.back()[0] == doctest::Approx(-2.0 + p0 * T).epsilon(1e-10));
    CHECK(std::abs(integrate(run.state.density()) - 1.0) < 1e-12);
    CHECK(run.report.energy_defect() < 1e-12);
  }
  SUBCASE("linear potential accelerates uniformly") {
    const double F = 0.8, T = 1.5;
    const Grid g = Grid::line(-15, 15, 200);
    const Hamiltonian H({1.0}, Coefficient([F](const Point& q) { return F * q[0]; }));
    const auto run = evolve_classical_hj(gaussian_state(g, 0.5, 1.0, 0.2), H, {T, 0.01, 5});
    for (std::size_t r = 0; r < run.report.times.size(); ++r) {
      const double t = run.report.times[r];
      CHECK(run.report.mean_q[r][0] == doctest::Approx(0.5 + 0.2 * t - 0.5 * F * t * t).epsilon(1e-8));
    }
    CHECK(run.report.energy_defect() < 1e-9);
  }
  SUBCASE("harmonic well") {
    const double q0 = 1.5;
    const Grid g = Grid::line(-10, 10, 200);
    // every characteristic reaches the origin at a quarter period, so stop short of it
    const auto run = evolve_classical_hj(gaussian_state(g, q0, 0.8, 0.0), Hamiltonian::harmonic(1, 1.0, 1.0), {1.4, 0.005, 20});
    for (std::size_t r = 0; r < run.report.times.size(); ++r)
      CHECK(std::abs(run.report.mean_q[r][0] - q0 * std::cos(run.report.times[r])) < 1e-8);
    CHECK(run.report.energy_defect() < 1e-9);
  }
  SUBCASE("focusing phase produces a caustic") {
    const Grid g = Grid::line(-6, 6, 120);
    const auto st = gaussian_state(g, 0.0, 1.0, 0.0);
    const EpistemicState focus(st.density(), ScalarField::sample(g, [](const Point& q) { return -0.5 * q[0] * q[0]; }));
    CHECK_NOTHROW(evolve_classical_hj(focus, Hamiltonian::free(1), {0.9, 0.01}));
    CHECK_THROWS_AS(evolve_classical_hj(focus, Hamiltonian::free(1), {1.2, 0.01}), CausticError);
  }
  SUBCASE("two dimensions") {
    const Grid g({Axis{-8, 8, 48}, Axis{-8, 8, 48, Boundary::periodic}});
    const auto st = gaussian_state(g, {0.5, 0.0}, {1.0, 1.2}, {0.3, 0.5});
    const auto run = evolve_classical_hj(st, Hamiltonian::free(2), {2.0, 0.05, 10});
    CHECK(run.report.mean_q.back()[0] == doctest::Approx(0.5 + 0.6).epsilon(1e-10));
    CHECK(run.report.mean_q.back()[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(integrate(run.state.density()) - 1.0) < 1e-12);
    const std::size_t mid = g.size() / 2 + 24;
    const Point q = g.point(mid);
    CHECK(run.state.phase()[mid] == doctest::Approx(0.3 * q[0] + 0.5 * q[1] - 0.5 * (0.09 + 0.25) * 2.0).epsilon(1e-9));
    const EpistemicState focus(st.density(), ScalarField::sample(g, [](const Point& x) { return -0.5 * x[0] * x[0]; }));
    CHECK_THROWS_AS(evolve_classical_hj(focus, Hamiltonian::free(2), {1.5, 0.05}), CausticError);
  }
}

TEST_CASE("average energy series") {
  const double hbar = 1.0;
  const Grid g = Grid::line(-6, 6, 256);
  const auto run = evolve_madelung(gaussian_state(g, 1.0, 0.75, 0.4), Hamiltonian::harmonic(1, 1.0, 1.0), hbar,
                                   {1.0, 0.0, 0, 25});
  std::vector<EpistemicState> states;
  for (const auto& [t, s] : run.snapshots) states.push_back(s);
  CHECK(states.size() >= 3);
  const auto e = average_energy_series(states, Hamiltonian::harmonic(1, 1.0, 1.0), hbar);
  for (double x : e) CHECK(x == doctest::Approx(e.front()).epsilon(1e-4));
}

TEST_CASE("only the Hamilton-Jacobi equation conserves the average energy") {
  const Grid g = Grid::line(-10, 10, 400);
  const auto H = Hamiltonian::harmonic(1, 1.0, 0.7);
  const auto st = gaussian_state(g, 0.8, 1.1, 0.3);
  const auto obs = H.observable();
  auto rate = [&](const MadelungRates& r) {
    const double eps = 1e-4;
    auto at = [&](double e) {
      const ScalarField rho(g, (st.density().values().array().log() + e * r.log_density.array()).exp().matrix());
      return ensemble_average_closed(obs, EpistemicState::normalized(rho, ScalarField(g, st.phase().values() + e * r.phase)), 0.0);
    };
    return (at(eps) - at(-eps)) / (2 * eps);
  };
  MadelungRates r = madelung_rates(st, H, 0.0);
  const double conserved = std::abs(rate(r));
  CHECK(conserved < 1e-4);
  for (std::size_t k = 0; k < g.size(); ++k) r.phase[static_cast<Eigen::Index>(k)] += 0.3 * std::sin(g.coord(k, 0));
  CHECK(std::abs(rate(r)) > 0.01);
  CHECK(std::abs(rate(r)) > 100 * conserved);
}

TEST_CASE("classical limit") {
  SUBCASE("free packet: phase discrepancy shrinks like hbar^2") {
    const Grid g = Grid::line(-10, 10, 256);
    const auto st = gaussian_state(g, -1.0, 1.0, 1.0);
    const auto rep = classical_limit_check(st, Hamiltonian::free(1), {0.4, 0.2, 0.1}, {1.0});
    CHECK(rep.phase_monotone());
    for (double r : rep.phase_ratios()) {
      CHECK(r > 4 / 1.5);
      CHECK(r < 6);
    }
  }
  SUBCASE("harmonic well: identical means for every hbar") {
    const Grid g = Grid::line(-5, 5, 256);
    const auto st = gaussian_state(g, 1.0, 0.6, 0.0);
    const auto rep = classical_limit_check(st, Hamiltonian::harmonic(1, 1.0, 1.0), {0.5, 0.25}, {1.0, 0.0, 10});
    for (const auto& row : rep.rows) {
      CHECK(row.mean_q_divergence < 1e-6);
      CHECK(row.mean_p_divergence < 1e-6);
    }
  }
  SUBCASE("cubic term: the mean discrepancy decreases") {
    const Grid g = Grid::line(-4, 4, 256);
    const Hamiltonian H({1.0}, Coefficient([](const Point& q) { return 0.5 * q[0] * q[0] + 0.1 * q[0] * q[0] * q[0]; }));
    const auto st = gaussian_state(g, 0.5, 0.6, 0.0);
    const auto rep = classical_limit_check(st, H, {0.4, 0.2, 0.1}, {0.6, 0.0, 10});
    for (std::size_t k = 1; k < rep.rows.size(); ++k) CHECK(rep.rows[k].mean_q_divergence < rep.rows[k - 1].mean_q_divergence);
  }
}

TEST_CASE("report CSV and snapshots") {
  const Grid g = Grid::line(-6, 6, 64, Boundary::periodic);
  const auto run = evolve_schrodinger(gaussian_packet(g, 0, 1, 0, 1.0), Hamiltonian::free(1), 1.0, {1.0, 0.1, 3, 5});
  CHECK(run.report.steps == 10);
  CHECK(run.report.norm_drift.size() == 10);
  CHECK(run.report.times.size() == 5);  // 0, 3, 6, 9, 10
  CHECK(run.snapshots.size() == 3);     // 0, 5, 10
  std::ostringstream os;
  run.report.write_csv(os);
  const std::string text = os.str();
  CHECK(text.rfind("time,norm,energy,mean_q0,mean_p0\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}
