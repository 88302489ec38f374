#include "ontic/measurement.hpp"

#include "ontic/correlation.hpp"
#include "ontic/expectation.hpp"
#include "ontic/families.hpp"
#include "ontic/spectral.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ontic {

namespace {

constexpr double kPi = std::numbers::pi;

Complex inner(const ComplexField& a, const ComplexField& b) {
  return a.values().dot(b.values()) * a.grid().cell_volume();
}

void require_1d(const Grid& g, const char* what) {
  if (g.dims() != 1) throw std::invalid_argument(std::string(what) + " must live on a 1D grid");
}

}  // namespace

// Eigensystem ---------------------------------------------------------------

Eigensystem::Eigensystem(std::vector<double> eigenvalues, std::vector<ComplexField> fields, std::string label)
    : values_(std::move(eigenvalues)), fields_(std::move(fields)), label_(std::move(label)) {
  if (fields_.empty()) throw std::invalid_argument("eigensystem needs at least one eigenfield");
  if (fields_.size() != values_.size()) throw std::invalid_argument("eigensystem: one eigenvalue per eigenfield");
  for (const auto& f : fields_) require_same_grid(fields_.front(), f, "eigensystem");
  for (double o : values_)
    if (!std::isfinite(o)) throw std::invalid_argument("eigensystem: non-finite eigenvalue");
  const Eigen::MatrixXcd d = gram() - Eigen::MatrixXcd::Identity(static_cast<Eigen::Index>(size()),
                                                                 static_cast<Eigen::Index>(size()));
  const double err = d.cwiseAbs().maxCoeff();
  if (!(err <= kGramTolerance)) {
    std::ostringstream os;
    os << "eigensystem: eigenfields are not orthonormal (Gram error " << err << ")";
    throw std::invalid_argument(os.str());
  }
}

Eigen::MatrixXcd Eigensystem::gram() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXcd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      g(i, j) = inner(fields_[static_cast<std::size_t>(i)], fields_[static_cast<std::size_t>(j)]);
  return g;
}

ComplexField Eigensystem::superposition(const Eigen::VectorXcd& c) const {
  if (static_cast<std::size_t>(c.size()) != size()) throw std::invalid_argument("superposition: one coefficient per eigenfield");
  ComplexField out(grid());
  for (std::size_t k = 0; k < size(); ++k) out.values() += c[static_cast<Eigen::Index>(k)] * fields_[k].values();
  return out;
}

Eigensystem box_eigensystem(const Grid& g, const std::vector<int>& modes, double mass, double hbar) {
  std::vector<double> e;
  std::vector<ComplexField> f;
  const double L = g.axis(0).length();
  for (int n : modes) {
    if (n < 1) throw std::invalid_argument("box modes start at n = 1");
    f.push_back(box_mode(g, n));
    e.push_back(n * n * kPi * kPi * hbar * hbar / (2 * mass * L * L));
  }
  return Eigensystem(std::move(e), std::move(f), "box");
}

Eigensystem harmonic_eigensystem(const Grid& g, const std::vector<int>& modes, double mass, double omega,
                                 double hbar) {
  std::vector<double> e;
  std::vector<ComplexField> f;
  for (int n : modes) {
    f.push_back(harmonic_mode(g, n, mass, omega, hbar));
    e.push_back(hbar * omega * (n + 0.5));
  }
  return Eigensystem(std::move(e), std::move(f), "harmonic");
}

Eigensystem angular_eigensystem(const Grid& g, const std::vector<int>& ms, double width, double hbar) {
  std::vector<double> e;
  std::vector<ComplexField> f;
  for (int m : ms) {
    f.push_back(angular_harmonic(g, m, width));
    e.push_back(m * hbar);
  }
  return Eigensystem(std::move(e), std::move(f), "angular");
}

Eigensystem plane_wave_eigensystem(const Grid& g, const std::vector<int>& ks, double hbar) {
  std::vector<double> e;
  std::vector<ComplexField> f;
  const double L = g.axis(0).length();
  for (int k : ks) {
    f.push_back(plane_wave_mode(g, k));
    e.push_back(hbar * 2 * kPi * k / L);
  }
  return Eigensystem(std::move(e), std::move(f), "plane_wave");
}

// Setup ---------------------------------------------------------------------

MeasurementSetup::MeasurementSetup(Eigensystem sys, ComplexField ptr, double g, double T)
    : system(std::move(sys)), pointer(std::move(ptr)), coupling(g), duration(T) {
  require_1d(pointer.grid(), "pointer packet");
  if (!std::isfinite(coupling) || !std::isfinite(duration) || duration < 0.0)
    throw std::invalid_argument("measurement needs finite coupling and duration >= 0");
  const double n = integrate(pointer.grid(), pointer.values().cwiseAbs2());
  if (std::abs(n - 1.0) > kNormTolerance) throw std::invalid_argument("pointer packet is not normalised");
}

double MeasurementSetup::pointer_centre() const {
  const Grid& g = pointer.grid();
  double s = 0.0;
  for (std::size_t a = 0; a < g.size(); ++a) s += g.coord(a, 0) * std::norm(pointer[a]);
  return s * g.cell_volume();
}

double MeasurementSetup::pointer_sigma() const {
  const Grid& g = pointer.grid();
  const double c = pointer_centre();
  double s = 0.0;
  for (std::size_t a = 0; a < g.size(); ++a) s += std::pow(g.coord(a, 0) - c, 2) * std::norm(pointer[a]);
  return std::sqrt(s * g.cell_volume());
}

ComplexField gaussian_pointer(const std::vector<double>& eigenvalues, double coupling, double duration,
                              double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("pointer sigma must be positive");
  double lo = 0.0, hi = 0.0;
  for (double o : eigenvalues) {
    lo = std::min(lo, coupling * o * duration);
    hi = std::max(hi, coupling * o * duration);
  }
  lo -= 10 * sigma;
  hi += 10 * sigma;
  auto n = static_cast<std::size_t>(std::ceil((hi - lo) / (sigma / 8)));
  n += n % 2;
  const Grid g = Grid::line(lo, lo + static_cast<double>(n) * (sigma / 8), n, Boundary::periodic);
  return gaussian_packet(g, 0.0, sigma, 0.0, 1.0);
}

ComplexField default_pointer(const std::vector<double>& eigenvalues, double coupling, double duration) {
  std::vector<double> o = eigenvalues;
  std::sort(o.begin(), o.end());
  double gap = 0.0;
  for (std::size_t k = 1; k < o.size(); ++k) {
    const double d = o[k] - o[k - 1];
    if (d > 1e-12 * (1.0 + std::abs(o[k])) && (gap == 0.0 || d < gap)) gap = d;
  }
  const double spread = std::abs(coupling) * gap * duration;
  return gaussian_pointer(eigenvalues, coupling, duration, spread > 0.0 ? spread / 12.0 : 1.0);
}

Eigen::VectorXcd decompose(const ComplexField& psi, const Eigensystem& system) {
  require_same_grid(psi, system.field(0), "decompose");
  Eigen::VectorXcd c(static_cast<Eigen::Index>(system.size()));
  for (std::size_t k = 0; k < system.size(); ++k) c[static_cast<Eigen::Index>(k)] = inner(system.field(k), psi);
  const ComplexField r(psi.grid(), psi.values() - system.superposition(c).values());
  const double residual = std::sqrt(integrate(r.grid(), r.values().cwiseAbs2()));
  if (!(residual <= kSpanTolerance)) {
    std::ostringstream os;
    os << "state is not spanned by the eigenbasis (residual " << residual << ")";
    throw SpanError("measurement", "decompose", os.str());
  }
  return c;
}

// Joint state ----------------------------------------------------------------

JointState::JointState(MeasurementSetup setup, Eigen::VectorXcd coefficients)
    : setup_(std::move(setup)), c_(std::move(coefficients)) {
  const Eigensystem& sys = setup_.system;
  if (static_cast<std::size_t>(c_.size()) != sys.size()) throw std::invalid_argument("joint state: one coefficient per eigenfield");

  for (std::size_t k = 0; k < sys.size(); ++k) packets_.push_back(translated(setup_.pointer, 0, setup_.shift(k)));

  std::vector<std::size_t> order(sys.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sys.eigenvalue(a) < sys.eigenvalue(b); });
  for (std::size_t k : order) {
    const double o = sys.eigenvalue(k);
    if (outcomes_.empty() || std::abs(o - outcomes_.back()) > 1e-12 * (1.0 + std::abs(o))) {
      outcomes_.push_back(o);
      branches_.emplace_back();
    }
    branches_.back().push_back(k);
  }

  const Axis& ax = setup_.pointer.grid().axis(0);
  for (std::size_t j = 0; j < outcomes_.size(); ++j) {
    const auto [lo, hi] = support(j);
    if (lo < ax.lower || hi > ax.upper) {
      std::ostringstream os;
      os << "support of outcome " << outcomes_[j] << " [" << lo << ", " << hi << "] leaves the pointer grid";
      throw std::invalid_argument(os.str());
    }
  }

  const double h = ax.spacing();
  for (std::size_t j = 0; j < outcomes_.size(); ++j)
    for (std::size_t k = j + 1; k < outcomes_.size(); ++k) {
      const ComplexField& a = packets_[branches_[j].front()];
      const ComplexField& b = packets_[branches_[k].front()];
      const double ov = (a.values().cwiseAbs().array() * b.values().cwiseAbs().array()).sum() * h;
      overlap_ = std::max(overlap_, ov);
      if (ov > kOverlapTolerance) {
        std::ostringstream os;
        os << "pointer packets for outcomes " << outcomes_[j] << " and " << outcomes_[k] << " overlap (" << ov
           << " > " << kOverlapTolerance << "); outcomes cannot be registered";
        warnings_.push_back(os.str());
      }
    }
}

std::pair<double, double> JointState::support(std::size_t outcome) const {
  const double c = setup_.pointer_centre() + setup_.coupling * outcomes_.at(outcome) * setup_.duration;
  const double w = kSupportSigmas * setup_.pointer_sigma();
  return {c - w, c + w};
}

ComplexField JointState::joint() const {
  const Eigensystem& sys = setup_.system;
  const auto ns = static_cast<Eigen::Index>(sys.grid().size());
  const auto np = static_cast<Eigen::Index>(setup_.pointer.size());
  const auto K = static_cast<Eigen::Index>(sys.size());
  Eigen::MatrixXcd phi(ns, K), chi(np, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    phi.col(k) = sys.field(static_cast<std::size_t>(k)).values() * c_[k];
    chi.col(k) = packets_[static_cast<std::size_t>(k)].values();
  }
  using RowMajor = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor m = phi * chi.transpose();
  return ComplexField(product_grid(sys.grid(), setup_.pointer.grid()),
                      Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size()));
}

ScalarField JointState::pointer_marginal() const {
  const ComplexField psi = joint();
  const Grid& pg = setup_.pointer.grid();
  const std::size_t np = pg.size();
  const std::size_t ns = psi.size() / np;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
  for (std::size_t i = 0; i < ns; ++i)
    m += psi.values().segment(static_cast<Eigen::Index>(i * np), static_cast<Eigen::Index>(np)).cwiseAbs2();
  return ScalarField(pg, m * setup_.system.grid().cell_volume());
}

JointState evolve_measurement(const ComplexField& psi, const MeasurementSetup& setup) {
  const double n = integrate(psi.grid(), psi.values().cwiseAbs2());
  if (std::abs(n - 1.0) > kNormTolerance) throw std::invalid_argument("evolve_measurement: system state is not normalised");
  return JointState(setup, decompose(psi, setup.system));
}

// Born rule -------------------------------------------------------------------

double BornResult::max_discrepancy() const {
  double d = 0.0;
  for (std::size_t j = 0; j < quadrature.size(); ++j) d = std::max(d, std::abs(quadrature[j] - coefficient[j]));
  return d;
}

double BornResult::total() const {
  double s = 0.0;
  for (double p : quadrature) s += p;
  return s;
}

BornResult born_probabilities(const JointState& joint) {
  if (!joint.separated())
    throw OverlapError("measurement", "born_probabilities", joint.warnings().empty() ? "packets overlap" : joint.warnings().front());
  const ScalarField marginal = joint.pointer_marginal();
  const Grid& pg = marginal.grid();
  const double h = pg.cell_volume();
  const std::size_t J = joint.outcomes().size();

  BornResult r;
  r.outcomes = joint.outcomes();
  std::vector<std::vector<std::size_t>> inside(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto [lo, hi] = joint.support(j);
    double p = 0.0;
    for (std::size_t a = 0; a < pg.size(); ++a) {
      const double q = pg.coord(a, 0);
      if (q >= lo && q <= hi) {
        p += marginal[a];
        inside[j].push_back(a);
      }
    }
    r.quadrature.push_back(p * h);
    double c = 0.0;
    for (std::size_t k : joint.branches()[j]) c += std::norm(joint.coefficients()[static_cast<Eigen::Index>(k)]);
    r.coefficient.push_back(c);
  }

  // cross terms of the double sum restricted to each support
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t k = 0; k < J; ++k)
      for (std::size_t l = 0; l < J; ++l) {
        if (k == l) continue;
        const ComplexField& a = joint.packet(joint.branches()[k].front());
        const ComplexField& b = joint.packet(joint.branches()[l].front());
        Complex s = 0.0;
        for (std::size_t i : inside[j]) s += std::conj(a[i]) * b[i];
        r.cross_term_bound = std::max(r.cross_term_bound, std::sqrt(r.coefficient[k] * r.coefficient[l]) * std::abs(s) * h);
      }
  return r;
}

std::vector<std::size_t> sample_outcomes(const JointState& joint, std::size_t n, std::uint64_t seed) {
  const BornResult born = born_probabilities(joint);
  std::vector<double> cdf(born.quadrature.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < cdf.size(); ++j) cdf[j] = (acc += born.quadrature[j]);
  for (double& c : cdf) c /= acc;
  std::vector<std::size_t> out(n);
  partitioned(n, seed, std::uint64_t{5} << 40, [&](Rng& rng, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const double u = uniform01(rng);
      out[i] = std::min<std::size_t>(static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
                                     cdf.size() - 1);
    }
  });
  return out;
}

Outcome sample_outcome(const JointState& joint, std::uint64_t seed) {
  Outcome o;
  o.index = sample_outcomes(joint, 1, seed).front();
  o.eigenvalue = joint.outcomes()[o.index];
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(joint.coefficients().size());
  for (std::size_t k : joint.branches()[o.index]) c[static_cast<Eigen::Index>(k)] = joint.coefficients()[static_cast<Eigen::Index>(k)];
  o.state = normalized(joint.setup().system.superposition(c));
  return o;
}

// Joint-grid oracle -------------------------------------------------------------

ComplexField evolve_joint_grid(const ComplexField& psi, const ComplexField& pointer, double coupling,
                               double duration, double hbar, double dt) {
  require_1d(psi.grid(), "system state");
  require_1d(pointer.grid(), "pointer packet");
  if (psi.grid().axis(0).boundary != Boundary::periodic || pointer.grid().axis(0).boundary != Boundary::periodic)
    throw std::invalid_argument("evolve_joint_grid needs periodic axes");
  if (!(hbar > 0.0) || !(duration >= 0.0)) throw std::invalid_argument("evolve_joint_grid needs hbar > 0 and T >= 0");
  ComplexField f = product_state(psi, pointer);
  if (duration == 0.0 || coupling == 0.0) return f;
  if (dt <= 0.0) dt = 0.2 * psi.grid().spacing(0) * pointer.grid().spacing(0) / (std::abs(coupling) * hbar);
  const auto steps = static_cast<std::size_t>(std::ceil(duration / dt - 1e-9));
  const double tau = duration / static_cast<double>(steps);
  const Complex a(0.0, hbar * coupling);
  // d psi / dt = i hbar g d_S d_P psi
  auto rate = [&](const ComplexField& u) {
    ComplexField r = mixed_derivative(u, 0, 1);
    r.values() *= a;
    return r;
  };
  const Grid& g = f.grid();
  for (std::size_t s = 0; s < steps; ++s) {
    const ComplexField k1 = rate(f);
    const ComplexField k2 = rate(ComplexField(g, f.values() + 0.5 * tau * k1.values()));
    const ComplexField k3 = rate(ComplexField(g, f.values() + 0.5 * tau * k2.values()));
    const ComplexField k4 = rate(ComplexField(g, f.values() + tau * k3.values()));
    f.values() += tau / 6.0 * (k1.values() + 2.0 * k2.values() + 2.0 * k3.values() + k4.values());
  }
  return f;
}

// Angular momentum ----------------------------------------------------------------

AngularRun angular_momentum_scenario(const AngularScenario& sc) {
  if (sc.m.empty() || sc.m.size() != sc.weights.size())
    throw std::invalid_argument("angular scenario needs one weight per m");
  if (!(sc.hbar > 0.0) || !(sc.width > 0.0)) throw std::invalid_argument("angular scenario needs hbar > 0 and width > 0");
  const Grid sg = sc.system_axes.empty()
                      ? Grid({Axis{-6 * sc.width, 6 * sc.width, 64}, Axis{-6 * sc.width, 6 * sc.width, 64}})
                      : Grid(sc.system_axes);
  if (sg.dims() != 2) throw std::invalid_argument("angular scenario needs a 2D system grid");

  const Eigensystem sys = angular_eigensystem(sg, sc.m, sc.width, sc.hbar);
  Eigen::VectorXcd w(static_cast<Eigen::Index>(sc.m.size()));
  for (std::size_t k = 0; k < sc.m.size(); ++k) w[static_cast<Eigen::Index>(k)] = sc.weights[k];
  if (!(w.norm() > 0.0)) throw std::invalid_argument("angular scenario weights are all zero");
  w /= w.norm();
  const ComplexField psi = sys.superposition(w);
  ComplexField pointer = sc.pointer.size() == 0 ? default_pointer(sys.eigenvalues(), sc.coupling, sc.duration) : sc.pointer;

  const MeasurementSetup setup(sys, pointer, sc.coupling, sc.duration);
  AngularRun run{evolve_measurement(psi, setup), {}, {}};
  AngularReport& rep = run.report;
  const JointState& joint = run.joint;
  if (joint.separated()) run.born = born_probabilities(joint);

  const double unit = sc.coupling * sc.hbar * sc.duration;
  const double c0 = setup.pointer_centre();
  const ScalarField marginal = joint.pointer_marginal();
  const Grid& pg = marginal.grid();
  rep.discrete = joint.separated();
  for (std::size_t j = 0; j < joint.outcomes().size(); ++j) {
    const double expected = c0 + sc.coupling * joint.outcomes()[j] * sc.duration;
    const auto [lo, hi] = joint.support(j);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t a = 0; a < pg.size(); ++a) {
      const double q = pg.coord(a, 0);
      if (q < lo || q > hi) continue;
      m0 += marginal[a];
      m1 += q * marginal[a];
    }
    const double centre = m0 > 0.0 ? m1 / m0 : expected;
    rep.expected_centres.push_back(expected);
    rep.packet_centres.push_back(centre);
    const double err = std::abs(centre - expected) / (unit != 0.0 ? std::abs(unit) : 1.0);
    rep.centre_error = std::max(rep.centre_error, err);
    if (unit != 0.0) {
      const double ratio = (centre - c0) / unit;
      if (std::abs(ratio - std::round(ratio)) > 1e-3) rep.discrete = false;
    }
  }

  // L_z diagnostics on a finer copy of the system grid, Richardson-extrapolated
  const QuadraticObservable lz = angular_momentum_observable(2);
  Grid fine = sg;
  while (fine.axis(0).points < 256 || fine.axis(1).points < 256) fine = fine.refined(2);
  auto lz_of = [&](const std::vector<int>& ms, const Eigen::VectorXcd& c) {
    return extrapolated(fine, [&](const Grid& g) {
      ComplexField f(g);
      for (std::size_t k = 0; k < ms.size(); ++k)
        f.values() += c[static_cast<Eigen::Index>(k)] * angular_harmonic(g, ms[k], sc.width).values();
      return quantum_expectation(lz, f, sc.hbar).real() / sc.hbar;
    });
  };
  for (int m : sc.m) rep.lz_eigenvalues.push_back(lz_of({m}, Eigen::VectorXcd::Ones(1)));
  rep.ensemble_lz = lz_of(sc.m, w);
  rep.schmidt_rank_initial = schmidt_rank(product_state(psi, pointer), 1e-6, 2);
  rep.schmidt_rank_final = schmidt_rank(joint.joint(), 1e-6, 2);
  return run;
}

// Classical counterfactual ---------------------------------------------------------

namespace {

using Phase6 = Eigen::Matrix<double, 6, 1>;

// H = g (x p_y - y p_x) p_P; state (x, y, q, p_x, p_y, p_q)
Phase6 interaction_rhs(const Phase6& s, double g) {
  const double L = s[0] * s[4] - s[1] * s[3];
  Phase6 d;
  d << -g * s[1] * s[5], g * s[0] * s[5], g * L, -g * s[4] * s[5], g * s[3] * s[5], 0.0;
  return d;
}

}  // namespace

EpistemicState classical_counterfactual_hj(const ComplexField& psi, double coupling, double duration, double hbar,
                                           std::size_t steps) {
  const Grid& g = psi.grid();
  if (g.dims() != 3) throw std::invalid_argument("classical_counterfactual_hj needs a 3D grid (x, y, pointer)");
  if (steps == 0) throw std::invalid_argument("classical_counterfactual_hj needs at least one step");
  const std::size_t n = g.size();
  const double dv = g.cell_volume();
  const Eigen::VectorXd rho0 = psi.values().cwiseAbs2();
  const double total = rho0.sum() * dv;
  if (!(total > 0.0)) throw NonNormalizable("measurement", "classical_counterfactual_hj", "zero density");
  const ScalarField s0 = from_wavefunction(psi, hbar).phase();
  std::vector<ScalarField> p0;
  for (std::size_t a = 0; a < 3; ++a) p0.push_back(current_phase_gradient(psi, a, hbar));

  std::vector<Phase6> end(n);
  std::vector<double> action(n);
  const double tau = duration / static_cast<double>(steps);
  parallel_for((n + 255) / 256, [&](std::size_t chunk) {
    for (std::size_t k = chunk * 256; k < std::min(n, chunk * 256 + 256); ++k) {
      Phase6 s;
      s << g.coord(k, 0), g.coord(k, 1), g.coord(k, 2), p0[0][k], p0[1][k], p0[2][k];
      double S = s0[k];
      for (std::size_t i = 0; i < steps; ++i) {
        // dS/dt = p . dq/dt - H = g L p_q along the flow
        auto lag = [&](const Phase6& u) { return coupling * (u[0] * u[4] - u[1] * u[3]) * u[5]; };
        const Phase6 k1 = interaction_rhs(s, coupling);
        const Phase6 k2 = interaction_rhs(s + 0.5 * tau * k1, coupling);
        const Phase6 k3 = interaction_rhs(s + 0.5 * tau * k2, coupling);
        const Phase6 k4 = interaction_rhs(s + tau * k3, coupling);
        S += tau / 6.0 * (lag(s) + 2 * lag(s + 0.5 * tau * k1) + 2 * lag(s + 0.5 * tau * k2) + lag(s + tau * k3));
        s += tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      end[k] = s;
      action[k] = S;
    }
  });

  // neighbouring characteristics must keep their orientation
  const double eps = kNodeFraction * rho0.maxCoeff();
  for (std::size_t k = 0; k < n; ++k) {
    if (rho0[static_cast<Eigen::Index>(k)] <= eps) continue;
    Eigen::Matrix3d J;
    bool ok = true;
    for (std::size_t a = 0; a < 3 && ok; ++a) {
      if (g.index(k, a) + 1 >= g.axis(a).points) {
        ok = false;
        break;
      }
      const std::size_t nb = k + g.stride(a);
      if (rho0[static_cast<Eigen::Index>(nb)] <= eps) ok = false;
      for (std::size_t b = 0; b < 3; ++b) J(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = end[nb][b] - end[k][b];
    }
    if (ok && !(J.determinant() > 0.0)) {
      std::ostringstream os;
      os << "characteristics cross near " << g.point(k).transpose();
      throw CausticError("measurement", "classical_counterfactual_hj", os.str());
    }
  }

  // cloud-in-cell deposition of mass and an unweighted average of the action
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd ws = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const double mk = rho0[static_cast<Eigen::Index>(k)] * dv;
    std::array<std::size_t, 3> lo{};
    std::array<double, 3> frac{};
    std::array<bool, 3> clamp{};
    for (std::size_t a = 0; a < 3; ++a) {
      const Axis& ax = g.axis(a);
      double x = end[k][static_cast<Eigen::Index>(a)];
      if (ax.boundary == Boundary::periodic) {
        x = ax.lower + std::fmod(std::fmod(x - ax.lower, ax.length()) + ax.length(), ax.length());
      } else if ((x < ax.lower || x > ax.upper) && mk > 1e-14 * total) {
        throw std::out_of_range("classical_counterfactual_hj: mass leaves the grid along axis " + std::to_string(a));
      }
      const double u = (x - ax.lower) / ax.spacing() - 0.5;
      const double f = std::floor(u);
      frac[a] = u - f;
      const auto np = static_cast<long>(ax.points);
      long i0 = static_cast<long>(f);
      clamp[a] = false;
      if (ax.boundary == Boundary::periodic) {
        i0 = ((i0 % np) + np) % np;
      } else if (i0 < 0 || i0 + 1 >= np) {
        i0 = std::clamp<long>(i0 < 0 ? 0 : np - 1, 0, np - 1);
        clamp[a] = true;
        frac[a] = 0.0;
      }
      lo[a] = static_cast<std::size_t>(i0);
    }
    for (int corner = 0; corner < 8; ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        const bool up = (corner >> a) & 1;
        if (up && clamp[a]) {
          w = 0.0;
          break;
        }
        w *= up ? frac[a] : 1.0 - frac[a];
        idx += ((lo[a] + (up ? 1 : 0)) % g.axis(a).points) * g.stride(a);
      }
      if (w == 0.0) continue;
      mass[static_cast<Eigen::Index>(idx)] += w * mk;
      sw[static_cast<Eigen::Index>(idx)] += w;
      ws[static_cast<Eigen::Index>(idx)] += w * action[k];
    }
  }
  ScalarField rho(g, mass / dv);
  ScalarField S(g);
  for (std::size_t k = 0; k < n; ++k) S[k] = sw[static_cast<Eigen::Index>(k)] > 0.0 ? ws[static_cast<Eigen::Index>(k)] / sw[static_cast<Eigen::Index>(k)] : 0.0;
  return EpistemicState::normalized(std::move(rho), std::move(S), StateKind::classical);
}

double interaction_quantum_term(const ComplexField& psi, double coupling, double hbar) {
  const Grid& g = psi.grid();
  if (g.dims() != 3) throw std::invalid_argument("interaction_quantum_term needs a 3D grid (x, y, pointer)");
  const ScalarField rho(g, psi.values().cwiseAbs2());
  const ScalarField dx = gradient(rho, 0), dy = gradient(rho, 1), dp = gradient(rho, 2);
  const double eps = kNodeFraction * rho.values().maxCoeff();
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (rho[k] <= eps) continue;
    const double t = 0.25 * hbar * hbar * coupling * (g.coord(k, 0) * dy[k] - g.coord(k, 1) * dx[k]) * dp[k] /
                     (rho[k] * rho[k]);
    num += t * t * rho[k];
    den += rho[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

std::size_t count_modes(const ScalarField& density, double prominence) {
  require_1d(density.grid(), "count_modes density");
  const Eigen::VectorXd& v = density.values();
  const auto n = v.size();
  const double top = v.maxCoeff();
  if (!(top > 0.0)) return 0;
  std::size_t modes = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool left = i == 0 || v[i] > v[i - 1];
    const bool right = i == n - 1 || v[i] >= v[i + 1];
    if (!left || !right) continue;
    double lmin = v[i], rmin = v[i];
    for (Eigen::Index j = i - 1; j >= 0 && v[j] <= v[i]; --j) lmin = std::min(lmin, v[j]);
    for (Eigen::Index j = i + 1; j < n && v[j] <= v[i]; ++j) rmin = std::min(rmin, v[j]);
    // at the edge the missing side does not limit the peak
    if (i == 0) lmin = rmin;
    if (i == n - 1) rmin = lmin;
    if (v[i] - std::max(lmin, rmin) >= prominence * top) ++modes;
  }
  return modes;
}

ScalarField last_axis_marginal(const ScalarField& density) {
  const Grid& g = density.grid();
  const std::size_t last = g.dims() - 1;
  const Grid out({g.axis(last)});
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out.size()));
  for (std::size_t k = 0; k < g.size(); ++k) m[static_cast<Eigen::Index>(g.index(k, last))] += density[k];
  return ScalarField(out, m * (g.cell_volume() / g.spacing(last)));
}

}  // namespace ontic
