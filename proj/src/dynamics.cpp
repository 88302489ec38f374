#include "ontic/dynamics.hpp"

#include "ontic/expectation.hpp"
#include "ontic/spectral.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ontic {
namespace {

using Eigen::Index;

Index ix(std::size_t k) { return static_cast<Index>(k); }

void require_dims(const Grid& g, const Hamiltonian& H, const char* what) {
  if (g.dims() != H.dims()) throw std::invalid_argument(std::string(what) + ": Hamiltonian and grid dimensions differ");
}

std::size_t step_count(const StepControl& c, double dt) {
  if (!(c.T > 0.0)) throw std::invalid_argument("evolution needs T > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("evolution needs dt > 0");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c.T / dt - 1e-9)));
}

bool due(std::size_t step, std::size_t stride, std::size_t steps) {
  return step == steps || (stride > 0 && step % stride == 0);
}

double min_spacing(const Grid& g) {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < g.dims(); ++a) h = std::min(h, g.spacing(a));
  return h;
}

/// Position used to evaluate coefficients: wrapped on periodic axes,
/// clamped onto the domain on vanishing ones.
Point fold(const Grid& g, Point q) {
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const Axis& ax = g.axis(a);
    double& x = q[ix(a)];
    if (ax.boundary == Boundary::periodic)
      x = ax.lower + std::fmod(std::fmod(x - ax.lower, ax.length()) + ax.length(), ax.length());
    else
      x = std::clamp(x, ax.lower, ax.upper);
  }
  return q;
}

// Complex tridiagonal solve, row i: a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = r[i].
void thomas(const std::vector<Complex>& a, std::vector<Complex> b, const std::vector<Complex>& c,
            std::vector<Complex>& r) {
  const std::size_t n = b.size();
  for (std::size_t i = 1; i < n; ++i) {
    const Complex w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    r[i] -= w * r[i - 1];
  }
  r[n - 1] /= b[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) r[i] = (r[i] - c[i] * r[i + 1]) / b[i];
}

// Wavenumbers for even powers: the Nyquist mode keeps its magnitude.
std::vector<double> kinetic_wavenumbers(const Axis& ax) {
  const std::size_t n = ax.points;
  std::vector<double> k(n);
  const double dk = 2.0 * std::numbers::pi / ax.length();
  for (std::size_t i = 0; i < n; ++i)
    k[i] = (i < (n + 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n)) * dk;
  return k;
}

void multiply_along(ComplexField& f, std::size_t axis, const std::vector<Complex>& factor) {
  fft_along(f, axis, false);
  const Grid& g = f.grid();
  for (std::size_t k = 0; k < g.size(); ++k) f[k] *= factor[g.index(k, axis)];
  fft_along(f, axis, true);
}

/// The discretised Hamiltonian, split per axis.
class SchrodingerOperator {
 public:
  SchrodingerOperator(const Grid& g, const Hamiltonian& H, double hbar) : g_(g), H_(H), hbar_(hbar) {
    V_ = H.potential.on(g);
    full_cn_ = g.dims() == 1 && g.axis(0).boundary == Boundary::vanishing;
    theta_.resize(g.dims());
    gauge_.assign(g.dims(), 0.0);
    for (std::size_t a = 0; a < g.dims(); ++a) {
      const Axis& ax = g.axis(a);
      const Coefficient& A = H.gauge[a];
      if (ax.boundary == Boundary::periodic) {
        if (!A.is_constant())
          throw std::invalid_argument("evolve_schrodinger: gauge must be constant along periodic axes");
        gauge_[a] = A.constant();
      } else if (!A.is_zero()) {
        // Peierls phase of the link from k to k + stride, stored at k
        theta_[a].assign(g.size(), 0.0);
        const double h = ax.spacing();
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (g.index(k, a) + 1 == ax.points) continue;
          Point mid = g.point(k);
          mid[ix(a)] += 0.5 * h;
          theta_[a][k] = A.at(mid) * h / hbar;
        }
      }
    }
  }

  bool full_cn() const { return full_cn_; }
  const ScalarField& potential() const { return V_; }

  double hop(std::size_t a) const {
    const double h = g_.spacing(a);
    return hbar_ * hbar_ / (2.0 * H_.masses[a] * h * h);
  }

  Complex upper(std::size_t a, std::size_t k) const {
    const double t = hop(a);
    return theta_[a].empty() ? Complex(-t, 0.0) : -t * std::polar(1.0, -theta_[a][k]);
  }

  /// Spectral factor for the periodic kinetic part, fn(energy) per mode.
  template <typename Fn>
  std::vector<Complex> spectral(std::size_t a, Fn&& fn) const {
    const auto k = kinetic_wavenumbers(g_.axis(a));
    std::vector<Complex> out(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
      const double u = hbar_ * k[i] - gauge_[a];
      out[i] = fn(u * u / (2.0 * H_.masses[a]));
    }
    return out;
  }

  /// One Crank-Nicolson step of length tau for the axis-a kinetic part
  /// (plus V when the grid is a single vanishing axis).
  void crank_nicolson(ComplexField& psi, std::size_t a, double tau) const {
    const std::size_t n = g_.axis(a).points;
    const std::size_t s = g_.stride(a);
    const Complex ia(0.0, tau / (2.0 * hbar_));
    const double t = hop(a);
    std::vector<Complex> lo(n), di(n), up(n), r(n);
    detail::for_each_line(g_, a, [&](std::size_t base) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = base + i * s;
        const Complex d = 2.0 * t + (full_cn_ ? V_[k] : 0.0);
        const Complex u = i + 1 < n ? upper(a, k) : Complex(0.0);
        const Complex l = i > 0 ? std::conj(upper(a, k - s)) : Complex(0.0);
        Complex hpsi = d * psi[k];
        if (i + 1 < n) hpsi += u * psi[k + s];
        if (i > 0) hpsi += l * psi[k - s];
        r[i] = psi[k] - ia * hpsi;
        di[i] = 1.0 + ia * d;
        up[i] = ia * u;
        lo[i] = ia * l;
      }
      thomas(lo, di, up, r);
      for (std::size_t i = 0; i < n; ++i) psi[base + i * s] = r[i];
    });
  }

  /// H_a psi for the axis-a kinetic part.
  ComplexField apply_kinetic(const ComplexField& psi, std::size_t a) const {
    ComplexField out = psi;
    if (g_.axis(a).boundary == Boundary::periodic) {
      multiply_along(out, a, spectral(a, [](double e) { return Complex(e, 0.0); }));
      return out;
    }
    const std::size_t n = g_.axis(a).points;
    const std::size_t s = g_.stride(a);
    const double t = hop(a);
    detail::for_each_line(g_, a, [&](std::size_t base) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = base + i * s;
        Complex v = 2.0 * t * psi[k];
        if (i + 1 < n) v += upper(a, k) * psi[k + s];
        if (i > 0) v += std::conj(upper(a, k - s)) * psi[k - s];
        out[k] = v;
      }
    });
    return out;
  }

  double energy(const ComplexField& psi) const {
    double e = integrate(g_, (V_.values().array() * psi.values().array().abs2()).matrix());
    for (std::size_t a = 0; a < g_.dims(); ++a) {
      const ComplexField hp = apply_kinetic(psi, a);
      e += integrate(g_, (psi.values().array().conjugate() * hp.values().array()).matrix()).real();
    }
    return e;
  }

  Point mean_p(const ComplexField& psi) const {
    Point out(g_.dims());
    for (std::size_t a = 0; a < g_.dims(); ++a) {
      ComplexField d = psi;
      if (g_.axis(a).boundary == Boundary::periodic)
        apply_along(d, a, [&](double k) { return Complex(hbar_ * k, 0.0); });
      else {
        d = gradient(psi, a);
        d.values() *= Complex(0.0, -hbar_);
      }
      out[ix(a)] = integrate(g_, (psi.values().array().conjugate() * d.values().array()).matrix()).real();
    }
    return out;
  }

 private:
  const Grid& g_;
  const Hamiltonian& H_;
  double hbar_;
  ScalarField V_;
  bool full_cn_ = false;
  std::vector<std::vector<double>> theta_;
  std::vector<double> gauge_;
};

Point mean_position(const Grid& g, const Eigen::VectorXd& rho) {
  const double n = integrate(g, rho);
  Point out(g.dims());
  for (std::size_t a = 0; a < g.dims(); ++a) {
    double s = 0.0;
    Eigen::VectorXd w(rho.size());
    for (std::size_t k = 0; k < g.size(); ++k) w[ix(k)] = rho[ix(k)] * g.coord(k, a);
    s = integrate(g, w);
    out[ix(a)] = s / n;
  }
  return out;
}

double norm_of(const ComplexField& psi) { return integrate(psi.grid(), psi.values().cwiseAbs2()); }

// dS/dq_a and d2S/dq_a^2 with S continued across periodic seams.
ScalarField phase_first(const ScalarField& S, std::size_t a, double jump) {
  ScalarField d = gradient(S, a);
  const Grid& g = S.grid();
  if (jump != 0.0 && g.axis(a).boundary == Boundary::periodic) {
    const std::size_t n = g.axis(a).points;
    const double c = jump / (2.0 * g.spacing(a));
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t i = g.index(k, a);
      if (i == 0 || i + 1 == n) d[k] += c;
    }
  }
  return d;
}

ScalarField phase_second(const ScalarField& S, std::size_t a, double jump) {
  ScalarField d = second_derivative(S, a);
  const Grid& g = S.grid();
  if (jump != 0.0 && g.axis(a).boundary == Boundary::periodic) {
    const std::size_t n = g.axis(a).points;
    const double c = jump / (g.spacing(a) * g.spacing(a));
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t i = g.index(k, a);
      if (i == 0) d[k] -= c;
      if (i + 1 == n) d[k] += c;
    }
  }
  return d;
}

/// The Madelung system on a fixed grid.
class MadelungSystem {
 public:
  MadelungSystem(const Grid& g, const Hamiltonian& H, double hbar, std::vector<double> jumps)
      : g_(g), H_(H), hbar_(hbar), jumps_(std::move(jumps)) {
    V_ = H.potential.on(g);
    for (std::size_t a = 0; a < g.dims(); ++a) {
      A_.push_back(H.gauge[a].on(g));
      divA_.push_back(gradient(A_.back(), a));
    }
  }

  /// Rates and the largest signal speed over dq.
  MadelungRates rates(const Eigen::VectorXd& l, const Eigen::VectorXd& s, double* speed = nullptr) const {
    MadelungRates r{Eigen::VectorXd::Zero(l.size()), -V_.values()};
    const ScalarField L(g_, l), S(g_, s);
    double fastest = 0.0;
    for (std::size_t a = 0; a < g_.dims(); ++a) {
      const double m = H_.masses[a];
      const Eigen::ArrayXd ds = phase_first(S, a, jumps_[a]).values().array();
      const Eigen::ArrayXd dds = phase_second(S, a, jumps_[a]).values().array();
      const Eigen::ArrayXd dl = gradient(L, a).values().array();
      const Eigen::ArrayXd ddl = second_derivative(L, a).values().array();
      const Eigen::ArrayXd v = (ds - A_[a].values().array()) / m;
      r.log_density.array() -= (dds - divA_[a].values().array()) / m + v * dl;
      r.phase.array() += -0.5 * m * v * v + hbar_ * hbar_ / (2.0 * m) * (0.5 * ddl + 0.25 * dl * dl);
      if (speed) {
        const double floor = l.maxCoeff() + std::log(kNodeFraction);
        const Eigen::ArrayXd c = (v.abs() + hbar_ * dl.abs() / (2.0 * m)) / g_.spacing(a);
        for (Index k = 0; k < c.size(); ++k)
          if (l[k] > floor) fastest = std::max(fastest, c[k]);
      }
    }
    if (speed) *speed = fastest;
    return r;
  }

  /// Throws NodeError for non-finite values or for a local minimum of rho
  /// below the node threshold with mass on both sides of it along a line.
  /// The far tails are exempt: there rho is below the threshold all the
  /// way to the wall.
  void check_nodes(const Eigen::VectorXd& l, const Eigen::VectorXd& s, double t) const {
    if (!l.allFinite() || !s.allFinite())
      throw NodeError("dynamics", "evolve_madelung", "non-finite density or phase at t = " + std::to_string(t));
    const double floor = l.maxCoeff() + std::log(kNodeFraction);
    for (std::size_t a = 0; a < g_.dims(); ++a) {
      const std::size_t n = g_.axis(a).points, st = g_.stride(a);
      detail::for_each_line(g_, a, [&](std::size_t base) {
        auto at = [&](std::size_t i) { return l[ix(base + i * st)]; };
        std::size_t first = n, last = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (at(i) > floor) {
            first = std::min(first, i);
            last = i;
          }
        if (first >= last) return;
        for (std::size_t i = first + 1; i < last; ++i) {
          const double v = at(i);
          if (v > floor) continue;
          if (at(i - 1) >= v && at(i + 1) >= v)
            throw NodeError("dynamics", "evolve_madelung", "a node formed at t = " + std::to_string(t));
        }
      });
    }
  }

  /// Below the node threshold the state carries no weight, but round-off
  /// there grows like max(rho) / rho. Along every axis, points beyond the
  /// last resolved one are refilled by quadratic continuation of log rho
  /// (curvature and outward slope clipped at 0) and of S.
  void continue_tails(Eigen::VectorXd& l, Eigen::VectorXd& s) const {
    const double floor = l.maxCoeff() + std::log(kNodeFraction);
    for (std::size_t a = 0; a < g_.dims(); ++a) {
      const std::size_t n = g_.axis(a).points, st = g_.stride(a);
      detail::for_each_line(g_, a, [&](std::size_t base) {
        auto at = [&](std::size_t i) { return ix(base + i * st); };
        std::size_t first = n, last = 0;
        for (std::size_t i = 0; i < n; ++i)
          if (l[at(i)] > floor) {
            first = std::min(first, i);
            last = i;
          }
        if (first == n || last < first + 2) return;
        auto fill = [&](std::size_t e, int dir, std::size_t count) {
          // e is the edge of the resolved run, dir points outward
          const Index p0 = at(e), p1 = at(e - dir), p2 = at(e - 2 * dir);
          const double lc = std::min(0.0, l[p0] - 2.0 * l[p1] + l[p2]);
          const double ls = std::min(0.0, l[p0] - l[p1] + 0.5 * lc);
          const double sc = s[p0] - 2.0 * s[p1] + s[p2];
          const double ss = s[p0] - s[p1] + 0.5 * sc;
          for (std::size_t j = 1; j <= count; ++j) {
            const double x = static_cast<double>(j);
            const Index k = at(e + static_cast<std::size_t>(dir * static_cast<long>(j)));
            l[k] = l[p0] + ls * x + 0.5 * lc * x * x;
            s[k] = s[p0] + ss * x + 0.5 * sc * x * x;
          }
        };
        if (last + 1 < n) fill(last, 1, n - 1 - last);
        if (first > 0) fill(first, -1, first);
      });
    }
  }

  EpistemicState state(const Eigen::VectorXd& l, const Eigen::VectorXd& s, StateKind kind) const {
    const Eigen::VectorXd rho = (l.array() - l.maxCoeff()).exp().matrix();
    return EpistemicState::normalized(ScalarField(g_, rho), ScalarField(g_, s), kind, jumps_);
  }

 private:
  const Grid& g_;
  const Hamiltonian& H_;
  double hbar_;
  std::vector<double> jumps_;
  ScalarField V_;
  std::vector<ScalarField> A_, divA_;
};

Point mean_momentum(const EpistemicState& st) {
  const Grid& g = st.grid();
  Point out(g.dims());
  for (std::size_t a = 0; a < g.dims(); ++a)
    out[ix(a)] = integrate(g, (st.density().values().array() * phase_gradient(st, a).values().array()).matrix());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Hamiltonian::Hamiltonian(std::vector<double> m, Coefficient v)
    : masses(std::move(m)), gauge(masses.size(), Coefficient(0.0)), potential(std::move(v)) {
  if (masses.empty()) throw std::invalid_argument("Hamiltonian needs at least one mass");
  for (double x : masses)
    if (!(x > 0.0)) throw std::invalid_argument("Hamiltonian masses must be positive");
}

Hamiltonian Hamiltonian::free(std::size_t dims, double mass) { return Hamiltonian(std::vector<double>(dims, mass)); }

Hamiltonian Hamiltonian::harmonic(std::size_t dims, double mass, double omega) {
  const double k = mass * omega * omega;
  return Hamiltonian(std::vector<double>(dims, mass), Coefficient([k](const Point& q) { return 0.5 * k * q.squaredNorm(); }));
}

Hamiltonian& Hamiltonian::set_gauge(std::size_t axis, Coefficient a) {
  gauge.at(axis) = std::move(a);
  return *this;
}

bool Hamiltonian::has_gauge() const {
  return std::any_of(gauge.begin(), gauge.end(), [](const Coefficient& c) { return !c.is_zero(); });
}

QuadraticObservable Hamiltonian::observable() const {
  QuadraticObservable o(dims(), "H");
  for (std::size_t a = 0; a < dims(); ++a) {
    o.set_metric(a, a, 1.0 / masses[a]);
    o.set_gauge(a, gauge[a]);
  }
  o.set_potential(potential);
  return o;
}

double Hamiltonian::operator()(const Point& q, const Point& p) const {
  double e = potential.at(q);
  for (std::size_t a = 0; a < dims(); ++a) {
    const double u = p[ix(a)] - gauge[a].at(q);
    e += 0.5 * u * u / masses[a];
  }
  return e;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::schrodinger: return "schrodinger";
    case Method::madelung: return "madelung";
    case Method::classical_hj: return "classical_hj";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  if (s == "schrodinger") return Method::schrodinger;
  if (s == "madelung") return Method::madelung;
  if (s == "classical_hj") return Method::classical_hj;
  throw std::invalid_argument("unknown evolution method '" + std::string(s) + "'");
}

double EvolutionReport::max_norm_drift() const {
  return norm_drift.empty() ? 0.0 : *std::max_element(norm_drift.begin(), norm_drift.end());
}

double EvolutionReport::energy_defect() const {
  if (energy.empty()) return 0.0;
  double d = 0.0;
  for (double e : energy) d = std::max(d, std::abs(e - energy.front()));
  return energy.front() != 0.0 ? d / std::abs(energy.front()) : d;
}

void EvolutionReport::write_csv(std::ostream& os) const {
  const std::size_t d = mean_q.empty() ? 0 : static_cast<std::size_t>(mean_q.front().size());
  os << "time,norm,energy";
  for (std::size_t a = 0; a < d; ++a) os << ",mean_q" << a;
  for (std::size_t a = 0; a < d; ++a) os << ",mean_p" << a;
  os << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < times.size(); ++r) {
    os << times[r] << ',' << norm[r] << ',' << energy[r];
    for (std::size_t a = 0; a < d; ++a) os << ',' << mean_q[r][ix(a)];
    for (std::size_t a = 0; a < d; ++a) os << ',' << mean_p[r][ix(a)];
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

double default_schrodinger_step(const Grid& g, const Hamiltonian& H, double hbar) {
  const double h = min_spacing(g);
  const double m = *std::min_element(H.masses.begin(), H.masses.end());
  double dt = 0.1 * m * h * h / hbar;
  const ScalarField V = H.potential.on(g);
  const double range = V.values().maxCoeff() - V.values().minCoeff();
  if (range > 0.0) dt = std::min(dt, 0.1 * hbar / range);
  return dt;
}

double schrodinger_energy(const ComplexField& psi, const Hamiltonian& H, double hbar) {
  require_dims(psi.grid(), H, "schrodinger_energy");
  return SchrodingerOperator(psi.grid(), H, hbar).energy(psi);
}

Run<ComplexField> evolve_schrodinger(const ComplexField& psi0, const Hamiltonian& H, double hbar,
                                     const StepControl& control) {
  const Grid& g = psi0.grid();
  require_dims(g, H, "evolve_schrodinger");
  if (!(hbar > 0.0)) throw std::invalid_argument("evolve_schrodinger needs hbar > 0");
  if (std::abs(norm_of(psi0) - 1.0) > kNormTolerance)
    throw std::invalid_argument("evolve_schrodinger needs a normalised wave function");

  const double dt0 = control.dt > 0.0 ? control.dt : default_schrodinger_step(g, H, hbar);
  const std::size_t steps = step_count(control, dt0);
  const double dt = control.T / static_cast<double>(steps);
  const SchrodingerOperator op(g, H, hbar);
  const std::size_t d = g.dims();

  // per-step factors
  const Eigen::ArrayXcd half_v = (op.potential().values().array() * Complex(0.0, -0.5 * dt / hbar)).exp();
  std::vector<std::vector<Complex>> full(d), half(d);
  for (std::size_t a = 0; a < d; ++a)
    if (g.axis(a).boundary == Boundary::periodic) {
      full[a] = op.spectral(a, [&](double e) { return std::polar(1.0, -e * dt / hbar); });
      half[a] = op.spectral(a, [&](double e) { return std::polar(1.0, -0.5 * e * dt / hbar); });
    }
  auto kinetic = [&](ComplexField& psi, std::size_t a, bool whole) {
    if (g.axis(a).boundary == Boundary::periodic)
      multiply_along(psi, a, whole ? full[a] : half[a]);
    else
      op.crank_nicolson(psi, a, whole ? dt : 0.5 * dt);
  };

  Run<ComplexField> run{psi0, {}, {}};
  EvolutionReport& rep = run.report;
  rep.method = Method::schrodinger;
  rep.dt = dt;
  rep.steps = steps;
  auto record = [&](std::size_t step, double n) {
    const ComplexField& psi = run.state;
    rep.times.push_back(static_cast<double>(step) * dt);
    rep.norm.push_back(n);
    rep.energy.push_back(op.energy(psi));
    rep.mean_q.push_back(mean_position(g, psi.values().cwiseAbs2()));
    rep.mean_p.push_back(op.mean_p(psi));
  };

  double n_prev = norm_of(run.state);
  record(0, n_prev);
  if (control.snapshot_stride > 0) run.snapshots.emplace_back(0.0, run.state);
  for (std::size_t step = 1; step <= steps; ++step) {
    ComplexField& psi = run.state;
    if (op.full_cn()) {
      op.crank_nicolson(psi, 0, dt);
    } else {
      psi.values().array() *= half_v;
      for (std::size_t a = 0; a + 1 < d; ++a) kinetic(psi, a, false);
      kinetic(psi, d - 1, true);
      for (std::size_t a = d - 1; a-- > 0;) kinetic(psi, a, false);
      psi.values().array() *= half_v;
    }
    const double n = norm_of(psi);
    const double drift = std::abs(n - n_prev);
    rep.norm_drift.push_back(drift);
    if (!psi.all_finite() || !(drift <= kMaxNormDrift))
      throw InstabilityError("dynamics", "evolve_schrodinger",
                             "norm drift " + std::to_string(drift) + " at step " + std::to_string(step));
    n_prev = n;
    if (due(step, control.record_stride, steps)) record(step, n);
    if (control.snapshot_stride > 0 && due(step, control.snapshot_stride, steps))
      run.snapshots.emplace_back(static_cast<double>(step) * dt, psi);
  }
  return run;
}

// ---------------------------------------------------------------------------

MadelungRates madelung_rates(const EpistemicState& state, const Hamiltonian& H, double hbar) {
  require_dims(state.grid(), H, "madelung_rates");
  const Eigen::VectorXd l = state.density().values().array().log().matrix();
  return MadelungSystem(state.grid(), H, hbar, state.phase_jumps()).rates(l, state.phase().values());
}

double default_madelung_step(const EpistemicState& state, const Hamiltonian& H, double hbar) {
  const Grid& g = state.grid();
  const double m = *std::min_element(H.masses.begin(), H.masses.end());
  const double h = min_spacing(g);
  double speed = 0.0;
  const Eigen::VectorXd l = state.density().values().array().log().matrix();
  MadelungSystem(g, H, hbar, state.phase_jumps()).rates(l, state.phase().values(), &speed);
  double dt = speed > 0.0 ? 0.2 / speed : std::numeric_limits<double>::infinity();
  if (hbar > 0.0) dt = std::min(dt, 0.1 * m * h * h / hbar);
  return dt;
}

Run<EpistemicState> evolve_madelung(const EpistemicState& state0, const Hamiltonian& H, double hbar,
                                    const StepControl& control) {
  const Grid& g = state0.grid();
  require_dims(g, H, "evolve_madelung");
  if (!(hbar >= 0.0)) throw std::invalid_argument("evolve_madelung needs hbar >= 0");
  const MadelungSystem sys(g, H, hbar, state0.phase_jumps());
  const StateKind kind = hbar > 0.0 ? StateKind::quantum : StateKind::classical;

  double dt0 = control.dt > 0.0 ? control.dt : default_madelung_step(state0, H, hbar);
  if (!std::isfinite(dt0)) dt0 = control.T / 100.0;
  const std::size_t steps = step_count(control, dt0);
  const double dt = control.T / static_cast<double>(steps);
  const double m = *std::min_element(H.masses.begin(), H.masses.end());
  const double h = min_spacing(g);
  if (hbar > 0.0 && dt > 1.4 * m * h * h / hbar)
    throw CflError("dynamics", "evolve_madelung",
                   "dt = " + std::to_string(dt) + " exceeds the dispersive limit 1.4 m dq^2 / hbar");

  Eigen::VectorXd l = state0.density().values().array().log().matrix();
  Eigen::VectorXd s = state0.phase().values();
  sys.check_nodes(l, s, 0.0);
  const QuadraticObservable energy_obs = H.observable();

  Run<EpistemicState> run{state0, {}, {}};
  EvolutionReport& rep = run.report;
  rep.method = Method::madelung;
  rep.dt = dt;
  rep.steps = steps;
  auto norm = [&] { return integrate(g, l.array().exp().matrix()); };
  auto record = [&](std::size_t step, double n) {
    const EpistemicState st = sys.state(l, s, kind);
    rep.times.push_back(static_cast<double>(step) * dt);
    rep.norm.push_back(n);
    rep.energy.push_back(ensemble_average_closed(energy_obs, st, hbar));
    rep.mean_q.push_back(mean_position(g, st.density().values()));
    rep.mean_p.push_back(mean_momentum(st));
  };

  double n_prev = norm();
  record(0, n_prev);
  if (control.snapshot_stride > 0) run.snapshots.emplace_back(0.0, state0);
  for (std::size_t step = 1; step <= steps; ++step) {
    double speed = 0.0;
    const MadelungRates k1 = sys.rates(l, s, &speed);
    if (dt * speed > 1.0)
      throw CflError("dynamics", "evolve_madelung",
                     "Courant number " + std::to_string(dt * speed) + " at step " + std::to_string(step));
    const MadelungRates k2 = sys.rates(l + 0.5 * dt * k1.log_density, s + 0.5 * dt * k1.phase);
    const MadelungRates k3 = sys.rates(l + 0.5 * dt * k2.log_density, s + 0.5 * dt * k2.phase);
    const MadelungRates k4 = sys.rates(l + dt * k3.log_density, s + dt * k3.phase);
    l += dt / 6.0 * (k1.log_density + 2.0 * k2.log_density + 2.0 * k3.log_density + k4.log_density);
    s += dt / 6.0 * (k1.phase + 2.0 * k2.phase + 2.0 * k3.phase + k4.phase);
    const double t = static_cast<double>(step) * dt;
    sys.continue_tails(l, s);
    sys.check_nodes(l, s, t);
    const double n = norm();
    rep.norm_drift.push_back(std::abs(n - n_prev));
    n_prev = n;
    if (due(step, control.record_stride, steps)) record(step, n);
    if (control.snapshot_stride > 0 && due(step, control.snapshot_stride, steps))
      run.snapshots.emplace_back(t, sys.state(l, s, kind));
  }
  run.state = sys.state(l, s, kind);
  return run;
}

// ---------------------------------------------------------------------------

namespace {

/// Phase-space flow of the classical Hamiltonian for a set of characteristics.
class CharacteristicFlow {
 public:
  CharacteristicFlow(const Grid& g, const Hamiltonian& H)
      : g_(g), H_(H), d_(g.dims()), step_(0.01 * min_spacing(g)), gauge_(H.has_gauge()) {}

  // y = (q, p, S), length 2d + 1
  void rhs(const Eigen::VectorXd& y, Eigen::VectorXd& out) const {
    const Point q = fold(g_, y.head(ix(d_)));
    double ds = -H_.potential.at(q);
    for (std::size_t a = 0; a < d_; ++a) {
      const double u = (y[ix(d_ + a)] - (gauge_ ? H_.gauge[a].at(q) : 0.0)) / H_.masses[a];
      out[ix(a)] = u;
      ds += y[ix(d_ + a)] * u - 0.5 * H_.masses[a] * u * u;
    }
    for (std::size_t i = 0; i < d_; ++i) {
      double f = -H_.potential.derivative(q, i, step_);
      if (gauge_)
        for (std::size_t j = 0; j < d_; ++j) f += out[ix(j)] * H_.gauge[j].derivative(q, i, step_);
      out[ix(d_ + i)] = f;
    }
    out[ix(2 * d_)] = ds;
  }

  void rk4(Eigen::VectorXd& y, double dt) const {
    Eigen::VectorXd k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size());
    rhs(y, k1);
    rhs(y + 0.5 * dt * k1, k2);
    rhs(y + 0.5 * dt * k2, k3);
    rhs(y + dt * k3, k4);
    y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  double energy(const Eigen::VectorXd& y) const {
    return H_(fold(g_, y.head(ix(d_))), y.segment(ix(d_), ix(d_)));
  }

 private:
  const Grid& g_;
  const Hamiltonian& H_;
  std::size_t d_;
  double step_;
  bool gauge_;
};

/// Wrapped position and the number of periods removed on each axis.
Point wrap(const Grid& g, Point q, std::vector<long>& turns) {
  turns.assign(g.dims(), 0);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const Axis& ax = g.axis(a);
    if (ax.boundary != Boundary::periodic) continue;
    const double t = std::floor((q[ix(a)] - ax.lower) / ax.length());
    turns[a] = static_cast<long>(t);
    q[ix(a)] -= t * ax.length();
  }
  return q;
}

/// Cloud-in-cell corners of q; vanishing axes push outside weight onto the edge cell.
InterpolationStencil cic(const Grid& g, const Point& q) {
  Point c = q;
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const Axis& ax = g.axis(a);
    if (ax.boundary == Boundary::vanishing) c[ix(a)] = std::clamp(c[ix(a)], ax.lower, ax.upper);
  }
  return locate(g, c);
}

double lagrange3(const double* x, const double* y, double t) {
  const double l0 = (t - x[1]) * (t - x[2]) / ((x[0] - x[1]) * (x[0] - x[2]));
  const double l1 = (t - x[0]) * (t - x[2]) / ((x[1] - x[0]) * (x[1] - x[2]));
  const double l2 = (t - x[0]) * (t - x[1]) / ((x[2] - x[0]) * (x[2] - x[1]));
  return l0 * y[0] + l1 * y[1] + l2 * y[2];
}

}  // namespace

ClassicalRun evolve_classical_hj(const EpistemicState& state0, const Hamiltonian& H, const StepControl& control,
                                 std::size_t n_traj, std::uint64_t seed) {
  const Grid& g = state0.grid();
  require_dims(g, H, "evolve_classical_hj");
  const std::size_t d = g.dims();
  const double dv = g.cell_volume();

  // lattice of characteristics
  std::vector<ScalarField> grad_s;
  for (std::size_t a = 0; a < d; ++a) grad_s.push_back(phase_gradient(state0, a));
  const double threshold = state0.node_threshold();
  std::vector<long> slot(g.size(), -1);
  std::vector<std::size_t> origin;
  std::vector<Eigen::VectorXd> y;
  std::vector<double> w;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (state0.density()[k] <= threshold) continue;
    Eigen::VectorXd v(2 * d + 1);
    for (std::size_t a = 0; a < d; ++a) {
      v[ix(a)] = g.coord(k, a);
      v[ix(d + a)] = grad_s[a][k];
    }
    v[ix(2 * d)] = state0.phase()[k];
    slot[k] = static_cast<long>(y.size());
    origin.push_back(k);
    y.push_back(std::move(v));
    w.push_back(state0.density()[k] * dv);
  }
  const double mass = std::accumulate(w.begin(), w.end(), 0.0);

  // recorded sample characteristics
  std::vector<Eigen::VectorXd> ys;
  if (n_traj > 0) {
    const PositionSampler sampler(state0.density());
    Rng rng = substream(seed, 0);
    for (std::size_t t = 0; t < n_traj; ++t) {
      const Point q = sampler.draw(rng);
      const InterpolationStencil st = locate(g, q);
      Eigen::VectorXd v(2 * d + 1);
      v.head(ix(d)) = q;
      for (std::size_t a = 0; a < d; ++a) v[ix(d + a)] = st.apply(grad_s[a]);
      v[ix(2 * d)] = st.apply(state0.phase());
      ys.push_back(std::move(v));
    }
  }

  const CharacteristicFlow flow(g, H);
  double dt0 = control.dt;
  if (!(dt0 > 0.0)) {
    double vmax = 0.0;
    for (const auto& v : y)
      for (std::size_t a = 0; a < d; ++a)
        vmax = std::max(vmax, std::abs(v[ix(d + a)] - H.gauge[a].at(fold(g, v.head(ix(d))))) / H.masses[a] / g.spacing(a));
    dt0 = vmax > 0.0 ? 0.2 / vmax : control.T / 100.0;
  }
  const std::size_t steps = step_count(control, dt0);
  const double dt = control.T / static_cast<double>(steps);

  // caustic check on the lattice: neighbouring characteristics keep their order
  auto check_caustics = [&](double t) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t k = origin[i];
      Eigen::MatrixXd J(d, d);
      bool complete = true;
      for (std::size_t b = 0; b < d && complete; ++b) {
        const Axis& ax = g.axis(b);
        const std::size_t idx = g.index(k, b), n = ax.points, st = g.stride(b);
        const bool periodic = ax.boundary == Boundary::periodic;
        if (!periodic && idx + 1 == n) {
          complete = false;
          break;
        }
        const std::size_t up = idx + 1 == n ? k - (n - 1) * st : k + st;
        if (slot[up] < 0) {
          complete = false;
          break;
        }
        const Eigen::VectorXd& a0 = y[i];
        const Eigen::VectorXd& a1 = y[static_cast<std::size_t>(slot[up])];
        for (std::size_t a = 0; a < d; ++a) {
          double dx = a1[ix(a)] - a0[ix(a)];
          if (a == b && idx + 1 == n) dx += ax.length();
          J(ix(a), ix(b)) = dx / ax.spacing();
        }
      }
      if (!complete) continue;
      const double det = d == 1 ? J(0, 0) : J.determinant();
      if (!(det > 0.0))
        throw CausticError("dynamics", "evolve_classical_hj",
                           "characteristics crossed near grid point " + std::to_string(k) + " at t = " + std::to_string(t));
    }
  };

  ClassicalRun run{{state0, {}, {}}, {}};
  EvolutionReport& rep = run.report;
  rep.method = Method::classical_hj;
  rep.dt = dt;
  rep.steps = steps;
  run.trajectories.resize(ys.size());

  // det of d(position)/d(lattice label): central differences where both
  // lattice neighbours are alive, one-sided otherwise
  auto jacobian = [&](std::size_t i) {
    const std::size_t k = origin[i];
    Eigen::MatrixXd J(d, d);
    for (std::size_t b = 0; b < d; ++b) {
      const Axis& ax = g.axis(b);
      const std::size_t idx = g.index(k, b), n = ax.points, st = g.stride(b);
      const bool periodic = ax.boundary == Boundary::periodic;
      long up = -1, dn = -1;
      double up_shift = 0.0, dn_shift = 0.0;
      if (idx + 1 < n) {
        up = slot[k + st];
      } else if (periodic) {
        up = slot[k - (n - 1) * st];
        up_shift = ax.length();
      }
      if (idx > 0) {
        dn = slot[k - st];
      } else if (periodic) {
        dn = slot[k + (n - 1) * st];
        dn_shift = -ax.length();
      }
      auto pos = [&](long j, double shift) {
        Eigen::VectorXd x = y[static_cast<std::size_t>(j)].head(ix(d));
        x[ix(b)] += shift;
        return x;
      };
      const double h = ax.spacing();
      if (up >= 0 && dn >= 0)
        J.col(ix(b)) = (pos(up, up_shift) - pos(dn, dn_shift)) / (2.0 * h);
      else if (up >= 0)
        J.col(ix(b)) = (pos(up, up_shift) - y[i].head(ix(d))) / h;
      else if (dn >= 0)
        J.col(ix(b)) = (y[i].head(ix(d)) - pos(dn, dn_shift)) / h;
      else
        J.col(ix(b)) = Eigen::VectorXd::Unit(ix(d), ix(b));
    }
    return d == 1 ? J(0, 0) : J.determinant();
  };

  // Density follows from mass conservation along each characteristic,
  // rho(x(X)) = rho0(X) / det(dx/dX); it and the action are interpolated
  // back onto the grid. (Depositing particle masses by cloud-in-cell
  // aliases as soon as the lattice is compressed or stretched.)
  auto deposit = [&]() {
    ScalarField rho(g), S(g);
    std::vector<double> rl(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) rl[i] = state0.density()[origin[i]] / jacobian(i);
    std::vector<long> turns;
    if (d == 1) {
      const Axis& ax = g.axis(0);
      std::vector<double> xs, ss, rs;
      const double J = state0.phase_jump(0);
      const bool periodic = ax.boundary == Boundary::periodic;
      for (int copy = periodic ? -1 : 0; copy <= (periodic ? 1 : 0); ++copy)
        for (std::size_t i = 0; i < y.size(); ++i) {
          xs.push_back(y[i][0] + copy * ax.length());
          ss.push_back(y[i][2] + copy * J);
          rs.push_back(rl[i]);
        }
      const std::size_t m = xs.size();
      if (m < 3) throw NonNormalizable("dynamics", "evolve_classical_hj", "fewer than three characteristics");
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.coord(k, 0);
        const std::size_t hi = static_cast<std::size_t>(std::lower_bound(xs.begin(), xs.end(), x) - xs.begin());
        if (hi == 0 || hi == m) {
          // outside the cloud: no mass, action continued linearly
          const std::size_t j = hi == 0 ? 0 : m - 2;
          S[k] = ss[j] + (ss[j + 1] - ss[j]) * (x - xs[j]) / (xs[j + 1] - xs[j]);
        } else {
          const std::size_t j = std::clamp<std::size_t>(hi - 1, 0, m - 3);
          S[k] = lagrange3(&xs[j], &ss[j], x);
          rho[k] = std::max(0.0, lagrange3(&xs[j], &rs[j], x));
        }
      }
    } else {
      ScalarField wsum(g);
      for (std::size_t i = 0; i < y.size(); ++i) {
        const Point q = wrap(g, y[i].head(ix(d)), turns);
        double s = y[i][ix(2 * d)];
        for (std::size_t a = 0; a < d; ++a) s -= static_cast<double>(turns[a]) * state0.phase_jump(a);
        const InterpolationStencil st = cic(g, q);
        for (std::size_t c = 0; c < st.count; ++c) {
          S[st.index[c]] += st.weight[c] * s;
          rho[st.index[c]] += st.weight[c] * rl[i];
          wsum[st.index[c]] += st.weight[c];
        }
      }
      std::vector<bool> known(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        known[k] = wsum[k] > 0.0;
        if (known[k]) {
          S[k] /= wsum[k];
          rho[k] /= wsum[k];
        }
      }
      // cells no characteristic reached have no mass; their action is the
      // mean of filled neighbours, sweeping outward
      for (bool changed = true; changed;) {
        changed = false;
        std::vector<bool> next = known;
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (known[k]) continue;
          double sum = 0.0;
          int cnt = 0;
          for (std::size_t a = 0; a < d; ++a) {
            const std::size_t i = g.index(k, a), st = g.stride(a);
            if (i > 0 && known[k - st]) sum += S[k - st], ++cnt;
            if (i + 1 < g.axis(a).points && known[k + st]) sum += S[k + st], ++cnt;
          }
          if (cnt > 0) {
            S[k] = sum / cnt;
            next[k] = changed = true;
          }
        }
        known = std::move(next);
      }
    }
    return EpistemicState::normalized(std::move(rho), std::move(S), StateKind::classical, state0.phase_jumps());
  };

  auto record = [&](std::size_t step) {
    const double t = static_cast<double>(step) * dt;
    Point mq = Point::Zero(ix(d)), mp = Point::Zero(ix(d));
    double e = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mq += w[i] * y[i].head(ix(d));
      mp += w[i] * y[i].segment(ix(d), ix(d));
      e += w[i] * flow.energy(y[i]);
    }
    rep.times.push_back(t);
    rep.norm.push_back(mass);
    rep.energy.push_back(e / mass);
    rep.mean_q.push_back(mq / mass);
    rep.mean_p.push_back(mp / mass);
    for (std::size_t j = 0; j < ys.size(); ++j) {
      Trajectory& tr = run.trajectories[j];
      tr.times.push_back(t);
      tr.q.push_back(ys[j].head(ix(d)));
      tr.p.push_back(ys[j].segment(ix(d), ix(d)));
      tr.action.push_back(ys[j][ix(2 * d)]);
    }
  };

  check_caustics(0.0);
  record(0);
  if (control.snapshot_stride > 0) run.snapshots.emplace_back(0.0, deposit());
  constexpr std::size_t chunk = 256;
  for (std::size_t step = 1; step <= steps; ++step) {
    parallel_for((y.size() + chunk - 1) / chunk, [&](std::size_t c) {
      for (std::size_t i = c * chunk; i < std::min(y.size(), (c + 1) * chunk); ++i) flow.rk4(y[i], dt);
    });
    for (auto& v : ys) flow.rk4(v, dt);
    const double t = static_cast<double>(step) * dt;
    check_caustics(t);
    rep.norm_drift.push_back(0.0);
    if (due(step, control.record_stride, steps)) record(step);
    if (control.snapshot_stride > 0 && due(step, control.snapshot_stride, steps)) run.snapshots.emplace_back(t, deposit());
  }
  run.state = deposit();
  return run;
}

std::vector<double> average_energy_series(const std::vector<EpistemicState>& states, const Hamiltonian& H,
                                          double hbar) {
  const QuadraticObservable obs = H.observable();
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& st : states) out.push_back(ensemble_average_closed(obs, st, hbar));
  return out;
}

// ---------------------------------------------------------------------------

bool ClassicalLimitReport::phase_monotone() const {
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (!(rows[k].phase_divergence < rows[k - 1].phase_divergence)) return false;
  return true;
}

std::vector<double> ClassicalLimitReport::phase_ratios() const {
  std::vector<double> r;
  for (std::size_t k = 1; k < rows.size(); ++k) r.push_back(rows[k - 1].phase_divergence / rows[k].phase_divergence);
  return r;
}

ClassicalLimitReport classical_limit_check(const EpistemicState& state0, const Hamiltonian& H,
                                           const std::vector<double>& hbars, const StepControl& control) {
  ClassicalLimitReport report;
  const Grid& g = state0.grid();
  for (double hbar : hbars) {
    if (!(hbar > 0.0)) throw std::invalid_argument("classical_limit_check: hbar values must be positive");
    StepControl c = control;
    if (!(c.dt > 0.0)) c.dt = default_madelung_step(state0, H, hbar);
    const auto q = evolve_madelung(state0, H, hbar, c);
    const auto cl = evolve_classical_hj(state0, H, c);
    ClassicalLimitRow row;
    row.hbar = hbar;
    const std::size_t rows = std::min(q.report.times.size(), cl.report.times.size());
    for (std::size_t r = 0; r < rows; ++r) {
      row.mean_q_divergence =
          std::max(row.mean_q_divergence, (q.report.mean_q[r] - cl.report.mean_q[r]).cwiseAbs().maxCoeff());
      row.mean_p_divergence =
          std::max(row.mean_p_divergence, (q.report.mean_p[r] - cl.report.mean_p[r]).cwiseAbs().maxCoeff());
    }
    const Eigen::ArrayXd diff = q.state.phase().values().array() - cl.state.phase().values().array();
    const Eigen::ArrayXd rho = q.state.density().values().array();
    row.phase_divergence = std::sqrt(integrate(g, (rho * diff * diff).matrix()) / integrate(g, rho.matrix()));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace ontic
