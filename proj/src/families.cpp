#include "ontic/families.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ontic {
namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

void require_dims(const Grid& g, std::size_t d, const char* what) {
  if (g.dims() != d) throw std::invalid_argument(std::string(what) + ": wrong grid dimension");
}

}  // namespace

EpistemicState gaussian_state(const Grid& g, double centre, double sigma, double momentum) {
  require_dims(g, 1, "gaussian_state");
  return gaussian_state(g, std::vector<double>{centre}, std::vector<double>{sigma}, std::vector<double>{momentum});
}

EpistemicState gaussian_state(const Grid& g, const std::vector<double>& centre, const std::vector<double>& sigma,
                              const std::vector<double>& momentum) {
  const std::size_t d = g.dims();
  if (centre.size() != d || sigma.size() != d || momentum.size() != d)
    throw std::invalid_argument("gaussian_state: one centre, width and momentum per axis");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("gaussian_state: widths must be positive");
  // log-density relative to the peak, so wide grids do not underflow the peak
  ScalarField rho = ScalarField::sample(g, [&](const Point& q) {
    double e = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double z = (q[static_cast<Eigen::Index>(a)] - centre[a]) / sigma[a];
      e -= 0.5 * z * z;
    }
    return std::exp(e);
  });
  ScalarField s = ScalarField::sample(g, [&](const Point& q) {
    double v = 0.0;
    for (std::size_t a = 0; a < d; ++a) v += momentum[a] * q[static_cast<Eigen::Index>(a)];
    return v;
  });
  std::vector<double> jump(d, 0.0);
  for (std::size_t a = 0; a < d; ++a)
    if (g.axis(a).boundary == Boundary::periodic) jump[a] = momentum[a] * g.axis(a).length();
  return EpistemicState::normalized(std::move(rho), std::move(s), StateKind::quantum, jump);
}

EpistemicState box_ground_state(const Grid& g) {
  require_dims(g, 1, "box_ground_state");
  const Axis& ax = g.axis(0);
  const double L = ax.length();
  ScalarField rho = ScalarField::sample(g, [&](const Point& q) {
    const double s = std::sin(kPi * (q[0] - ax.lower) / L);
    return 2.0 / L * s * s;
  });
  return EpistemicState::normalized(std::move(rho), ScalarField(g));
}

EpistemicState plane_wave_state(const Grid& g, double p0) {
  require_dims(g, 1, "plane_wave_state");
  ScalarField s = ScalarField::sample(g, [&](const Point& q) { return p0 * q[0]; });
  std::vector<double> jump{g.axis(0).boundary == Boundary::periodic ? p0 * g.axis(0).length() : 0.0};
  return EpistemicState::normalized(ScalarField(g, 1.0), std::move(s), StateKind::quantum, jump);
}

EpistemicState entangled_gaussian_state(const Grid& g, double a, double b) {
  require_dims(g, 2, "entangled_gaussian_state");
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("entangled_gaussian_state: widths must be positive");
  ScalarField rho = ScalarField::sample(g, [&](const Point& q) {
    const double u = q[0] - q[1], v = q[0] + q[1];
    return std::exp(-u * u / (2 * a * a) - v * v / (2 * b * b));
  });
  return EpistemicState::normalized(std::move(rho), ScalarField(g));
}

SmoothStateParams SmoothStateParams::draw(Rng& rng) {
  SmoothStateParams p;
  p.centre = uniform(rng, -1.5, 1.5);
  p.width = uniform(rng, 0.6, 2.0);
  for (int k = 0; k < 3; ++k) {
    p.amplitude.push_back(uniform(rng, -0.3, 0.3));
    p.phase.push_back(uniform(rng, 0.0, 2 * kPi));
  }
  p.slope = uniform(rng, -1.0, 1.0);
  for (int k = 0; k < 2; ++k) {
    p.beta.push_back(uniform(rng, -0.5, 0.5));
    p.kappa.push_back(uniform(rng, 0.3, 1.5));
    p.shift.push_back(uniform(rng, 0.0, 2 * kPi));
  }
  return p;
}

EpistemicState SmoothStateParams::on(const Grid& g) const {
  require_dims(g, 1, "SmoothStateParams::on");
  ScalarField rho = ScalarField::sample(g, [&](const Point& q) {
    const double z = (q[0] - centre) / width;
    double e = -0.5 * z * z;
    for (std::size_t k = 0; k < amplitude.size(); ++k)
      e += amplitude[k] * std::cos(static_cast<double>(k + 1) * q[0] / width + phase[k]);
    return std::exp(e);
  });
  ScalarField s = ScalarField::sample(g, [&](const Point& q) {
    double v = slope * q[0];
    for (std::size_t k = 0; k < beta.size(); ++k) v += beta[k] * std::sin(kappa[k] * q[0] + shift[k]);
    return v;
  });
  return EpistemicState::normalized(std::move(rho), std::move(s));
}

QuadraticObservable random_observable(Rng& rng) {
  QuadraticObservable o(1, "random");
  const double g0 = uniform(rng, 0.5, 2.0), g1 = uniform(rng, -0.4, 0.4) * g0;
  const double gk = uniform(rng, 0.2, 1.0), gp = uniform(rng, 0.0, 2 * kPi);
  o.set_metric(0, 0, Coefficient([=](const Point& q) { return g0 + g1 * std::cos(gk * q[0] + gp); }));
  const double a0 = uniform(rng, -1.0, 1.0), a1 = uniform(rng, -0.5, 0.5);
  const double ak = uniform(rng, 0.2, 1.0), ap = uniform(rng, 0.0, 2 * kPi);
  o.set_gauge(0, Coefficient([=](const Point& q) { return a0 + a1 * std::sin(ak * q[0] + ap); }));
  const double b0 = uniform(rng, -1.0, 1.0), b1 = uniform(rng, -0.5, 0.5), bk = uniform(rng, 0.2, 1.0);
  o.set_linear(0, Coefficient([=](const Point& q) { return b0 + b1 * std::cos(bk * q[0]); }));
  const double v2 = uniform(rng, 0.0, 0.5), v1 = uniform(rng, -1.0, 1.0), vk = uniform(rng, 0.2, 1.5);
  o.set_potential(Coefficient([=](const Point& q) { return v2 * q[0] * q[0] + v1 * std::sin(vk * q[0]); }));
  return o;
}

// ---------------------------------------------------------------------------

ComplexField normalized(ComplexField psi) {
  const double n = integrate(psi.grid(), psi.values().cwiseAbs2());
  if (!(n > 0.0) || !std::isfinite(n)) throw NonNormalizable("families", "normalized", "zero or infinite norm");
  psi.values() /= std::sqrt(n);
  return psi;
}

ComplexField gaussian_packet(const Grid& g, double centre, double sigma, double p0, double hbar) {
  require_dims(g, 1, "gaussian_packet");
  if (!(sigma > 0.0) || !(hbar > 0.0)) throw std::invalid_argument("gaussian_packet: sigma and hbar must be positive");
  return normalized(ComplexField::sample(g, [&](const Point& q) {
    const double z = q[0] - centre;
    return std::polar(std::exp(-z * z / (4 * sigma * sigma)), p0 * q[0] / hbar);
  }));
}

ComplexField box_mode(const Grid& g, int n) {
  require_dims(g, 1, "box_mode");
  if (n < 1) throw std::invalid_argument("box_mode: n >= 1");
  const Axis& ax = g.axis(0);
  const double L = ax.length();
  return ComplexField::sample(g, [&](const Point& q) {
    return Complex(std::sqrt(2.0 / L) * std::sin(n * kPi * (q[0] - ax.lower) / L), 0.0);
  });
}

ComplexField harmonic_mode(const Grid& g, int n, double mass, double omega, double hbar) {
  require_dims(g, 1, "harmonic_mode");
  if (n < 0) throw std::invalid_argument("harmonic_mode: n >= 0");
  const double l = std::sqrt(hbar / (mass * omega));
  return ComplexField::sample(g, [&](const Point& q) {
    // normalised Hermite functions by the stable three-term recurrence
    const double x = q[0] / l;
    double h0 = std::pow(kPi, -0.25) * std::exp(-0.5 * x * x);
    if (n == 0) return Complex(h0 / std::sqrt(l), 0.0);
    double h1 = std::sqrt(2.0) * x * h0;
    for (int k = 2; k <= n; ++k) {
      const double h2 = std::sqrt(2.0 / k) * x * h1 - std::sqrt((k - 1.0) / k) * h0;
      h0 = h1;
      h1 = h2;
    }
    return Complex(h1 / std::sqrt(l), 0.0);
  });
}

ComplexField plane_wave_mode(const Grid& g, int k) {
  require_dims(g, 1, "plane_wave_mode");
  const Axis& ax = g.axis(0);
  if (ax.boundary != Boundary::periodic) throw std::invalid_argument("plane_wave_mode needs a periodic axis");
  const double L = ax.length();
  return ComplexField::sample(g, [&](const Point& q) { return std::polar(1.0 / std::sqrt(L), 2 * kPi * k * (q[0] - ax.lower) / L); });
}

ComplexField angular_harmonic(const Grid& g, int m, double width) {
  require_dims(g, 2, "angular_harmonic");
  if (!(width > 0.0)) throw std::invalid_argument("angular_harmonic: width must be positive");
  return normalized(ComplexField::sample(g, [&](const Point& q) {
    const Complex z(q[0], m >= 0 ? q[1] : -q[1]);
    const double r2 = q[0] * q[0] + q[1] * q[1];
    return std::pow(z, std::abs(m)) * std::exp(-r2 / (2 * width * width));
  }));
}

Grid product_grid(const Grid& a, const Grid& b) {
  std::vector<Axis> axes = a.axes();
  axes.insert(axes.end(), b.axes().begin(), b.axes().end());
  return Grid(std::move(axes));
}

ComplexField product_state(const ComplexField& a, const ComplexField& b) {
  const Grid g = product_grid(a.grid(), b.grid());
  ComplexField out(g);
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values().segment(static_cast<Eigen::Index>(i * nb), static_cast<Eigen::Index>(nb)) = a[i] * b.values();
  return out;
}

}  // namespace ontic
