#include "ontic/epistemic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ontic {

std::string_view to_string(StateKind k) { return k == StateKind::classical ? "classical" : "quantum"; }
std::string_view to_string(XiLaw l) { return l == XiLaw::two_point ? "two_point" : "gaussian"; }

StateKind state_kind_from_string(std::string_view s) {
  if (s == "classical") return StateKind::classical;
  if (s == "quantum") return StateKind::quantum;
  throw std::invalid_argument("unknown state kind '" + std::string(s) + "'");
}

XiLaw xi_law_from_string(std::string_view s) {
  if (s == "two_point") return XiLaw::two_point;
  if (s == "gaussian") return XiLaw::gaussian;
  throw std::invalid_argument("unknown xi law '" + std::string(s) + "'");
}

std::vector<double> sample_xi(const XiModel& model, std::size_t n) {
  if (!(model.hbar > 0.0)) throw std::invalid_argument("xi model needs hbar > 0");
  std::vector<double> out(n);
  partitioned(n, model.seed, 0, [&](Rng& rng, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = model.draw(rng);
  });
  return out;
}

// ---------------------------------------------------------------------------

EpistemicState::EpistemicState(ScalarField density, ScalarField phase, StateKind kind,
                               std::vector<double> phase_jump)
    : density_(std::move(density)), phase_(std::move(phase)), kind_(kind), phase_jump_(std::move(phase_jump)) {
  require_same_grid(density_, phase_, "EpistemicState");
  const Grid& g = density_.grid();
  if (!density_.all_finite() || !phase_.all_finite()) throw std::invalid_argument("EpistemicState: non-finite values");
  if (density_.values().minCoeff() < 0.0) throw std::invalid_argument("EpistemicState: negative density");
  const double mass = integrate(density_);
  if (std::abs(mass - 1.0) > kNormTolerance) {
    std::ostringstream os;
    os << "EpistemicState: density integrates to " << mass << ", not 1";
    throw std::invalid_argument(os.str());
  }
  if (phase_jump_.empty()) phase_jump_.assign(g.dims(), 0.0);
  if (phase_jump_.size() != g.dims()) throw std::invalid_argument("EpistemicState: one phase jump per axis");
  for (std::size_t a = 0; a < g.dims(); ++a)
    if (phase_jump_[a] != 0.0 && g.axis(a).boundary != Boundary::periodic)
      throw std::invalid_argument("EpistemicState: phase jump on a non-periodic axis");
  phase_mask_.assign(g.size(), false);
}

EpistemicState EpistemicState::normalized(ScalarField density, ScalarField phase, StateKind kind,
                                          std::vector<double> phase_jump) {
  const double mass = integrate(density);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw NonNormalizable("epistemic", "normalize", "density has no finite mass");
  density.values() /= mass;
  return EpistemicState(std::move(density), std::move(phase), kind, std::move(phase_jump));
}

void EpistemicState::set_phase_mask(std::vector<bool> mask) {
  if (mask.size() != grid().size()) throw std::invalid_argument("phase mask size mismatch");
  phase_mask_ = std::move(mask);
}

ScalarField phase_gradient(const EpistemicState& state, std::size_t axis) {
  ScalarField g = gradient(state.phase(), axis);
  const double jump = state.phase_jump(axis);
  if (jump == 0.0) return g;
  const Grid& grid = state.grid();
  const std::size_t n = grid.axis(axis).points;
  const std::size_t s = grid.stride(axis);
  const double fix = jump / (2.0 * grid.spacing(axis));
  detail::for_each_line(grid, axis, [&](std::size_t base) {
    g[base] += fix;
    g[base + (n - 1) * s] += fix;
  });
  return g;
}

LogDensityGradient::LogDensityGradient(const EpistemicState& state) {
  const Grid& g = state.grid();
  const ScalarField& rho = state.density();
  const double eps = state.node_threshold();
  singular.assign(g.size(), false);
  std::vector<ScalarField> grads;
  for (std::size_t a = 0; a < g.dims(); ++a) grads.push_back(gradient(rho, a));
  ratio.assign(g.dims(), ScalarField(g));
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (rho[k] > eps) {
      for (std::size_t a = 0; a < g.dims(); ++a) ratio[a][k] = grads[a][k] / rho[k];
      continue;
    }
    for (std::size_t a = 0; a < g.dims(); ++a)
      if (grads[a][k] != 0.0) singular[k] = true;
  }
}

bool LogDensityGradient::any_singular() const { return std::find(singular.begin(), singular.end(), true) != singular.end(); }

std::vector<ScalarField> momentum_field(const EpistemicState& state, double xi) {
  const LogDensityGradient lg(state);
  if (lg.any_singular()) {
    const auto k = static_cast<std::size_t>(std::find(lg.singular.begin(), lg.singular.end(), true) - lg.singular.begin());
    std::ostringstream os;
    os << "density vanishes with nonzero gradient at grid point " << k << " (q0 = " << state.grid().coord(k, 0) << ")";
    throw NodeError("epistemic", "momentum_field", os.str());
  }
  std::vector<ScalarField> p;
  for (std::size_t a = 0; a < state.grid().dims(); ++a) {
    ScalarField pa = phase_gradient(state, a);
    pa.values() += 0.5 * xi * lg.ratio[a].values();
    p.push_back(std::move(pa));
  }
  return p;
}

// ---------------------------------------------------------------------------

MomentumLaw::MomentumLaw(const EpistemicState& state) : log_grad_(state) {
  for (std::size_t a = 0; a < state.grid().dims(); ++a) grad_s_.push_back(phase_gradient(state, a));
}

void MomentumLaw::check(const InterpolationStencil& st) const {
  for (std::size_t c = 0; c < st.count; ++c)
    if (st.weight[c] != 0.0 && log_grad_.singular[st.index[c]])
      throw NodeError("epistemic", "momentum", "sample landed next to a node of the density");
}

Point MomentumLaw::drift(const InterpolationStencil& st) const {
  Point p(static_cast<Eigen::Index>(dims()));
  for (std::size_t a = 0; a < dims(); ++a) p[static_cast<Eigen::Index>(a)] = st.apply(grad_s_[a]);
  return p;
}

Point MomentumLaw::log_gradient(const InterpolationStencil& st) const {
  Point u(static_cast<Eigen::Index>(dims()));
  for (std::size_t a = 0; a < dims(); ++a) u[static_cast<Eigen::Index>(a)] = st.apply(log_grad_.ratio[a]);
  return u;
}

Point MomentumLaw::momentum(const InterpolationStencil& st, double xi) const {
  check(st);
  return drift(st) + 0.5 * xi * log_gradient(st);
}

// ---------------------------------------------------------------------------

PositionSampler::PositionSampler(const ScalarField& density) : grid_(density.grid()) {
  const auto& v = density.values();
  if (v.minCoeff() < 0.0) throw std::invalid_argument("PositionSampler: negative density");
  if (grid_.dims() == 1) {
    cdf_.resize(grid_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < grid_.size(); ++k) cdf_[k] = (acc += v[static_cast<Eigen::Index>(k)]);
    if (!(acc > 0.0)) throw std::invalid_argument("PositionSampler: zero density");
    for (auto& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  } else {
    max_ = v.maxCoeff();
    if (!(max_ > 0.0)) throw std::invalid_argument("PositionSampler: zero density");
    accept_.assign(v.data(), v.data() + v.size());
  }
}

Point PositionSampler::draw(Rng& rng) const {
  std::size_t cell = 0;
  if (grid_.dims() == 1) {
    const double u = uniform01(rng);
    cell = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    cell = std::min(cell, cdf_.size() - 1);
  } else {
    const double n = static_cast<double>(grid_.size());
    do {
      cell = std::min(grid_.size() - 1, static_cast<std::size_t>(uniform01(rng) * n));
    } while (uniform01(rng) * max_ >= accept_[cell]);
  }
  Point q(static_cast<Eigen::Index>(grid_.dims()));
  for (std::size_t a = 0; a < grid_.dims(); ++a) {
    const Axis& ax = grid_.axis(a);
    q[static_cast<Eigen::Index>(a)] =
        ax.lower + (static_cast<double>(grid_.index(cell, a)) + uniform01(rng)) * ax.spacing();
  }
  return q;
}

std::vector<OnticSample> draw_ensemble(const EpistemicState& state, const XiModel& model, std::size_t n) {
  if (!(model.hbar > 0.0)) throw std::invalid_argument("xi model needs hbar > 0");
  const MomentumLaw law(state);
  const PositionSampler sampler(state.density());
  std::vector<OnticSample> out(n);
  partitioned(n, model.seed, std::uint64_t{1} << 40, [&](Rng& rng, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      OnticSample& s = out[i];
      s.q = sampler.draw(rng);
      s.xi = model.draw(rng);
      s.p = law.momentum(locate(state.grid(), s.q), s.xi);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_edges_decay(const ScalarField& log_rho, const std::vector<ScalarField>& f) {
  const Grid& g = log_rho.grid();
  Eigen::Index kmax;
  log_rho.values().maxCoeff(&kmax);
  const auto k = static_cast<std::size_t>(kmax);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    if (g.axis(a).boundary != Boundary::vanishing) continue;
    const double scale = f[a].values().cwiseAbs().maxCoeff();
    const double tol = 1e-12 * std::max(scale, 1.0);
    const std::size_t i = g.index(k, a);
    const double fa = f[a][k];
    if ((i == 0 && fa < -tol) || (i + 1 == g.axis(a).points && fa > tol))
      throw NonNormalizable("epistemic", "solve_density_for_field",
                            "density grows without bound toward a domain edge");
  }
}

}  // namespace

EpistemicState solve_density_for_field(const ScalarField& f) {
  return solve_density_for_field(std::vector<ScalarField>{f});
}

EpistemicState solve_density_for_field(const std::vector<ScalarField>& f) {
  if (f.empty()) throw std::invalid_argument("solve_density_for_field: no components");
  const Grid& g = f.front().grid();
  if (f.size() != g.dims()) throw std::invalid_argument("solve_density_for_field: one component per axis");
  for (const auto& c : f) {
    require_same_grid(c, f.front(), "solve_density_for_field");
    if (!c.all_finite()) throw NonNormalizable("epistemic", "solve_density_for_field", "field is not finite");
  }
  // log rho = 2 int f, trapezoidal along each axis in turn from the origin corner.
  ScalarField log_rho(g);
  std::vector<bool> done(g.size(), false);
  done[0] = true;
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const std::size_t n = g.axis(a).points;
    const std::size_t s = g.stride(a);
    const double h = g.spacing(a);
    detail::for_each_line(g, a, [&](std::size_t base) {
      if (!done[base]) return;
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t k = base + i * s;
        log_rho[k] = log_rho[k - s] + h * (f[a][k - s] + f[a][k]);
        done[k] = true;
      }
    });
  }
  check_edges_decay(log_rho, f);
  const double top = log_rho.values().maxCoeff();
  ScalarField rho(g, (log_rho.values().array() - top).exp().matrix());
  return EpistemicState::normalized(std::move(rho), ScalarField(g), StateKind::quantum);
}

// ---------------------------------------------------------------------------

ComplexField to_wavefunction(const EpistemicState& state, double hbar) {
  if (state.kind() != StateKind::quantum) throw std::invalid_argument("to_wavefunction: state is classical");
  if (!(hbar > 0.0)) throw std::invalid_argument("to_wavefunction: hbar must be positive");
  const auto& rho = state.density().values();
  const auto& s = state.phase().values();
  ComplexField psi(state.grid());
  for (Eigen::Index k = 0; k < rho.size(); ++k) psi.values()[k] = std::polar(std::sqrt(rho[k]), s[k] / hbar);
  return psi;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_pi(double x) { return x - kTwoPi * std::round(x / kTwoPi); }

}  // namespace

EpistemicState from_wavefunction(const ComplexField& psi, double hbar) {
  if (!(hbar > 0.0)) throw std::invalid_argument("from_wavefunction: hbar must be positive");
  const Grid& g = psi.grid();
  ScalarField rho(g, psi.values().cwiseAbs2());
  const double mass = integrate(rho);
  if (std::abs(mass - 1.0) > kNormTolerance) throw std::invalid_argument("from_wavefunction: psi is not normalized");
  const double eps = kNodeFraction * rho.values().maxCoeff();

  std::vector<bool> mask(g.size());
  std::vector<double> raw(g.size()), theta(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    mask[k] = rho[k] <= eps;
    raw[k] = std::arg(psi[k]);
  }

  // Axis sweeps: after sweep a every point whose indices beyond a are zero is unwrapped.
  std::vector<bool> done(g.size(), false);
  theta[0] = raw[0];
  done[0] = true;
  for (std::size_t a = 0; a < g.dims(); ++a) {
    const std::size_t n = g.axis(a).points;
    const std::size_t s = g.stride(a);
    detail::for_each_line(g, a, [&](std::size_t base) {
      if (!done[base]) return;
      double prev = theta[base];
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t k = base + i * s;
        if (mask[k]) {
          theta[k] = prev;
        } else {
          theta[k] = raw[k] + kTwoPi * std::round((prev - raw[k]) / kTwoPi);
          prev = theta[k];
        }
        done[k] = true;
      }
    });
  }

  // Masked points take the mean of unmasked neighbours, spreading inward.
  std::vector<bool> known(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) known[k] = !mask[k];
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::pair<std::size_t, double>> updates;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (known[k]) continue;
      double sum = 0.0;
      int count = 0;
      for (std::size_t a = 0; a < g.dims(); ++a) {
        const std::size_t i = g.index(k, a);
        const std::size_t n = g.axis(a).points;
        const std::size_t s = g.stride(a);
        if (i > 0 && known[k - s]) sum += theta[k - s], ++count;
        if (i + 1 < n && known[k + s]) sum += theta[k + s], ++count;
      }
      if (count > 0) updates.emplace_back(k, sum / count);
    }
    for (auto [k, v] : updates) {
      theta[k] = v;
      known[k] = true;
      changed = true;
    }
  }

  // Winding across each periodic seam, read off the reference line.
  std::vector<double> jumps(g.dims(), 0.0);
  for (std::size_t a = 0; a < g.dims(); ++a) {
    if (g.axis(a).boundary != Boundary::periodic) continue;
    const std::size_t last = (g.axis(a).points - 1) * g.stride(a);
    const double continued = theta[last] + wrap_pi(raw[0] - raw[last]);
    jumps[a] = hbar * kTwoPi * std::round((continued - theta[0]) / kTwoPi);
  }

  ScalarField phase(g);
  for (std::size_t k = 0; k < g.size(); ++k) phase[k] = hbar * theta[k];
  // Re-normalise away rounding in |psi|^2 so the state invariant holds exactly.
  EpistemicState state = EpistemicState::normalized(std::move(rho), std::move(phase), StateKind::quantum, jumps);
  state.set_phase_mask(std::move(mask));

  if (g.dims() >= 2) {
    // Circulation around the boundary of the (0, 1) plane through the grid centre.
    std::size_t centre = 0;
    for (std::size_t a = 2; a < g.dims(); ++a) centre += (g.axis(a).points / 2) * g.stride(a);
    const std::size_t n0 = g.axis(0).points, n1 = g.axis(1).points;
    const std::size_t s0 = g.stride(0), s1 = g.stride(1);
    std::vector<std::size_t> loop;
    for (std::size_t j = 0; j + 1 < n1; ++j) loop.push_back(centre + j * s1);
    for (std::size_t i = 0; i + 1 < n0; ++i) loop.push_back(centre + i * s0 + (n1 - 1) * s1);
    for (std::size_t j = n1 - 1; j > 0; --j) loop.push_back(centre + (n0 - 1) * s0 + j * s1);
    for (std::size_t i = n0 - 1; i > 0; --i) loop.push_back(centre + i * s0);
    // the loop above runs clockwise in the (axis0, axis1) plane
    double total = 0.0;
    for (std::size_t t = 0; t < loop.size(); ++t) total += wrap_pi(raw[loop[(t + 1) % loop.size()]] - raw[loop[t]]);
    state.set_circulation(-static_cast<int>(std::lround(total / kTwoPi)));
  }
  return state;
}

ScalarField current_phase_gradient(const ComplexField& psi, std::size_t axis, double hbar) {
  const ComplexField d = gradient(psi, axis);
  const auto rho = psi.values().cwiseAbs2();
  const double eps = kNodeFraction * rho.maxCoeff();
  ScalarField out(psi.grid());
  for (Eigen::Index k = 0; k < rho.size(); ++k)
    if (rho[k] > eps) out.values()[k] = hbar * (std::conj(psi.values()[k]) * d.values()[k]).imag() / rho[k];
  return out;
}

}  // namespace ontic
