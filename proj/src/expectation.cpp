#include "ontic/expectation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ontic {

McEstimate summarize(const std::vector<double>& values) {
  McEstimate e;
  e.samples = values.size();
  if (values.empty()) return e;
  const std::size_t n = values.size();
  e.value = detail::pairwise_sum(values.data(), n) / static_cast<double>(n);
  if (n < 2) return e;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - e.value) * (values[i] - e.value);
  const double var = detail::pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
  e.std_error = std::sqrt(var / static_cast<double>(n));
  return e;
}

double evaluate(const QuadraticObservable& obs, const OnticSample& sample) { return obs(sample.q, sample.p); }

McEstimate ensemble_average_mc(const QuadraticObservable& obs, const EpistemicState& state, const XiModel& model,
                               std::size_t n) {
  if (n < 2) throw std::invalid_argument("ensemble_average_mc needs at least 2 samples");
  if (!(model.hbar > 0.0)) throw std::invalid_argument("xi model needs hbar > 0");
  const DiscreteObservable o(obs, state.grid());
  const MomentumLaw law(state);
  const PositionSampler sampler(state.density());
  std::vector<double> values(n);
  partitioned(n, model.seed, std::uint64_t{1} << 40, [&](Rng& rng, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Point q = sampler.draw(rng);
      const double xi = model.draw(rng);
      const InterpolationStencil st = locate(state.grid(), q);
      values[i] = o(st, law.momentum(st, xi));
    }
  });
  return summarize(values);
}

double ensemble_average_closed(const QuadraticObservable& obs, const EpistemicState& state, double hbar) {
  const Grid& g = state.grid();
  const std::size_t d = g.dims();
  const DiscreteObservable o(obs, g);
  const LogDensityGradient lg(state);
  std::vector<ScalarField> ds;
  for (std::size_t a = 0; a < d; ++a) ds.push_back(phase_gradient(state, a));
  const double eps = state.node_threshold();
  const ScalarField& rho = state.density();
  Eigen::VectorXd integrand = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (rho[k] <= eps) continue;
    double quad = 0.0, fluct = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double ki = ds[i][k] - o.gauge[i][k];
      lin += o.linear[i][k] * ds[i][k];
      for (std::size_t j = 0; j < d; ++j) {
        if (!o.metric_present[i * d + j]) continue;
        const double gij = o.metric[i * d + j][k];
        quad += gij * ki * (ds[j][k] - o.gauge[j][k]);
        fluct += gij * lg.ratio[i][k] * lg.ratio[j][k];
      }
    }
    const double v = (0.5 * quad + lin + o.potential[k] + 0.125 * hbar * hbar * fluct) * rho[k];
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "integrand not finite at grid point " << k;
      throw NodeError("expectation", "ensemble_average_closed", os.str());
    }
    integrand[static_cast<Eigen::Index>(k)] = v;
  }
  return integrate(g, integrand);
}

Complex quantum_expectation(const QuadraticObservable& obs, const ComplexField& psi, double hbar) {
  const Grid& g = psi.grid();
  const std::size_t d = g.dims();
  const double norm = integrate(g, psi.values().cwiseAbs2());
  if (std::abs(norm - 1.0) > kNormTolerance) throw std::invalid_argument("quantum_expectation: psi is not normalized");
  const DiscreteObservable o(obs, g);
  const Complex mih(0.0, -hbar);
  using Vec = ComplexField::Vector;

  // (p_j - A_j) psi
  std::vector<ComplexField> kpsi;
  for (std::size_t j = 0; j < d; ++j) {
    Vec v = mih * gradient(psi, j).values();
    v.array() -= o.gauge[j].values().array() * psi.values().array();
    kpsi.emplace_back(g, v);
  }
  Vec out = o.potential.values().array() * psi.values().array();
  for (std::size_t i = 0; i < d; ++i) {
    // chi_i = sum_j g^ij (p_j - A_j) psi, then 1/2 (p_i - A_i) chi_i.
    ComplexField chi(g);
    bool any = false;
    for (std::size_t j = 0; j < d; ++j) {
      if (!o.metric_present[i * d + j]) continue;
      chi.values().array() += o.metric[i * d + j].values().array() * kpsi[j].values().array();
      any = true;
    }
    if (any) {
      Vec t = mih * gradient(chi, i).values();
      t.array() -= o.gauge[i].values().array() * chi.values().array();
      out += 0.5 * t;
    }
    if (o.linear[i].values().isZero(0.0)) continue;
    // 1/2 (b p + p b) psi
    const auto& b = o.linear[i].values().array();
    ComplexField bpsi(g, (b * psi.values().array()).matrix());
    Vec t = b * (mih * gradient(psi, i).values()).array();
    t += mih * gradient(bpsi, i).values();
    out += 0.5 * t;
  }
  return integrate(g, (psi.values().conjugate().array() * out.array()).matrix());
}

Uncertainty uncertainty_product(const EpistemicState& state, const XiModel& model, std::size_t axis) {
  const Grid& g = state.grid();
  if (axis >= g.dims()) throw std::out_of_range("uncertainty_product: axis out of range");
  const std::size_t d = g.dims();
  Uncertainty u;
  u.mean_q = ensemble_average_closed(position_observable(d, axis), state, model.hbar);
  u.mean_p = ensemble_average_closed(momentum_observable(d, axis), state, model.hbar);
  const double vq = ensemble_average_closed(position_spread_observable(d, axis, u.mean_q), state, model.hbar);
  const double vp = ensemble_average_closed(momentum_spread_observable(d, axis, u.mean_p), state, model.hbar);
  u.sigma_q = std::sqrt(vq);
  u.sigma_p = std::sqrt(vp);
  u.product = u.sigma_q * u.sigma_p;
  return u;
}

UncertaintyChain uncertainty_chain(const EpistemicState& state, double hbar, std::size_t axis) {
  const Grid& g = state.grid();
  if (axis >= g.dims()) throw std::out_of_range("uncertainty_chain: axis out of range");
  const XiModel model{hbar};
  const Uncertainty u = uncertainty_product(state, model, axis);
  UncertaintyChain c;
  c.hbar = hbar;
  c.variance_q = u.sigma_q * u.sigma_q;
  c.variance_p = u.sigma_p * u.sigma_p;
  const LogDensityGradient lg(state);
  const double eps = state.node_threshold();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (state.density()[k] <= eps) continue;
    const double r = 0.5 * hbar * lg.ratio[axis][k];
    f[static_cast<Eigen::Index>(k)] = r * r * state.density()[k];
  }
  c.fisher = integrate(g, f);
  return c;
}

}  // namespace ontic
