#include "ontic/correlation.hpp"

#include <Eigen/SVD>

#include <sstream>
#include <stdexcept>
#include <string>

namespace ontic {

std::string_view to_string(XiMode m) { return m == XiMode::nonseparable ? "nonseparable" : "separable"; }

std::string_view to_string(CorrelationMethod m) { return m == CorrelationMethod::mc ? "mc" : "closed"; }

XiMode xi_mode_from_string(std::string_view s) {
  if (s == "nonseparable") return XiMode::nonseparable;
  if (s == "separable") return XiMode::separable;
  throw std::invalid_argument("unknown xi mode '" + std::string(s) + "'");
}

CorrelationMethod correlation_method_from_string(std::string_view s) {
  if (s == "mc") return CorrelationMethod::mc;
  if (s == "closed") return CorrelationMethod::closed;
  throw std::invalid_argument("unknown correlation method '" + std::string(s) + "'");
}

namespace {

void require_pair(const EpistemicState& state, std::size_t i, std::size_t j, const char* op) {
  const std::size_t d = state.grid().dims();
  if (i >= d || j >= d || i == j)
    throw std::invalid_argument(std::string(op) + ": need two distinct axes of the state");
}

// A flagged point is a node when the density is resolved on both sides of
// it along some axis; flagged points in an underflowing tail are not.
void require_node_free(const EpistemicState& state, const char* op) {
  const LogDensityGradient lg(state);
  const Grid& g = state.grid();
  const ScalarField& rho = state.density();
  const double eps = state.node_threshold();
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!lg.singular[k]) continue;
    for (std::size_t a = 0; a < g.dims(); ++a) {
      const std::size_t i = g.index(k, a), n = g.axis(a).points, s = g.stride(a);
      const bool periodic = g.axis(a).boundary == Boundary::periodic;
      if (!periodic && (i == 0 || i + 1 == n)) continue;
      const std::size_t lo = i == 0 ? k + (n - 1) * s : k - s;
      const std::size_t hi = i + 1 == n ? k - (n - 1) * s : k + s;
      if (rho[lo] > eps && rho[hi] > eps) {
        std::ostringstream os;
        os << "density vanishes with nonzero gradient inside the support at " << g.point(k).transpose();
        throw NodeError("correlation", op, os.str());
      }
    }
  }
}

}  // namespace

CorrelationResult momentum_correlation(const EpistemicState& state, const XiStructure& structure,
                                       CorrelationMethod method, std::size_t n, std::size_t i, std::size_t j) {
  require_pair(state, i, j, "momentum_correlation");
  require_node_free(state, "momentum_correlation");
  CorrelationResult r;
  r.method = method;
  r.mode = structure.mode;
  const QuadraticObservable obs = momentum_product_observable(state.grid().dims(), i, j);
  const double hbar = structure.model.hbar;

  if (method == CorrelationMethod::closed) {
    // independent zero-mean draws kill the cross moment, leaving the drift term
    r.value = ensemble_average_closed(obs, state, structure.mode == XiMode::nonseparable ? hbar : 0.0);
    return r;
  }

  if (structure.mode == XiMode::nonseparable) {
    const McEstimate e = ensemble_average_mc(obs, state, structure.model, n);
    r.value = e.value;
    r.std_error = e.std_error;
    r.samples = e.samples;
    return r;
  }

  if (n < 2) throw std::invalid_argument("momentum_correlation needs at least 2 samples");
  const MomentumLaw law(state);
  const PositionSampler sampler(state.density());
  std::vector<double> values(n);
  partitioned(n, structure.model.seed, std::uint64_t{3} << 40, [&](Rng& rng, std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const Point q = sampler.draw(rng);
      const double xi_i = structure.model.draw(rng);
      const double xi_j = structure.model.draw(rng);
      const InterpolationStencil st = locate(state.grid(), q);
      law.check(st);
      const Point s = law.drift(st);
      const Point l = law.log_gradient(st);
      values[k] = (s[i] + 0.5 * xi_i * l[i]) * (s[j] + 0.5 * xi_j * l[j]);
    }
  });
  const McEstimate e = summarize(values);
  r.value = e.value;
  r.std_error = e.std_error;
  r.samples = e.samples;
  return r;
}

QuantumCorrection quantum_correction(const EpistemicState& state, double hbar, std::size_t i, std::size_t j) {
  require_pair(state, i, j, "quantum_correction");
  require_node_free(state, "quantum_correction");
  const LogDensityGradient lg(state);
  const ScalarField& rho = state.density();
  const double eps = state.node_threshold();
  const Grid& g = state.grid();

  Eigen::VectorXd grad(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k)
    grad[static_cast<Eigen::Index>(k)] = rho[k] > eps ? 0.25 * lg.ratio[i][k] * lg.ratio[j][k] * rho[k] : 0.0;

  const ScalarField r(g, rho.values().array().max(0.0).sqrt());
  const ScalarField rij = mixed_derivative(r, i, j);
  const Eigen::VectorXd curv = -(r.values().array() * rij.values().array()).matrix();

  QuantumCorrection c;
  c.gradient_form = hbar * hbar * integrate(g, grad);
  c.curvature_form = hbar * hbar * integrate(g, curv);
  const QuadraticObservable obs = momentum_product_observable(g.dims(), i, j);
  c.value = ensemble_average_closed(obs, state, hbar) - ensemble_average_closed(obs, state, 0.0);
  return c;
}

namespace {

Eigen::MatrixXcd amplitude_matrix(const ComplexField& psi, std::size_t split) {
  const Grid& g = psi.grid();
  if (split == 0 || split >= g.dims()) throw std::invalid_argument("schmidt split must leave both parties nonempty");
  std::size_t rows = 1;
  for (std::size_t a = 0; a < split; ++a) rows *= g.axis(a).points;
  const std::size_t cols = g.size() / rows;
  using RowMajor = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  // row-major storage puts the second party's index last, so this is a reshape
  return Eigen::Map<const RowMajor>(psi.values().data(), static_cast<Eigen::Index>(rows),
                                    static_cast<Eigen::Index>(cols)) *
         std::sqrt(g.cell_volume());
}

}  // namespace

Eigen::VectorXd schmidt_coefficients(const ComplexField& psi, std::size_t split) {
  const Eigen::MatrixXcd m = amplitude_matrix(psi, split);
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
  return svd.singularValues();
}

std::size_t schmidt_rank(const ComplexField& psi, double threshold, std::size_t split) {
  const Eigen::VectorXd s = schmidt_coefficients(psi, split);
  if (s.size() == 0 || s[0] == 0.0) return 0;
  std::size_t rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s[k] > threshold * s[0]) ++rank;
  return rank;
}

}  // namespace ontic
