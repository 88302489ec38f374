#pragma once

#include "ontic/epistemic.hpp"
#include "ontic/observable.hpp"

#include <vector>

namespace ontic {

/// Sample mean with its standard error.
struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Mean and standard error with a fixed summation tree, so the result does
/// not depend on how the values were produced.
McEstimate summarize(const std::vector<double>& values);

/// O(p, q) at one ontic sample.
double evaluate(const QuadraticObservable& obs, const OnticSample& sample);

/// Monte Carlo over (q, xi): the same draws as draw_ensemble for the same seed.
McEstimate ensemble_average_mc(const QuadraticObservable& obs, const EpistemicState& state, const XiModel& model,
                               std::size_t n);

/// Quadrature of
///   [1/2 g (dS - A)(dS - A) + b dS + V + hbar^2/8 g (d rho / rho)(d rho / rho)] rho.
/// Points at or below the node threshold are left out (their weight is
/// below 1e-12 of the peak). Throws NodeError if the integrand is not finite.
double ensemble_average_closed(const QuadraticObservable& obs, const EpistemicState& state, double hbar);

/// <psi| O |psi> by quadrature with p -> -i hbar d and the sandwich ordering
/// 1/2 (p - A) g (p - A) + 1/2 (b p + p b) + V applied to psi on the grid.
/// The imaginary part is returned, not discarded.
Complex quantum_expectation(const QuadraticObservable& obs, const ComplexField& psi, double hbar);

struct Uncertainty {
  double mean_q = 0.0;
  double mean_p = 0.0;
  double sigma_q = 0.0;
  double sigma_p = 0.0;
  double product = 0.0;
};

/// sigma_q by quadrature of rho, sigma_p from the closed-form average of
/// (p - <p>)^2 along `axis`.
Uncertainty uncertainty_product(const EpistemicState& state, const XiModel& model, std::size_t axis = 0);

/// The two inequalities of the Cauchy-Schwarz route to the uncertainty relation:
///   variance_q * fisher >= hbar^2 / 4      and      variance_p >= fisher,
/// with fisher = integral of ((hbar/2) d rho / rho)^2 rho.
struct UncertaintyChain {
  double hbar = 0.0;
  double variance_q = 0.0;
  double variance_p = 0.0;
  double fisher = 0.0;

  double position_bound() const { return variance_q * fisher; }
  bool position_holds(double rel_tol) const { return position_bound() >= 0.25 * hbar * hbar * (1.0 - rel_tol); }
  bool momentum_holds(double rel_tol) const { return variance_p >= fisher * (1.0 - rel_tol); }
};

UncertaintyChain uncertainty_chain(const EpistemicState& state, double hbar, std::size_t axis = 0);

}  // namespace ontic
