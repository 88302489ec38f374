#pragma once

#include "ontic/epistemic.hpp"
#include "ontic/expectation.hpp"

#include <string_view>

namespace ontic {

enum class XiMode { nonseparable, separable };
enum class CorrelationMethod { mc, closed };

std::string_view to_string(XiMode m);
std::string_view to_string(CorrelationMethod m);
XiMode xi_mode_from_string(std::string_view s);
CorrelationMethod correlation_method_from_string(std::string_view s);

/// How xi enters the momenta of several axes. Nonseparable: one draw per
/// sample shared by every axis. Separable: an independent draw per axis,
/// each with the law and variance of `model` (zero mean, no cross moment).
struct XiStructure {
  XiMode mode = XiMode::nonseparable;
  XiModel model;
};

struct CorrelationResult {
  double value = 0.0;
  double std_error = 0.0;  // 0 for the closed form
  std::size_t samples = 0;
  CorrelationMethod method = CorrelationMethod::closed;
  XiMode mode = XiMode::nonseparable;
};

/// Ensemble average of p_i p_j. Closed form:
///   nonseparable  int [d_i S d_j S + hbar^2 d_i rho d_j rho / 4 rho^2] rho
///   separable     int d_i S d_j S rho
/// MC draws q from rho and xi per `structure`; n is ignored by the closed form.
/// Throws NodeError on a state with nodes.
CorrelationResult momentum_correlation(const EpistemicState& state, const XiStructure& structure,
                                       CorrelationMethod method, std::size_t n = 100000, std::size_t i = 0,
                                       std::size_t j = 1);

/// The hbar^2 term two ways: with first derivatives of rho and, after
/// integrating by parts, with the mixed derivative of R = sqrt(rho).
struct QuantumCorrection {
  double gradient_form = 0.0;   // int hbar^2 d_i rho d_j rho / 4 rho
  double curvature_form = 0.0;  // -int hbar^2 R d_i d_j R
  /// nonseparable minus separable closed-form correlation
  double value = 0.0;
};

QuantumCorrection quantum_correction(const EpistemicState& state, double hbar, std::size_t i = 0,
                                     std::size_t j = 1);

/// Number of singular values of the bipartite amplitude above
/// threshold * largest. The first `split` axes form one party.
std::size_t schmidt_rank(const ComplexField& psi, double threshold = 1e-6, std::size_t split = 1);

/// Singular values of the amplitude matrix, scaled so their squares sum to the norm.
Eigen::VectorXd schmidt_coefficients(const ComplexField& psi, std::size_t split = 1);

}  // namespace ontic
