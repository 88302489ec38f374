#pragma once

#include "ontic/epistemic.hpp"
#include "ontic/observable.hpp"

#include <vector>

namespace ontic {

// Epistemic states ---------------------------------------------------------

/// rho ∝ exp(-(q - centre)^2 / 2 sigma^2), S = momentum * q (1D).
EpistemicState gaussian_state(const Grid& g, double centre, double sigma, double momentum = 0.0);

/// Product Gaussian with per-axis centre, width and mean momentum.
EpistemicState gaussian_state(const Grid& g, const std::vector<double>& centre, const std::vector<double>& sigma,
                              const std::vector<double>& momentum);

/// Ground state of the infinite well filling the grid's extent:
/// rho = (2 / L) sin^2(pi (q - lower) / L), S = 0.
EpistemicState box_ground_state(const Grid& g);

/// Uniform rho, S = p0 q. On a periodic axis S carries the seam jump p0 L.
EpistemicState plane_wave_state(const Grid& g, double p0);

/// rho ∝ exp(-(q1 - q2)^2 / 2a^2 - (q1 + q2)^2 / 2b^2), S = 0, on a 2D grid.
EpistemicState entangled_gaussian_state(const Grid& g, double a, double b);

/// A smooth, node-free 1D state:
///   rho ∝ exp(-(q - c)^2 / 2 s^2 + sum_k a_k cos(k q / s + phi_k))
///   S   = slope q + sum_k beta_k sin(kappa_k q + psi_k)
/// Parameters are drawn once and the state can be sampled on any grid.
struct SmoothStateParams {
  double centre = 0.0;
  double width = 1.0;
  std::vector<double> amplitude, phase;
  double slope = 0.0;
  std::vector<double> beta, kappa, shift;

  static SmoothStateParams draw(Rng& rng);
  EpistemicState on(const Grid& g) const;
};

/// 1D observable with random smooth metric, gauge, linear and potential terms.
QuadraticObservable random_observable(Rng& rng);

// Wave functions ----------------------------------------------------------

/// Rescale to unit norm by quadrature.
ComplexField normalized(ComplexField psi);

/// Normalised Gaussian packet exp(-(q - centre)^2 / 4 sigma^2 + i p0 q / hbar) (1D).
ComplexField gaussian_packet(const Grid& g, double centre, double sigma, double p0, double hbar);

/// sqrt(2 / L) sin(n pi (q - lower) / L), n >= 1.
ComplexField box_mode(const Grid& g, int n);

/// Hermite function n of the oscillator with the given mass and frequency.
ComplexField harmonic_mode(const Grid& g, int n, double mass, double omega, double hbar);

/// exp(2 pi i k (q - lower) / L) / sqrt(L) on a periodic axis.
ComplexField plane_wave_mode(const Grid& g, int k);

/// (x + i y)^m exp(-r^2 / 2 w^2), normalised, on a 2D grid (axes x, y).
/// Negative m uses (x - i y)^|m|.
ComplexField angular_harmonic(const Grid& g, int m, double width);

/// psi1(q1) psi2(q2) on the product grid.
ComplexField product_state(const ComplexField& a, const ComplexField& b);

/// Product grid: the axes of a followed by the axes of b.
Grid product_grid(const Grid& a, const Grid& b);

}  // namespace ontic
