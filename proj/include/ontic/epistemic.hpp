#pragma once

#include "ontic/calculus.hpp"
#include "ontic/errors.hpp"
#include "ontic/field.hpp"
#include "ontic/parallel.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace ontic {

/// Nodes are points where rho <= kNodeFraction * max(rho).
inline constexpr double kNodeFraction = 1e-12;

/// Tolerance on the unit normalisation of a density.
inline constexpr double kNormTolerance = 1e-8;

enum class StateKind { classical, quantum };
enum class XiLaw { two_point, gaussian };

std::string_view to_string(StateKind k);
std::string_view to_string(XiLaw l);
StateKind state_kind_from_string(std::string_view s);
XiLaw xi_law_from_string(std::string_view s);

/// Distribution of the global variable xi: zero mean, variance hbar^2.
/// Only those two moments are fixed; `law` picks a concrete distribution.
struct XiModel {
  double hbar = 1.0;
  XiLaw law = XiLaw::two_point;
  std::uint64_t seed = 0;

  double draw(Rng& rng) const {
    if (law == XiLaw::two_point) return (rng() >> 63) ? hbar : -hbar;
    return hbar * standard_normal(rng);
  }
};

/// n i.i.d. draws of xi; deterministic in (model.seed, n).
std::vector<double> sample_xi(const XiModel& model, std::size_t n);

/// The pair (rho, S) on a grid.
///
/// On periodic axes S may be multivalued: `phase_jump(a)` is the amount S
/// gains when a line along axis a is continued once around the period.
/// `phase_mask` marks points whose phase was undefined (psi = 0) when the
/// state was built from a wave function.
class EpistemicState {
 public:
  EpistemicState(ScalarField density, ScalarField phase, StateKind kind = StateKind::quantum,
                 std::vector<double> phase_jump = {});

  /// Rescales the density to unit mass before validating.
  static EpistemicState normalized(ScalarField density, ScalarField phase, StateKind kind = StateKind::quantum,
                                   std::vector<double> phase_jump = {});

  const Grid& grid() const { return density_.grid(); }
  const ScalarField& density() const { return density_; }
  const ScalarField& phase() const { return phase_; }
  StateKind kind() const { return kind_; }
  double phase_jump(std::size_t axis) const { return phase_jump_.at(axis); }
  const std::vector<double>& phase_jumps() const { return phase_jump_; }

  const std::vector<bool>& phase_mask() const { return phase_mask_; }
  void set_phase_mask(std::vector<bool> mask);

  /// Net phase circulation around the boundary of the (axis0, axis1) plane
  /// through the grid centre, in units of 2 pi hbar. Set by from_wavefunction.
  int circulation() const { return circulation_; }
  void set_circulation(int c) { circulation_ = c; }

  double node_threshold() const { return kNodeFraction * density_.values().maxCoeff(); }

  EpistemicState with_kind(StateKind k) const {
    EpistemicState s = *this;
    s.kind_ = k;
    return s;
  }

 private:
  ScalarField density_;
  ScalarField phase_;
  StateKind kind_;
  std::vector<double> phase_jump_;
  std::vector<bool> phase_mask_;
  int circulation_ = 0;
};

/// dS/dq_axis, continuing S across the periodic seam by its phase jump.
ScalarField phase_gradient(const EpistemicState& state, std::size_t axis);

/// Per-axis d_i rho / rho with node bookkeeping. At nodes whose density
/// gradient vanishes the ratio is set to 0; nodes with a nonzero gradient
/// are flagged and any evaluation there throws NodeError.
struct LogDensityGradient {
  std::vector<ScalarField> ratio;
  std::vector<bool> singular;

  explicit LogDensityGradient(const EpistemicState& state);
  bool any_singular() const;
};

/// One ontic state: a configuration, the value of xi it was drawn with, and
/// the momentum the restriction assigns to it.
struct OnticSample {
  Point q;
  double xi = 0.0;
  Point p;
};

/// p_i(q; xi) = d_i S + (xi / 2) d_i rho / rho on the whole grid.
/// Throws NodeError when any grid point is a node with nonzero density gradient.
std::vector<ScalarField> momentum_field(const EpistemicState& state, double xi);

/// Gridded ingredients of the restricted momentum, evaluated at arbitrary
/// points by multilinear interpolation.
class MomentumLaw {
 public:
  explicit MomentumLaw(const EpistemicState& state);

  const Grid& grid() const { return grad_s_.front().grid(); }
  std::size_t dims() const { return grad_s_.size(); }

  /// Throws NodeError if the stencil touches a singular node.
  void check(const InterpolationStencil& st) const;
  /// Mean momentum d_i S at the stencil.
  Point drift(const InterpolationStencil& st) const;
  /// d_i rho / rho at the stencil.
  Point log_gradient(const InterpolationStencil& st) const;
  /// Restricted momentum with a single (nonseparable) xi.
  Point momentum(const InterpolationStencil& st, double xi) const;

 private:
  std::vector<ScalarField> grad_s_;
  LogDensityGradient log_grad_;
};

/// Draws configurations from rho: inverse CDF in 1D, rejection against a
/// uniform envelope otherwise. Within a cell the point is uniform.
class PositionSampler {
 public:
  explicit PositionSampler(const ScalarField& density);
  Point draw(Rng& rng) const;

 private:
  Grid grid_;
  std::vector<double> cdf_;
  std::vector<double> accept_;
  double max_ = 0.0;
};

/// n ontic samples with q ~ rho, xi ~ mu, p from the restriction.
/// Deterministic in (model.seed, n).
std::vector<OnticSample> draw_ensemble(const EpistemicState& state, const XiModel& model, std::size_t n);

/// The density permitted for the xi-proportional momentum field
/// p(q; xi) = xi f(q) with constant S: d rho / rho = 2 f. S is set to 0.
/// Throws NonNormalizable if exp(2 int f) cannot be normalised on the grid.
EpistemicState solve_density_for_field(const ScalarField& f);

/// Multi-dimensional form: d_i rho / rho = 2 f_i, integrated axis by axis
/// from the first grid point (f must be curl-free for a consistent result).
EpistemicState solve_density_for_field(const std::vector<ScalarField>& f);

/// psi = sqrt(rho) exp(i S / hbar). Requires kind == quantum.
ComplexField to_wavefunction(const EpistemicState& state, double hbar);

/// rho = |psi|^2, S = hbar arg(psi) unwrapped axis by axis from the first
/// grid point. Points where psi vanishes are masked and receive S from
/// their neighbours. Periodic windings are recorded as phase jumps.
EpistemicState from_wavefunction(const ComplexField& psi, double hbar);

/// hbar Im(psi* d psi) / |psi|^2: the phase gradient without unwrapping.
/// Returns 0 where |psi|^2 is at or below the node threshold.
ScalarField current_phase_gradient(const ComplexField& psi, std::size_t axis, double hbar);

}  // namespace ontic
