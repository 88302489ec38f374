#pragma once

#include "ontic/epistemic.hpp"
#include "ontic/field.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ontic {

/// Orthonormality tolerance on the eigenfield Gram matrix.
inline constexpr double kGramTolerance = 1e-8;
/// Largest residual of a state after projection onto the eigenbasis.
inline constexpr double kSpanTolerance = 1e-6;
/// Largest integral of |chi_j| |chi_k| for packets that count as separated.
inline constexpr double kOverlapTolerance = 1e-6;
/// Half-width of a pointer support in packet standard deviations.
inline constexpr double kSupportSigmas = 6.0;

/// Spectral data of a system observable: eigenvalues and orthonormal
/// eigenfields on one grid. Degenerate eigenvalues are allowed.
class Eigensystem {
 public:
  /// Throws std::invalid_argument unless the fields share a grid and their
  /// Gram matrix is the identity within kGramTolerance.
  Eigensystem(std::vector<double> eigenvalues, std::vector<ComplexField> fields, std::string label = {});

  std::size_t size() const { return values_.size(); }
  const Grid& grid() const { return fields_.front().grid(); }
  double eigenvalue(std::size_t k) const { return values_.at(k); }
  const std::vector<double>& eigenvalues() const { return values_; }
  const ComplexField& field(std::size_t k) const { return fields_.at(k); }
  const std::string& label() const { return label_; }

  Eigen::MatrixXcd gram() const;
  /// sum_k c_k phi_k
  ComplexField superposition(const Eigen::VectorXcd& c) const;

 private:
  std::vector<double> values_;
  std::vector<ComplexField> fields_;
  std::string label_;
};

/// Infinite-well modes n on a 1D grid; eigenvalues are the energies.
Eigensystem box_eigensystem(const Grid& g, const std::vector<int>& modes, double mass, double hbar);
/// Oscillator modes n; eigenvalues hbar omega (n + 1/2).
Eigensystem harmonic_eigensystem(const Grid& g, const std::vector<int>& modes, double mass, double omega,
                                 double hbar);
/// Angular harmonics m on a 2D grid; eigenvalues m hbar of L_z.
Eigensystem angular_eigensystem(const Grid& g, const std::vector<int>& ms, double width, double hbar);
/// Plane waves exp(2 pi i k q / L) on a periodic axis; eigenvalues hbar 2 pi k / L of p.
Eigensystem plane_wave_eigensystem(const Grid& g, const std::vector<int>& ks, double hbar);

struct MeasurementSetup {
  Eigensystem system;
  ComplexField pointer;  // normalised, 1D
  double coupling = 1.0;
  double duration = 1.0;

  MeasurementSetup(Eigensystem system, ComplexField pointer, double coupling, double duration);

  double pointer_centre() const;
  double pointer_sigma() const;
  /// g o_k T
  double shift(std::size_t k) const { return coupling * system.eigenvalue(k) * duration; }
};

/// Gaussian pointer with sigma = g min|o_j - o_k| T / 12, centred at 0, on a
/// grid covering every shifted support with margin (8 points per sigma).
ComplexField default_pointer(const std::vector<double>& eigenvalues, double coupling, double duration);

/// Pointer grid and Gaussian packet of width sigma covering the shifted supports.
ComplexField gaussian_pointer(const std::vector<double>& eigenvalues, double coupling, double duration,
                              double sigma);

/// c_k = <phi_k|psi>. Throws SpanError when the residual norm exceeds kSpanTolerance.
Eigen::VectorXcd decompose(const ComplexField& psi, const Eigensystem& system);

/// psi(q_S, q_P; T) = sum_k c_k phi_k(q_S) chi_k(q_P), chi_k the pointer
/// translated by g o_k T. Branches with equal eigenvalue share an outcome.
class JointState {
 public:
  JointState(MeasurementSetup setup, Eigen::VectorXcd coefficients);

  const MeasurementSetup& setup() const { return setup_; }
  const Eigen::VectorXcd& coefficients() const { return c_; }
  const ComplexField& packet(std::size_t k) const { return packets_.at(k); }

  /// Distinct eigenvalues in increasing order and the branches of each.
  const std::vector<double>& outcomes() const { return outcomes_; }
  const std::vector<std::vector<std::size_t>>& branches() const { return branches_; }
  /// Lambda_j = pointer centre + g o_j T -/+ 6 sigma
  std::pair<double, double> support(std::size_t outcome) const;

  /// max over outcome pairs of int |chi_j| |chi_k|
  double max_overlap() const { return overlap_; }
  bool separated() const { return overlap_ <= kOverlapTolerance; }
  /// Text of any separation warning (empty when separated).
  const std::vector<std::string>& warnings() const { return warnings_; }

  double norm() const { return c_.squaredNorm(); }

  /// The amplitude on the product grid (system axes, then the pointer axis).
  ComplexField joint() const;
  /// int |psi|^2 dq_S, from the joint amplitude.
  ScalarField pointer_marginal() const;

 private:
  MeasurementSetup setup_;
  Eigen::VectorXcd c_;
  std::vector<ComplexField> packets_;
  std::vector<double> outcomes_;
  std::vector<std::vector<std::size_t>> branches_;
  double overlap_ = 0.0;
  std::vector<std::string> warnings_;
};

/// Exact evolution under H = g O_S p_P for time T: each branch's pointer is
/// translated spectrally. Overlapping packets are reported through
/// JointState::warnings, not thrown.
JointState evolve_measurement(const ComplexField& psi, const MeasurementSetup& setup);

struct BornResult {
  std::vector<double> outcomes;
  /// int_{Lambda_j} dq_P int dq_S |psi|^2 on the joint grid
  std::vector<double> quadrature;
  /// sum over the outcome's branches of |c_k|^2
  std::vector<double> coefficient;
  /// max over j and k != l of |c_k c_l int_{Lambda_j} chi_k* chi_l|
  double cross_term_bound = 0.0;

  double max_discrepancy() const;
  double total() const;
};

/// Throws OverlapError unless the joint state is separated.
BornResult born_probabilities(const JointState& joint);

struct Outcome {
  std::size_t index = 0;  // into JointState::outcomes()
  double eigenvalue = 0.0;
  /// normalised projection of the system state onto the outcome's eigenspace
  ComplexField state;
};

/// Outcome indices drawn from the Born quadrature probabilities; deterministic in (seed, n).
std::vector<std::size_t> sample_outcomes(const JointState& joint, std::size_t n, std::uint64_t seed);
/// One draw with its effective system state. Throws OverlapError unless separated.
Outcome sample_outcome(const JointState& joint, std::uint64_t seed);

/// Direct integration of i hbar d_t psi = g p_S p_P psi on a periodic 2D
/// grid (system axis, pointer axis): central differences in space, RK4 in time.
ComplexField evolve_joint_grid(const ComplexField& psi, const ComplexField& pointer, double coupling,
                               double duration, double hbar, double dt);

// Angular momentum ---------------------------------------------------------

struct AngularScenario {
  std::vector<int> m;
  std::vector<Complex> weights;  // normalised internally
  double coupling = 1.0;
  double duration = 1.0;
  double hbar = 1.0;
  double width = 1.0;
  /// 2D system grid; empty selects +-6 width with 64 points per axis
  std::vector<Axis> system_axes;
  /// pointer packet; empty selects default_pointer
  ComplexField pointer;
};

struct AngularReport {
  std::vector<double> expected_centres;  // pointer centre + g m hbar T
  std::vector<double> packet_centres;    // mean of the pointer marginal over each support
  /// max |packet - expected| / (g hbar T)
  double centre_error = 0.0;
  /// Rayleigh quotient of L_z on each harmonic (Richardson-extrapolated), in units of hbar
  std::vector<double> lz_eigenvalues;
  /// <L_z> / hbar of the state before the measurement; need not be an integer
  double ensemble_lz = 0.0;
  /// every recorded outcome is an integer multiple of g hbar T
  bool discrete = false;
  std::size_t schmidt_rank_initial = 0;
  std::size_t schmidt_rank_final = 0;
};

struct AngularRun {
  JointState joint;
  BornResult born;
  AngularReport report;
};

AngularRun angular_momentum_scenario(const AngularScenario& scenario);

/// Characteristics of the classical interaction H = g (x p_y - y p_x) p_P
/// on a 3D grid (x, y, pointer) with no quantum potential. Momenta start at
/// the current field hbar Im(psi* grad psi) / |psi|^2, so a winding phase is
/// handled without a branch cut. Density is carried by mass deposition
/// (cloud in cell). Throws CausticError when lattice neighbours cross and
/// std::out_of_range when mass leaves a vanishing pointer axis.
EpistemicState classical_counterfactual_hj(const ComplexField& psi, double coupling, double duration, double hbar,
                                           std::size_t steps = 64);

/// rho-weighted RMS of the hbar^2 term the averaged interaction adds to the
/// classical Hamilton-Jacobi equation:
///   hbar^2 g / 4 (x d_y rho - y d_x rho) d_P rho / rho^2.
double interaction_quantum_term(const ComplexField& psi, double coupling, double hbar);

/// Number of local maxima of a 1D density that stand at least
/// `prominence` * max above the lower of the minima on either side.
std::size_t count_modes(const ScalarField& density, double prominence = 0.05);

/// Marginal of a density over all axes but the last.
ScalarField last_axis_marginal(const ScalarField& density);

}  // namespace ontic
