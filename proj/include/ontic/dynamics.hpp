#pragma once

#include "ontic/epistemic.hpp"
#include "ontic/observable.hpp"

#include <iosfwd>
#include <string_view>
#include <utility>
#include <vector>

namespace ontic {

/// H = sum_i (p_i - A_i(q))^2 / 2 m_i + V(q).
struct Hamiltonian {
  std::vector<double> masses;
  std::vector<Coefficient> gauge;
  Coefficient potential;

  explicit Hamiltonian(std::vector<double> masses, Coefficient potential = 0.0);

  static Hamiltonian free(std::size_t dims, double mass = 1.0);
  /// Isotropic well m w^2 |q - centre|^2 / 2 about the origin.
  static Hamiltonian harmonic(std::size_t dims, double mass, double omega);

  std::size_t dims() const { return masses.size(); }
  Hamiltonian& set_gauge(std::size_t axis, Coefficient a);
  bool has_gauge() const;

  /// The same function as a QuadraticObservable (metric delta_ij / m_i).
  QuadraticObservable observable() const;
  /// Classical value at a phase-space point.
  double operator()(const Point& q, const Point& p) const;
};

enum class Method { schrodinger, madelung, classical_hj };
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

/// Diagnostics recorded along a run. Rows are stored every
/// `record_stride` steps and always at t = 0 and at the final time;
/// `norm_drift` has one entry per step.
struct EvolutionReport {
  Method method = Method::schrodinger;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<double> times;
  std::vector<double> norm;
  std::vector<double> energy;
  std::vector<Point> mean_q;
  std::vector<Point> mean_p;
  std::vector<double> norm_drift;

  double max_norm_drift() const;
  /// max |E(t) - E(0)| / |E(0)| (absolute when E(0) = 0).
  double energy_defect() const;
  /// Columns: time, norm, energy, then <q_i> and <p_i> per axis.
  void write_csv(std::ostream& os) const;
};

struct StepControl {
  double T = 1.0;
  /// 0 selects the default step of each solver.
  double dt = 0.0;
  std::size_t record_stride = 1;
  /// 0 disables snapshots.
  std::size_t snapshot_stride = 0;
};

/// Bound on |norm(t + dt) - norm(t)| for the unitary solvers.
inline constexpr double kMaxNormDrift = 1e-10;

template <typename State>
struct Run {
  State state;
  EvolutionReport report;
  std::vector<std::pair<double, State>> snapshots;
};

/// Strang splitting: spectral kinetic factors on periodic axes (gauge must
/// be constant there), Crank-Nicolson with Peierls phases on vanishing
/// axes. A 1D vanishing grid is stepped by Crank-Nicolson on the full H.
/// Throws InstabilityError if the norm changes by more than kMaxNormDrift
/// in one step or the field stops being finite.
Run<ComplexField> evolve_schrodinger(const ComplexField& psi0, const Hamiltonian& H, double hbar,
                                     const StepControl& control);

/// Default Schrodinger step: 0.1 m dq^2 / hbar, also limited by the potential
/// range so the potential phase per step stays below 0.1.
double default_schrodinger_step(const Grid& g, const Hamiltonian& H, double hbar);

/// <psi|H_h|psi> for the discrete operator the propagator uses.
double schrodinger_energy(const ComplexField& psi, const Hamiltonian& H, double hbar);

/// Time derivatives of (log rho, S) from the continuity equation and the
/// Hamilton-Jacobi equation with the quantum term hbar^2/2m (R''/R).
struct MadelungRates {
  Eigen::VectorXd log_density;
  Eigen::VectorXd phase;
};
MadelungRates madelung_rates(const EpistemicState& state, const Hamiltonian& H, double hbar);

/// RK4 on (log rho, S) with finite differences. hbar = 0 drops the quantum
/// term and gives the classical Hamilton-Jacobi flow on the grid.
/// Throws NodeError when a node forms (an interior local minimum of rho
/// below the node threshold, or a non-finite value) and CflError when the
/// step is too long for the current velocities.
///
/// Round-off in log rho grows like max(rho) / rho, so after every step the
/// tails below the node threshold are refilled by quadratic continuation
/// of the resolved region; they carry no weight in any reported quantity.
Run<EpistemicState> evolve_madelung(const EpistemicState& state0, const Hamiltonian& H, double hbar,
                                    const StepControl& control);

double default_madelung_step(const EpistemicState& state, const Hamiltonian& H, double hbar);

/// A characteristic: its path, momentum and action at the recorded times.
struct Trajectory {
  std::vector<double> times;
  std::vector<Point> q;
  std::vector<Point> p;
  std::vector<double> action;
};

struct ClassicalRun : Run<EpistemicState> {
  std::vector<Trajectory> trajectories;
};

/// Method of characteristics. One characteristic starts at every grid point
/// with rho above the node threshold, carrying weight rho dV, momentum dS
/// and action S. Back on the grid, rho comes from mass conservation along
/// each characteristic (rho0 over the Jacobian of the lattice map) and S
/// from the transported action, both interpolated. In addition `n_traj`
/// characteristics started from samples of rho are recorded in full.
/// Throws CausticError when neighbouring characteristics cross.
ClassicalRun evolve_classical_hj(const EpistemicState& state0, const Hamiltonian& H, const StepControl& control,
                                 std::size_t n_traj = 0, std::uint64_t seed = 0);

/// Average energy of each state by quadrature (hbar = 0 gives the classical average).
std::vector<double> average_energy_series(const std::vector<EpistemicState>& states, const Hamiltonian& H,
                                          double hbar);

struct ClassicalLimitRow {
  double hbar = 0.0;
  /// max over recorded times of |<q>_Q - <q>_C| and |<p>_Q - <p>_C|
  double mean_q_divergence = 0.0;
  double mean_p_divergence = 0.0;
  /// rho-weighted RMS difference of the phase fields at the final time
  double phase_divergence = 0.0;
};

struct ClassicalLimitReport {
  std::vector<ClassicalLimitRow> rows;

  bool phase_monotone() const;
  /// phase_divergence[k] / phase_divergence[k + 1]
  std::vector<double> phase_ratios() const;
};

/// For each hbar (decreasing), evolves (rho0, S0) by the Madelung equations
/// and by characteristics to time T and compares them.
ClassicalLimitReport classical_limit_check(const EpistemicState& state0, const Hamiltonian& H,
                                           const std::vector<double>& hbars, const StepControl& control);

}  // namespace ontic
