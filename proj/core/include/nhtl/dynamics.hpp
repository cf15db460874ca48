#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nhtl/lattice.hpp"

namespace nhtl {

/// External drive and staggered losses. The pump profile lives on the a-sites
/// of the nonreciprocal chain only (cells N+1 .. (L-1)/2); kappa_a / kappa_b
/// are onsite loss rates on the two sublattices across the whole lattice.
struct PumpConfig {
  ComplexVector profile;   // length L
  double strength = 0.0;   // xi
  double frequency = 0.0;  // drive frequency
  double kappa_a = 0.0;
  double kappa_b = 0.0;

  /// Throws std::invalid_argument when the profile support strays off the
  /// allowed sites or a loss rate is negative.
  void validate(const LatticeSpec1D& spec) const;

  /// Unit pump on the m-th a-site of the nonreciprocal chain (m = 1 is the
  /// first cell past the interface, flat site 2N+1).
  static PumpConfig single_site(const LatticeSpec1D& spec, int m, double strength,
                                double frequency, double kappa_a, double kappa_b);
};

/// Pumped lossy chain: d(phi)/dt = -i (H(phi) + H_loss) phi + xi P e^{-i w t}.
class DrivenSystem {
 public:
  DrivenSystem(const LatticeSpec1D& spec, const PumpConfig& pump);

  ComplexVector rhs(double t, const ComplexVector& phi) const;
  const BondHamiltonian& hamiltonian() const { return ham_; }
  const ComplexVector& loss_diagonal() const { return loss_; }  // -i kappa entries
  ComplexVector pump_drive(double t) const;
  double kappa_max() const { return kappa_max_; }
  double frequency() const { return omega_; }
  int n_sites() const { return ham_.n_sites(); }

 private:
  BondHamiltonian ham_;
  ComplexVector loss_;
  ComplexVector pump_amp_;  // xi * P
  double omega_ = 0.0;
  double kappa_max_ = 0.0;
};

struct EvolveOptions {
  double dt = 1e-3;
  double t_end = 0.0;
  int store_stride = 0;           // 0: choose so ~1000 samples are kept
  bool stop_when_steady = true;
  double steady_tol = 1e-8;       // sup-norm change over one trailing window
  double steady_window = 10.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ComplexVector> states;
  bool steady = false;
  ComplexVector steady_state;  // state at the end of integration
  double end_time = 0.0;
  bool diverged = false;
  double blowup_time = 0.0;
};

/// Fixed-step 4th-order integration; the state-dependent hoppings are
/// re-evaluated at every stage. Preconditions: dt > 0 and
/// dt * (|H(initial)| + max kappa) < 0.5 (checked). Divergence (|phi| beyond
/// 1e6) stops integration and is reported via the trajectory flags.
Trajectory evolve(const LatticeSpec1D& spec, const PumpConfig& pump, const EvolveOptions& opts,
                  const ComplexVector& initial);

/// Integration core: observer(step, t, phi) fires every `observe_stride`
/// steps (and at the first/last step). Returns the final state.
ComplexVector evolve_observed(const DrivenSystem& system, const EvolveOptions& opts,
                              ComplexVector phi, int observe_stride,
                              const std::function<void(std::int64_t, double, const ComplexVector&)>& observer,
                              bool* steady_out = nullptr, bool* diverged_out = nullptr,
                              double* end_time_out = nullptr);

struct SteadyStateOptions {
  double tol = 1e-12;       // relative sup-norm change of the iterate
  int max_iter = 400;       // per homotopy rung
  int homotopy_steps = 50;  // pump strength ramp from 0
};

struct SteadyResult {
  ComplexVector state;
  double residual = 0.0;  // |(H(phi) + H_loss - w) phi + i xi P|_2
  bool converged = false;
  int iterations = 0;
};

/// Self-consistent steady state of the driven system, reached by ramping the
/// pump strength from zero (the branch dynamical pumping from vacuum selects).
SteadyResult steady_state(const LatticeSpec1D& spec, const PumpConfig& pump,
                          const SteadyStateOptions& opts = {});

/// Inner fixed point only, seeded from `start` at the pump's full strength.
/// Used when sweeping pump strengths: each point seeds the next.
SteadyResult steady_state_from(const LatticeSpec1D& spec, const PumpConfig& pump,
                               const ComplexVector& start, const SteadyStateOptions& opts = {});

/// Steady-equation residual at an arbitrary state.
double steady_residual(const LatticeSpec1D& spec, const PumpConfig& pump,
                       const ComplexVector& state);

struct NoiseOptions {
  int n_realizations = 200;
  double noise_lo = -3.0;
  double noise_hi = 3.0;
  bool complex_noise = false;  // default: real perturbations
  std::uint64_t master_seed = 0;
  double t_end = 0.0;
  double dt = 1e-3;
  int sample_stride = 0;  // 0: ~400 samples
  int threads = 1;
};

struct RobustnessReport {
  std::vector<double> times;
  std::vector<double> chi_mean;
  std::vector<double> chi_std;
  int n_realizations = 0;
};

/// Perturbs the steady state with i.i.d. uniform noise, evolves each
/// realization, and reports the overlap similarity chi(t) (mean and standard
/// deviation over realizations). Realizations are seeded by
/// (master_seed, index) and may run concurrently. Throws on a zero reference.
RobustnessReport noise_robustness(const LatticeSpec1D& spec, const PumpConfig& pump,
                                  const ComplexVector& steady, const NoiseOptions& opts);

struct LongRangeOptions {
  std::vector<double> xi_grid;
  double kappa_a = 0.01;
  double kappa_b = 0.5;
  double frequency = 0.0;
  int pump_site_m = 1;         // a-site index within the nonreciprocal chain
  double t_end = 600.0;
  double dt = 5e-3;
  double rel_tol = 0.10;       // within 10% of the plateau target counts as covered
  int margin_cells = 3;        // cells excluded near chain ends and the interface
  int threads = 1;
};

struct LongRangeReport {
  std::vector<double> xi;
  std::vector<double> coverage_first, coverage_second;
  std::vector<double> intensity_first, intensity_second;
};

/// Pumps both lattices from vacuum at each grid strength and reports what
/// fraction of the shared long-range pattern (union of the two lattices'
/// closed-form plateau references) each steady state reaches. Column order
/// follows argument order.
LongRangeReport long_range_excitation_compare(const LatticeSpec1D& spec_first,
                                              const LatticeSpec1D& spec_second,
                                              const LongRangeOptions& opts);

/// Plateau reference sites for one spec: pairs (flat site index, target
/// amplitude), covering interior a-sites of every chain side whose closed-form
/// plateau exists (alpha > 0 resp. beta > 0 with constant backgrounds).
std::vector<std::pair<int, double>> plateau_reference_sites(const LatticeSpec1D& spec,
                                                            int margin_cells);

}  // namespace nhtl
