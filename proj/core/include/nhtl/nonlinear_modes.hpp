#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nhtl/lattice.hpp"

namespace nhtl {

/// One self-consistent solution of H(psi) psi = omega psi at fixed intensity.
/// `converged` means the fixed-point gap fell below the state tolerance AND
/// the eigen residual is small on the natural scale tol * max(1, |H| sqrt(I)).
struct Mode {
  Complex omega;
  ComplexVector state;
  double intensity = 0.0;
  double residual = 0.0;  // |H(psi) psi - omega psi|_2
  bool converged = false;
  int iterations = 0;
};

enum class ModeClass { tzm, in_gap_nonzero, bulk };
std::string to_string(ModeClass c);

struct SolverOptions {
  double tol = 1e-10;    // sup-norm fixed-point gap
  int max_iter = 10000;
  double mixing = 0.5;   // under-relaxation; halved whenever the gap grows
  int threads = 1;
};

/// Bounds of the zero-centered gap in the linear (I -> 0) spectrum, used to
/// classify in-gap modes. Eigenvalues within zero_tol of 0 are the zero modes
/// themselves and do not count as gap edges.
struct LinearGap {
  double lower = 0.0;
  double upper = 0.0;
  double zero_tol = 0.0;
  double h_norm = 0.0;
};

/// Self-consistent eigensolver over a bond Hamiltonian. When a positive
/// diagonal rescaling `similarity` symmetrizes every bond, diagonalization
/// runs on the real symmetric rescaled matrix (tridiagonal for chains), which
/// is roughly an order of magnitude faster than the general complex solver.
class ModeSolver {
 public:
  explicit ModeSolver(BondHamiltonian ham, std::optional<RealVector> similarity = std::nullopt);

  /// Fixed point from one seed: build H(psi), diagonalize, keep the
  /// eigenvector of maximal overlap with the current iterate, rescale to the
  /// target intensity, mix, repeat. Never throws on non-convergence; the
  /// returned Mode carries converged=false instead.
  Mode solve(double target_intensity, const ComplexVector& seed, const SolverOptions& opts) const;

  /// One Mode per eigenvector of H(seed state), each relaxed independently.
  std::vector<Mode> solve_all(double target_intensity, const ComplexVector& seed,
                              const SolverOptions& opts) const;

  /// Eigen decomposition at a frozen state (columns = eigenvectors).
  void diagonalize(const ComplexVector& state, ComplexVector* omegas, ComplexMatrix* vectors) const;

  LinearGap linear_gap() const;
  const BondHamiltonian& hamiltonian() const { return ham_; }
  bool fast_path() const { return fast_; }

 private:
  BondHamiltonian ham_;
  bool fast_ = false;
  bool polish_ = false;  // raw-frame inverse-iteration refinement of candidates
  RealVector s_, s_inv_;
};

ModeSolver make_solver(const LatticeSpec1D& spec);
ModeSolver make_solver(const DisorderedLattice& lattice);
ModeSolver make_solver(const LatticeSpec2D& spec);

/// Self-consistent modes at one intensity, one per eigenvector of the
/// Hamiltonian built from the seed state. Unconverged candidates are returned
/// flagged, never dropped.
std::vector<Mode> solve_modes_at_intensity(const LatticeSpec1D& spec, double target_intensity,
                                           const ComplexVector& seed_state, double tol,
                                           int max_iter, int threads = 1);

struct BranchResult {
  std::vector<double> intensity_grid;
  std::vector<Mode> modes;
  std::vector<ModeClass> classification;
  bool branch_lost = false;
  int lost_index = -1;        // grid index where overlap continuity failed
};

/// Continuation of the zero-mode branch over an ascending intensity grid,
/// seeded from the linear zero mode; each converged state seeds the next grid
/// point. Continuity requires normalized overlap > 0.5 between neighbors.
BranchResult trace_tzm_branch(const LatticeSpec1D& spec, const std::vector<double>& intensity_grid,
                              const SolverOptions& opts = {});
BranchResult trace_tzm_branch(const ModeSolver& solver, const LinearGap& gap,
                              const std::vector<double>& intensity_grid, const SolverOptions& opts);

ModeClass classify_mode(const Mode& mode, const LinearGap& gap, double h_norm);

/// Zero mode at fixed intensity, solved as a boundary-value problem: damped
/// Newton on the minority-sublattice rows of H(psi) psi = 0 plus the
/// intensity constraint, with the state confined to the chiral-positive
/// sector. Unlike the amplitude sweep this is stable against the exponential
/// growth of the leftward map, and unlike the plain fixed point it holds the
/// zero branch where the effective chain turns critical.
Mode solve_zero_mode(const BondHamiltonian& ham, const RealVector& chiral,
                     double target_intensity, const ComplexVector& seed,
                     const SolverOptions& opts = {});
Mode solve_zero_mode(const LatticeSpec1D& spec, double target_intensity,
                     const ComplexVector& seed, const SolverOptions& opts = {});

/// Exact zero mode built by the right-to-left amplitude recursion; all b-site
/// amplitudes vanish. boundary_amplitude sits on the rightmost a-site.
/// Throws on overflow (any amplitude beyond 1e150).
ComplexVector tzm_recursion(const LatticeSpec1D& spec, double boundary_amplitude);

/// Boundary amplitude such that the recursion state carries the requested
/// total intensity, found by bracketed bisection after verifying that
/// intensity grows monotonically over the bracket. Near the plateau the
/// intensity is quantized by the double-precision grid of boundary
/// amplitudes; when the quantization exceeds rel_tol the shoot reports
/// failure rather than returning an off-target state.
ComplexVector intensity_shoot(const LatticeSpec1D& spec, double target_intensity,
                              double rel_tol = 1e-8);

/// Closed-form bulk plateau amplitudes (reciprocal side, nonreciprocal side).
/// Requires constant background hoppings, alpha, beta > 0, tau > t_bar and
/// J + delta > lambda_bar.
std::pair<double, double> plateau_heights(const LatticeSpec1D& spec);

enum class ProfileShape { flat, square, triangle, cosine, custom };
std::string to_string(ProfileShape s);
ProfileShape profile_shape_from_string(const std::string& s);

/// Target |a_j| samples over cells 1..n_cells. The interface step is fixed by
/// t_d (|a_{N+1}| = tau |a_N| / t_d), so generated targets rescale the
/// reciprocal-side samples to satisfy it exactly.
struct ProfileTarget {
  ProfileShape shape = ProfileShape::custom;
  std::vector<double> samples;
};

ProfileTarget make_profile_target(ProfileShape shape, const LatticeSpec1D& spec);
ProfileTarget make_profile_target(const std::vector<double>& samples, const LatticeSpec1D& spec);

struct DesignedHoppings {
  std::vector<double> t_bar;
  std::vector<double> lambda_bar;
};

/// Inverts the zero-mode recursion: hoppings that make the recursion
/// reproduce the target samples. Throws (naming the first offending cell)
/// when a designed hopping would be non-positive.
DesignedHoppings design_hoppings(const LatticeSpec1D& spec, const ProfileTarget& target);

/// Spec with the designed hoppings substituted in.
LatticeSpec1D apply_design(const LatticeSpec1D& spec, const DesignedHoppings& design);

/// (sum |psi|^2)^2 / (L sum |psi|^4), in (0, 1]. Throws on the zero state.
double participation_ratio(const ComplexVector& state);

/// Intensity carried by the nonreciprocal chain (sites beyond 2N), as a
/// fraction of the total.
double nonhermitian_weight(const LatticeSpec1D& spec, const ComplexVector& state);

/// Normalized overlap |<a|b>| / (|a| |b|).
double state_overlap(const ComplexVector& a, const ComplexVector& b);

/// Ascending intensity grid for continuation runs: roughly amplitude-linear
/// between lo and hi inclusive.
std::vector<double> continuation_grid(double lo, double hi, int n);

}  // namespace nhtl
