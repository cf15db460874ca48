#include "nhtl/nonlinear_modes.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nhtl/localizer.hpp"
#include "nhtl/parallel.hpp"

namespace nhtl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Output gauge: the largest-magnitude amplitude is made real positive.
ComplexVector gauge_fix(ComplexVector v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const Complex z = v[imax];
  const double a = std::abs(z);
  if (a > 0.0) v *= std::conj(z) / a;
  return v;
}

// Iteration gauge: rotate v onto the reference. Plateau states have many
// near-equal amplitudes of alternating sign, so an entry-anchored gauge can
// flip between iterations; aligning to the current iterate cannot.
ComplexVector phase_align(ComplexVector v, const ComplexVector& reference) {
  const Complex z = reference.dot(v);
  const double a = std::abs(z);
  if (a > 0.0) v *= std::conj(z) / a;
  return v;
}

int select_by_overlap(const ComplexMatrix& vectors, const ComplexVector& reference) {
  Eigen::Index k = 0;
  (vectors.adjoint() * reference).cwiseAbs().maxCoeff(&k);
  return static_cast<int>(k);
}

}  // namespace

std::string to_string(ModeClass c) {
  switch (c) {
    case ModeClass::tzm: return "tzm";
    case ModeClass::in_gap_nonzero: return "in_gap_nonzero";
    case ModeClass::bulk: return "bulk";
  }
  fail("unknown mode class");
}

ModeSolver::ModeSolver(BondHamiltonian ham, std::optional<RealVector> similarity)
    : ham_(std::move(ham)) {
  if (!similarity || similarity->size() != ham_.n_sites()) return;
  if (similarity->minCoeff() <= 0.0) return;
  s_ = *similarity;
  s_inv_ = s_.cwiseInverse();
  // The rescaling must symmetrize every bond: s_u fwd / s_v == s_v bwd / s_u,
  // and Kerr bonds need equal scale factors at both ends so the
  // state-dependent part stays symmetric too.
  fast_ = true;
  for (const Bond& b : ham_.bonds()) {
    const double g1 = s_[b.u] * b.fwd * s_inv_[b.v];
    const double g2 = s_[b.v] * b.bwd * s_inv_[b.u];
    const double scale = std::max({std::abs(g1), std::abs(g2), 1.0});
    if (std::abs(g1 - g2) > 1e-12 * scale) {
      fast_ = false;
      break;
    }
    if (b.kerr != 0.0 && std::abs(s_[b.u] - s_[b.v]) > 1e-14 * std::abs(s_[b.u])) {
      fast_ = false;
      break;
    }
  }
  if (!fast_) {
    s_.resize(0);
    s_inv_.resize(0);
  } else {
    // Mapping eigenvectors back through a rescaling that spans many orders of
    // magnitude loses absolute accuracy on the strongly amplified components,
    // so candidates get one inverse-iteration polish on the raw matrix.
    polish_ = s_.maxCoeff() / s_.minCoeff() > 1e3;
  }
}

void ModeSolver::diagonalize(const ComplexVector& state, ComplexVector* omegas,
                             ComplexMatrix* vectors) const {
  const int L = ham_.n_sites();
  if (state.size() != L) fail("state length does not match lattice size");
  if (fast_) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> es;
    if (ham_.tridiagonal()) {
      RealVector diag = RealVector::Zero(L);
      if (ham_.onsite().size() != 0) diag = ham_.onsite();
      RealVector sub = RealVector::Zero(L - 1);
      for (const Bond& b : ham_.bonds()) {
        const double w =
            b.kerr == 0.0 ? 0.0 : b.kerr * (std::norm(state[b.u]) + std::norm(state[b.v]));
        const int lo = std::min(b.u, b.v);
        const double g1 = s_[b.u] * (b.fwd + w) * s_inv_[b.v];
        const double g2 = s_[b.v] * (b.bwd + w) * s_inv_[b.u];
        sub[lo] += 0.5 * (g1 + g2);
      }
      es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    } else {
      RealMatrix h_s = RealMatrix::Zero(L, L);
      for (const Bond& b : ham_.bonds()) {
        const double w =
            b.kerr == 0.0 ? 0.0 : b.kerr * (std::norm(state[b.u]) + std::norm(state[b.v]));
        const double g1 = s_[b.u] * (b.fwd + w) * s_inv_[b.v];
        const double g2 = s_[b.v] * (b.bwd + w) * s_inv_[b.u];
        h_s(b.u, b.v) += 0.5 * (g1 + g2);
        h_s(b.v, b.u) += 0.5 * (g1 + g2);
      }
      if (ham_.onsite().size() != 0) h_s.diagonal() += ham_.onsite();
      es.compute(h_s);
    }
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    *omegas = es.eigenvalues().cast<Complex>();
    // map back to the original frame and renormalize column by column
    ComplexMatrix v = (s_inv_.asDiagonal() * es.eigenvectors()).cast<Complex>();
    for (int k = 0; k < L; ++k) v.col(k).normalize();
    *vectors = std::move(v);
    return;
  }
  const ComplexMatrix h = ham_.dense(state);
  ComplexMatrix v;
  if (h.imag().cwiseAbs().maxCoeff() == 0.0) {
    // hoppings and onsite terms are real, so the general case is usually a
    // real matrix; the real Schur route is substantially cheaper
    Eigen::EigenSolver<RealMatrix> es(h.real());
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    *omegas = es.eigenvalues();
    v = es.eigenvectors();
  } else {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(h, true);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    *omegas = es.eigenvalues();
    v = es.eigenvectors();
  }
  for (int k = 0; k < L; ++k) {
    const double n = v.col(k).norm();
    if (std::isfinite(n) && n > 0.0) {
      v.col(k) /= n;
    } else {
      // defective spectra (e.g. exactly unidirectional hopping) can leave the
      // eigenvector extraction without a usable column; fall back to a unit
      // vector so downstream iterations stay finite and flag honestly
      v.col(k).setZero();
      v(k, k) = 1.0;
    }
  }
  *vectors = std::move(v);
}

Mode ModeSolver::solve(double target_intensity, const ComplexVector& seed,
                       const SolverOptions& opts) const {
  const int L = ham_.n_sites();
  if (seed.size() != L) fail("seed length does not match lattice size");
  if (target_intensity < 0.0) fail("target intensity must be >= 0");
  const double seed_norm = seed.norm();
  if (!(seed_norm > 0.0)) fail("seed state must be nonzero");

  ComplexVector omegas;
  ComplexMatrix vectors;

  if (target_intensity == 0.0) {
    // linear limit: the zero state solves trivially, with omega taken from the
    // eigenvector closest to the seed
    Mode mode;
    mode.state = ComplexVector::Zero(L);
    diagonalize(mode.state, &omegas, &vectors);
    mode.omega = omegas[select_by_overlap(vectors, seed)];
    mode.intensity = 0.0;
    mode.residual = 0.0;
    mode.converged = true;
    return mode;
  }

  const double amp = std::sqrt(target_intensity);
  ComplexVector psi = seed * (amp / seed_norm);
  double mixing = opts.mixing;
  double prev_gap = std::numeric_limits<double>::infinity();
  double gap = prev_gap;
  Complex omega(0, 0);
  Mode mode;

  // bail out when the gap has stopped shrinking: a repelled fixed point will
  // not come back (and on a defective spectrum, e.g. exactly unidirectional
  // hopping, candidates never settle at all)
  double stall_reference = std::numeric_limits<double>::infinity();
  int stall_age = 0;
  double first_gap = 0.0;
  double best_gap = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= opts.max_iter; ++it) {
    diagonalize(psi, &omegas, &vectors);
    const int k = select_by_overlap(vectors, psi);
    omega = omegas[k];
    ComplexVector cand = vectors.col(k);
    if (polish_) {
      // one inverse-iteration step on the raw matrix restores the accuracy
      // the back-rescaling destroyed on the small-scale components
      ComplexMatrix shifted = ham_.dense(psi);
      shifted.diagonal().array() -= omega + Complex(1e-13, 0.0);
      const ComplexVector refined = Eigen::PartialPivLU<ComplexMatrix>(shifted).solve(cand);
      const double refined_norm = refined.norm();
      if (std::isfinite(refined_norm) && refined_norm > 0.0) cand = refined / refined_norm;
    }
    cand = phase_align(cand * amp, psi);
    gap = (cand - psi).lpNorm<Eigen::Infinity>();
    mode.iterations = it;
    if (!std::isfinite(gap)) break;
    if (gap < opts.tol) {
      psi = std::move(cand);
      break;
    }
    if (it == 1) first_gap = gap;
    best_gap = std::min(best_gap, gap);
    if (it >= 15 && best_gap > 0.5 * first_gap) break;
    if (gap < 0.7 * stall_reference) {
      stall_reference = gap;
      stall_age = 0;
    } else if (++stall_age >= 100) {
      break;
    }
    if (gap >= prev_gap) mixing = std::max(mixing / 2.0, 1.0 / 64.0);
    prev_gap = gap;
    psi += mixing * (cand - psi);
    const double norm = psi.norm();
    if (!(norm > 0.0) || !psi.allFinite()) {
      psi = seed * (amp / seed_norm);  // degenerate update; report the seed unconverged
      gap = std::numeric_limits<double>::infinity();
      break;
    }
    psi *= amp / norm;
  }

  psi = gauge_fix(std::move(psi));
  mode.omega = omega;
  mode.intensity = total_intensity(psi);
  mode.residual = (ham_.apply(psi, psi) - omega * psi).norm();
  const double res_scale = std::max(1.0, ham_.inf_norm(psi) * amp);
  mode.converged = gap < opts.tol && mode.residual <= opts.tol * res_scale;
  mode.state = std::move(psi);
  return mode;
}

std::vector<Mode> ModeSolver::solve_all(double target_intensity, const ComplexVector& seed,
                                        const SolverOptions& opts) const {
  const int L = ham_.n_sites();
  if (seed.size() != L) fail("seed length does not match lattice size");
  const double seed_norm = seed.norm();
  if (!(seed_norm > 0.0)) fail("seed state must be nonzero");
  ComplexVector psi0 = seed;
  if (target_intensity > 0.0) psi0 *= std::sqrt(target_intensity) / seed_norm;

  ComplexVector omegas;
  ComplexMatrix vectors;
  diagonalize(psi0, &omegas, &vectors);

  std::vector<Mode> modes(static_cast<std::size_t>(L));
  parallel_for(static_cast<std::size_t>(L), opts.threads, [&](std::size_t k) {
    modes[k] = solve(target_intensity, vectors.col(static_cast<Eigen::Index>(k)), opts);
  });
  return modes;
}

LinearGap ModeSolver::linear_gap() const {
  const ComplexVector zero = ComplexVector::Zero(ham_.n_sites());
  ComplexVector omegas;
  ComplexMatrix vectors;
  diagonalize(zero, &omegas, &vectors);
  LinearGap gap;
  gap.h_norm = ham_.inf_norm(zero);
  gap.zero_tol = 1e-6 * std::max(gap.h_norm, 1e-300);
  gap.lower = -std::numeric_limits<double>::infinity();
  gap.upper = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < omegas.size(); ++i) {
    const double re = omegas[i].real();
    if (std::abs(omegas[i]) < gap.zero_tol) continue;  // zero modes are not band edges
    if (re < 0.0) gap.lower = std::max(gap.lower, re);
    if (re > 0.0) gap.upper = std::min(gap.upper, re);
  }
  return gap;
}

ModeSolver make_solver(const LatticeSpec1D& spec) {
  std::optional<RealVector> sim;
  if ((spec.j_hop - spec.delta) * (spec.j_hop + spec.delta) > 0.0)
    sim = similarity_map(spec).diagonal;
  return ModeSolver(lattice_bonds(spec), sim);
}

ModeSolver make_solver(const DisorderedLattice& lattice) {
  std::optional<RealVector> sim;
  const auto& spec = lattice.spec;
  if ((spec.j_hop - spec.delta) * (spec.j_hop + spec.delta) > 0.0)
    sim = similarity_map(spec).diagonal;
  return ModeSolver(lattice_bonds(lattice), sim);
}

ModeSolver make_solver(const LatticeSpec2D& spec) {
  std::optional<RealVector> sim;
  const auto& row = spec.chain_spec;
  if ((row.j_hop - row.delta) * (row.j_hop + row.delta) > 0.0)
    sim = similarity_diagonal(spec);
  return ModeSolver(lattice_bonds(spec), sim);
}

std::vector<Mode> solve_modes_at_intensity(const LatticeSpec1D& spec, double target_intensity,
                                           const ComplexVector& seed_state, double tol,
                                           int max_iter, int threads) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  opts.threads = threads;
  return make_solver(spec).solve_all(target_intensity, seed_state, opts);
}

Mode solve_zero_mode(const BondHamiltonian& ham, const RealVector& chiral,
                     double target_intensity, const ComplexVector& seed,
                     const SolverOptions& opts) {
  const int L = ham.n_sites();
  if (chiral.size() != L) fail("chiral vector length does not match lattice size");
  if (seed.size() != L) fail("seed length does not match lattice size");
  if (!(target_intensity > 0.0)) fail("target intensity must be positive");
  if (ham.onsite().size() != 0 && ham.onsite().cwiseAbs().maxCoeff() > 0.0)
    fail("zero-mode system requires a chiral lattice (no onsite terms)");

  std::vector<int> plus, minus;
  std::vector<int> sector_index(static_cast<std::size_t>(L), -1);
  for (int i = 0; i < L; ++i) {
    if (chiral[i] > 0) {
      sector_index[static_cast<std::size_t>(i)] = static_cast<int>(plus.size());
      plus.push_back(i);
    } else {
      sector_index[static_cast<std::size_t>(i)] = static_cast<int>(minus.size());
      minus.push_back(i);
    }
  }
  const int n_plus = static_cast<int>(plus.size());
  const int n_minus = static_cast<int>(minus.size());
  if (n_plus != n_minus + 1)
    fail("zero-mode system needs one more majority site than minority sites");

  // seed amplitudes: project onto the majority sublattice, rotated real
  ComplexVector aligned = gauge_fix(seed);
  RealVector a(n_plus);
  for (int p = 0; p < n_plus; ++p) a[p] = aligned[plus[static_cast<std::size_t>(p)]].real();
  if (a.norm() == 0.0) fail("seed has no weight on the majority sublattice");
  a *= std::sqrt(target_intensity) / a.norm();

  // Minority-row equations of H(psi) psi = 0 plus the intensity constraint.
  // Bonds couple opposite sublattices, so row r only sees majority amplitudes
  // and each Kerr weight reduces to the square of the one majority endpoint.
  const auto residual_fn = [&](const RealVector& x, RealVector* f) {
    f->setZero();
    for (const Bond& b : ham.bonds()) {
      const bool u_plus = chiral[b.u] > 0;
      const int r = u_plus ? b.v : b.u;            // minority endpoint
      const int p = sector_index[static_cast<std::size_t>(u_plus ? b.u : b.v)];
      const double amp2 = x[p] * x[p];
      const double hop = (u_plus ? b.bwd : b.fwd) + b.kerr * amp2;
      (*f)[sector_index[static_cast<std::size_t>(r)]] += hop * x[p];
    }
    (*f)[n_minus] = x.squaredNorm() - target_intensity;
  };
  const auto jacobian_fn = [&](const RealVector& x, RealMatrix* jac) {
    jac->setZero();
    for (const Bond& b : ham.bonds()) {
      const bool u_plus = chiral[b.u] > 0;
      const int r = sector_index[static_cast<std::size_t>(u_plus ? b.v : b.u)];
      const int p = sector_index[static_cast<std::size_t>(u_plus ? b.u : b.v)];
      const double amp2 = x[p] * x[p];
      (*jac)(r, p) += (u_plus ? b.bwd : b.fwd) + 3.0 * b.kerr * amp2;
    }
    for (int p = 0; p < n_plus; ++p) (*jac)(n_minus, p) = 2.0 * x[p];
  };

  RealVector f(n_plus), trial_f(n_plus);
  RealMatrix jac(n_plus, n_plus);
  Mode mode;
  bool solved = false;
  residual_fn(a, &f);
  for (int it = 1; it <= 80; ++it) {
    mode.iterations = it;
    const double fn = f.norm();
    if (fn < 1e-12 * std::max(1.0, target_intensity)) {
      solved = true;
      break;
    }
    jacobian_fn(a, &jac);
    const RealVector step = jac.partialPivLu().solve(f);
    if (!step.allFinite()) break;
    double damping = 1.0;
    RealVector trial = a - step;
    residual_fn(trial, &trial_f);
    for (int back = 0; back < 40 && !(trial_f.norm() < fn); ++back) {
      damping /= 2.0;
      trial = a - damping * step;
      residual_fn(trial, &trial_f);
    }
    if (!(trial_f.norm() < fn)) break;  // stagnated
    a = trial;
    f = trial_f;
  }

  ComplexVector state = ComplexVector::Zero(L);
  for (int p = 0; p < n_plus; ++p) state[plus[static_cast<std::size_t>(p)]] = a[p];
  state = gauge_fix(std::move(state));
  mode.omega = Complex(0, 0);
  mode.intensity = total_intensity(state);
  mode.residual = ham.apply(state, state).norm();
  const double res_scale = std::max(1.0, ham.inf_norm(state) * std::sqrt(target_intensity));
  mode.converged = solved && mode.residual <= opts.tol * res_scale;
  mode.state = std::move(state);
  return mode;
}

Mode solve_zero_mode(const LatticeSpec1D& spec, double target_intensity,
                     const ComplexVector& seed, const SolverOptions& opts) {
  RealVector chiral(spec.n_sites);
  for (int i = 0; i < spec.n_sites; ++i) chiral[i] = LatticeSpec1D::is_a_site(i) ? 1.0 : -1.0;
  return solve_zero_mode(lattice_bonds(spec), chiral, target_intensity, seed, opts);
}

ModeClass classify_mode(const Mode& mode, const LinearGap& gap, double h_norm) {
  if (std::abs(mode.omega) < 1e-6 * std::max(h_norm, 1e-300)) return ModeClass::tzm;
  const double re = mode.omega.real();
  const double eps = 1e-9 * std::max(1.0, gap.h_norm);
  if (re > gap.lower + eps && re < gap.upper - eps) return ModeClass::in_gap_nonzero;
  return ModeClass::bulk;
}

namespace {

bool is_zero_mode(const Mode& mode, const BondHamiltonian& ham, const RealVector& chiral) {
  if (!mode.converged) return false;
  if (std::abs(mode.omega) >= 1e-6 * std::max(ham.inf_norm(mode.state), 1e-300)) return false;
  double max_plus = 0.0, max_minus = 0.0;
  for (int i = 0; i < ham.n_sites(); ++i)
    (chiral[i] > 0 ? max_plus : max_minus) =
        std::max(chiral[i] > 0 ? max_plus : max_minus, std::abs(mode.state[i]));
  return max_minus < 1e-8 * max_plus;
}

}  // namespace

BranchResult trace_tzm_branch(const ModeSolver& solver, const LinearGap& gap,
                              const std::vector<double>& intensity_grid,
                              const SolverOptions& opts) {
  if (intensity_grid.empty()) fail("intensity grid must be nonempty");
  for (std::size_t i = 1; i < intensity_grid.size(); ++i)
    if (!(intensity_grid[i] > intensity_grid[i - 1])) fail("intensity grid must be ascending");

  const BondHamiltonian& ham = solver.hamiltonian();
  const int L = ham.n_sites();
  RealVector chiral(L);
  for (int i = 0; i < L; ++i) chiral[i] = (i % 2 == 0) ? 1.0 : -1.0;

  ComplexVector omegas;
  ComplexMatrix vectors;
  solver.diagonalize(ComplexVector::Zero(L), &omegas, &vectors);
  Eigen::Index k0 = 0;
  omegas.cwiseAbs().minCoeff(&k0);

  BranchResult result;
  result.intensity_grid = intensity_grid;
  ComplexVector seed = vectors.col(k0);
  // cap the plain attempt: where it stalls, the sector Newton solve below is
  // both the faster and the safer route to the zero branch
  SolverOptions plain = opts;
  plain.max_iter = std::min(plain.max_iter, 120);
  for (std::size_t i = 0; i < intensity_grid.size(); ++i) {
    Mode mode = solver.solve(intensity_grid[i], seed, plain);
    if (!is_zero_mode(mode, ham, chiral)) {
      // Near the critical plateau the zero branch repels the plain fixed
      // point (the iterates drift onto an in-gap branch); the sector Newton
      // solve holds it there.
      const Mode corrected = solve_zero_mode(ham, chiral, intensity_grid[i], seed, opts);
      if (is_zero_mode(corrected, ham, chiral)) mode = corrected;
    }
    const double overlap = state_overlap(seed, mode.state);
    result.modes.push_back(mode);
    result.classification.push_back(classify_mode(mode, gap, ham.inf_norm(mode.state)));
    if (i > 0 && overlap <= 0.5) {
      result.branch_lost = true;
      result.lost_index = static_cast<int>(i);
      break;
    }
    seed = mode.state;
  }
  return result;
}

BranchResult trace_tzm_branch(const LatticeSpec1D& spec, const std::vector<double>& intensity_grid,
                              const SolverOptions& opts) {
  const ModeSolver solver = make_solver(spec);
  return trace_tzm_branch(solver, solver.linear_gap(), intensity_grid, opts);
}

namespace {

// One leftward sweep step shared verbatim by the recursion and the design
// inversion, so a designed lattice reproduces its target bit for bit.
inline double recursion_step(double hop, double kerr, double next, double intracell) {
  return -(hop + kerr * next * next) * next / intracell;
}

}  // namespace

ComplexVector tzm_recursion(const LatticeSpec1D& spec, double boundary_amplitude) {
  spec.validate();
  if (!(boundary_amplitude > 0.0)) fail("boundary amplitude must be positive");
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  if (spec.tau == 0.0) fail("tau must be nonzero for the zero-mode recursion");
  if (spec.j_hop + spec.delta == 0.0) fail("J + delta must be nonzero for the zero-mode recursion");

  std::vector<double> a(static_cast<std::size_t>(cells) + 1, 0.0);
  a[static_cast<std::size_t>(cells)] = boundary_amplitude;
  for (int j = cells - 1; j >= 1; --j) {
    const double nxt = a[static_cast<std::size_t>(j) + 1];
    double val;
    if (j > N)
      val = recursion_step(spec.lambda_bar_at(j), spec.beta, nxt, spec.j_hop + spec.delta);
    else if (j == N)
      val = recursion_step(spec.t_d, 0.0, nxt, spec.tau);
    else
      val = recursion_step(spec.t_bar_at(j), spec.alpha, nxt, spec.tau);
    if (!std::isfinite(val) || std::abs(val) > 1e150)
      throw std::overflow_error("zero-mode recursion overflowed at cell " + std::to_string(j));
    a[static_cast<std::size_t>(j)] = val;
  }

  ComplexVector state = ComplexVector::Zero(spec.n_sites);
  for (int j = 1; j <= cells; ++j) state[spec.site_of_a(j)] = a[static_cast<std::size_t>(j)];
  return state;
}

ComplexVector intensity_shoot(const LatticeSpec1D& spec, double target_intensity,
                              double rel_tol) {
  if (!(target_intensity > 0.0)) fail("target intensity must be positive");
  if (!(rel_tol > 0.0)) fail("relative tolerance must be positive");
  // Beyond the plateau amplitude the leftward sweep diverges (the plateau is
  // an unstable fixed point of that map); treat overflow as infinite
  // intensity so bracketing backs off on its own.
  const auto intensity_at = [&](double c) {
    try {
      return total_intensity(tzm_recursion(spec, c));
    } catch (const std::overflow_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double c_lo = 1.0, c_hi = 1.0;
  double i_lo = intensity_at(c_lo), i_hi = i_lo;
  int guard = 0;
  while (std::isinf(i_lo)) {
    c_lo /= 2.0;
    c_hi = c_lo;
    i_lo = i_hi = intensity_at(c_lo);
    if (++guard > 2000) throw std::runtime_error("intensity bracket expansion failed (overflow)");
  }
  guard = 0;
  while (i_hi < target_intensity) {
    const double next = c_hi * 2.0;
    const double value = intensity_at(next);
    if (std::isinf(value)) {
      // refine toward the divergence threshold instead of stepping past it
      double lo = c_hi, hi = next;
      for (int k = 0; k < 200 && i_hi < target_intensity; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double v = intensity_at(mid);
        if (std::isinf(v)) {
          hi = mid;
        } else {
          lo = mid;
          c_hi = mid;
          i_hi = v;
        }
      }
      if (i_hi < target_intensity)
        throw std::runtime_error("intensity bracket expansion failed near the divergence edge");
      break;
    }
    c_hi = next;
    i_hi = value;
    if (++guard > 2000) throw std::runtime_error("intensity bracket expansion failed (upper)");
  }
  guard = 0;
  while (i_lo > target_intensity) {
    c_lo /= 2.0;
    i_lo = intensity_at(c_lo);
    if (++guard > 2000) throw std::runtime_error("intensity bracket expansion failed (lower)");
  }

  // verify monotonic growth of intensity in the boundary amplitude over the
  // bracket before root-finding
  const int probes = 9;
  double prev = i_lo;
  for (int k = 1; k <= probes; ++k) {
    const double c = c_lo * std::pow(c_hi / c_lo, static_cast<double>(k) / probes);
    const double val = intensity_at(c);
    if (val < prev * (1.0 - 1e-12))
      throw std::runtime_error("intensity is not monotonic in the boundary amplitude on [" +
                               std::to_string(c_lo) + ", " + std::to_string(c_hi) + "]");
    prev = val;
  }

  double best_c = c_lo;
  double best_err = std::abs(i_lo - target_intensity);
  const auto consider = [&](double c, double value) {
    const double err = std::abs(value - target_intensity);
    if (std::isfinite(value) && err < best_err) {
      best_err = err;
      best_c = c;
    }
  };
  consider(c_hi, i_hi);
  for (int it = 0; it < 200; ++it) {
    const double c_mid = std::sqrt(c_lo * c_hi);
    if (c_mid <= c_lo || c_mid >= c_hi) break;  // bracket collapsed to adjacent doubles
    const double val = intensity_at(c_mid);
    consider(c_mid, val);
    if (best_err <= rel_tol * target_intensity) break;
    (val < target_intensity ? c_lo : c_hi) = c_mid;
  }
  if (best_err > rel_tol * target_intensity)
    throw std::runtime_error(
        "intensity shoot missed the target by " + std::to_string(best_err / target_intensity) +
        " relative; the boundary-amplitude grid cannot resolve this intensity");
  return tzm_recursion(spec, best_c);
}

namespace {

double constant_value(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw std::invalid_argument(std::string(name) + " is empty");
  for (double x : v)
    if (std::abs(x - v.front()) > 1e-12 * std::max(1.0, std::abs(v.front())))
      throw std::invalid_argument(std::string(name) + " must be constant for the plateau formulas");
  return v.front();
}

}  // namespace

std::pair<double, double> plateau_heights(const LatticeSpec1D& spec) {
  spec.validate();
  if (!(spec.alpha > 0.0)) fail("plateau formula requires alpha > 0");
  if (!(spec.beta > 0.0)) fail("plateau formula requires beta > 0");
  const double t0 = constant_value(spec.t_bar, "t_bar");
  const double l0 = constant_value(spec.lambda_bar, "lambda_bar");
  if (spec.tau < t0) fail("plateau formula requires tau >= t_bar");
  if (spec.j_hop + spec.delta < l0) fail("plateau formula requires J + delta >= lambda_bar");
  return {std::sqrt((spec.tau - t0) / spec.alpha),
          std::sqrt((spec.j_hop + spec.delta - l0) / spec.beta)};
}

std::string to_string(ProfileShape s) {
  switch (s) {
    case ProfileShape::flat: return "flat";
    case ProfileShape::square: return "square";
    case ProfileShape::triangle: return "triangle";
    case ProfileShape::cosine: return "cosine";
    case ProfileShape::custom: return "custom";
  }
  fail("unknown profile shape");
}

ProfileShape profile_shape_from_string(const std::string& s) {
  if (s == "flat") return ProfileShape::flat;
  if (s == "square") return ProfileShape::square;
  if (s == "triangle") return ProfileShape::triangle;
  if (s == "cosine") return ProfileShape::cosine;
  if (s == "custom") return ProfileShape::custom;
  fail("unknown profile shape: " + s);
}

namespace {

// Project the reciprocal-side samples so the interface step matches the one
// the recursion enforces through t_d.
void project_interface(std::vector<double>* samples, const LatticeSpec1D& spec) {
  const int N = spec.n_hermitian_cells;
  const double a_n = (*samples)[static_cast<std::size_t>(N - 1)];
  const double a_n1 = (*samples)[static_cast<std::size_t>(N)];
  if (!(a_n > 0.0) || !(a_n1 > 0.0)) fail("target samples around the interface must be positive");
  const double expected = spec.t_d * a_n1 / spec.tau;
  const double factor = expected / a_n;
  for (int j = 1; j <= N; ++j) (*samples)[static_cast<std::size_t>(j - 1)] *= factor;
}

}  // namespace

ProfileTarget make_profile_target(ProfileShape shape, const LatticeSpec1D& spec) {
  spec.validate();
  if (shape == ProfileShape::custom) fail("custom targets take explicit samples");
  const int cells = spec.n_cells();
  // amplitude budget below the design feasibility ceiling min(tau/alpha, (J+delta)/beta)
  if (!(spec.alpha > 0.0) || !(spec.beta > 0.0))
    fail("profile design requires alpha > 0 and beta > 0");
  const double ceiling = std::min(spec.tau / spec.alpha, (spec.j_hop + spec.delta) / spec.beta);
  std::vector<double> samples(static_cast<std::size_t>(cells));
  switch (shape) {
    case ProfileShape::flat: {
      const double h = std::sqrt(0.4 * ceiling);
      std::fill(samples.begin(), samples.end(), h);
      break;
    }
    case ProfileShape::square: {
      const double lo = std::sqrt(0.26 * ceiling);
      const double hi = std::sqrt(0.48 * ceiling);
      for (int j = 1; j <= cells; ++j)
        samples[static_cast<std::size_t>(j - 1)] = (3 * j > cells && 3 * j <= 2 * cells) ? hi : lo;
      break;
    }
    case ProfileShape::triangle: {
      const double edge = std::sqrt(0.2 * ceiling);
      const double peak = std::sqrt(0.56 * ceiling);
      const double center = 0.5 * (1 + cells);
      for (int j = 1; j <= cells; ++j) {
        const double w = 1.0 - std::abs(j - center) / (center - 1.0);
        samples[static_cast<std::size_t>(j - 1)] = edge + (peak - edge) * w;
      }
      break;
    }
    case ProfileShape::cosine: {
      // the dip height matters: hopping disorder moves low-amplitude cells
      // by delta(a^2) ~ lambda W / beta regardless of a, so floors below
      // ~sqrt(0.2 ceiling) lose the disorder robustness of the design
      const double hi = std::sqrt(0.5 * ceiling);
      const double lo = std::sqrt(0.18 * ceiling);
      const double mid = 0.5 * (hi + lo), amp = 0.5 * (hi - lo);
      for (int j = 1; j <= cells; ++j)
        samples[static_cast<std::size_t>(j - 1)] =
            mid + amp * std::cos(2.0 * M_PI * (j - 1) / (cells - 1));
      break;
    }
    case ProfileShape::custom: break;
  }
  project_interface(&samples, spec);
  return ProfileTarget{shape, std::move(samples)};
}

ProfileTarget make_profile_target(const std::vector<double>& samples, const LatticeSpec1D& spec) {
  spec.validate();
  if (static_cast<int>(samples.size()) != spec.n_cells())
    fail("custom target needs one sample per cell");
  for (std::size_t j = 0; j < samples.size(); ++j)
    if (!(samples[j] > 0.0))
      fail("target sample at cell " + std::to_string(j + 1) + " must be positive");
  std::vector<double> adjusted = samples;
  project_interface(&adjusted, spec);
  return ProfileTarget{ProfileShape::custom, std::move(adjusted)};
}

DesignedHoppings design_hoppings(const LatticeSpec1D& spec, const ProfileTarget& target) {
  spec.validate();
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  const auto& a = target.samples;
  if (static_cast<int>(a.size()) != cells) fail("target needs one sample per cell");
  for (int j = 1; j <= cells; ++j)
    if (!(a[static_cast<std::size_t>(j - 1)] > 0.0))
      fail("target sample at cell " + std::to_string(j) + " must be positive");

  const double expected_an = spec.t_d * a[static_cast<std::size_t>(N)] / spec.tau;
  if (std::abs(a[static_cast<std::size_t>(N - 1)] - expected_an) >
      1e-9 * std::max(expected_an, a[static_cast<std::size_t>(N - 1)]))
    fail("target interface step is inconsistent with t_d; expected |a_N| = t_d |a_{N+1}| / tau");

  // Invert the sweep against the amplitudes it will actually realize: each
  // designed hopping is computed from the floating-point amplitude the
  // recursion produces for the previous cells, not from the ideal target.
  // The leftward sweep amplifies per-step rounding exponentially, so the
  // naive inversion would drift off tall targets; with this feedback the
  // recursion reproduces every sample to machine precision.
  DesignedHoppings design;
  design.t_bar.resize(static_cast<std::size_t>(N - 1));
  design.lambda_bar.resize(static_cast<std::size_t>(cells - 1 - N));
  double realized = a[static_cast<std::size_t>(cells - 1)];  // |a_M|, sweep runs right to left
  for (int j = cells - 1; j >= 1; --j) {
    const double aj = a[static_cast<std::size_t>(j - 1)];
    if (j > N) {
      const double l = (spec.j_hop + spec.delta) * aj / realized - spec.beta * realized * realized;
      if (!(l > 0.0))
        fail("infeasible target: designed lambda_bar at cell " + std::to_string(j) +
             " would be " + std::to_string(l));
      design.lambda_bar[static_cast<std::size_t>(j - N - 1)] = l;
      realized = std::abs(recursion_step(l, spec.beta, realized, spec.j_hop + spec.delta));
    } else if (j == N) {
      realized = std::abs(recursion_step(spec.t_d, 0.0, realized, spec.tau));
    } else {
      const double t = spec.tau * aj / realized - spec.alpha * realized * realized;
      if (!(t > 0.0))
        fail("infeasible target: designed t_bar at cell " + std::to_string(j) +
             " would be " + std::to_string(t));
      design.t_bar[static_cast<std::size_t>(j - 1)] = t;
      realized = std::abs(recursion_step(t, spec.alpha, realized, spec.tau));
    }
  }
  return design;
}

LatticeSpec1D apply_design(const LatticeSpec1D& spec, const DesignedHoppings& design) {
  LatticeSpec1D out = spec;
  out.t_bar = design.t_bar;
  out.lambda_bar = design.lambda_bar;
  out.validate();
  return out;
}

double participation_ratio(const ComplexVector& state) {
  const double i2 = state.squaredNorm();
  if (!(i2 > 0.0)) fail("participation ratio of the zero state is undefined");
  const double i4 = state.cwiseAbs2().squaredNorm();
  return i2 * i2 / (static_cast<double>(state.size()) * i4);
}

double nonhermitian_weight(const LatticeSpec1D& spec, const ComplexVector& state) {
  if (state.size() != spec.n_sites) fail("state length does not match n_sites");
  const double total = state.squaredNorm();
  if (!(total > 0.0)) fail("weight of the zero state is undefined");
  const int first = 2 * spec.n_hermitian_cells;
  return state.tail(spec.n_sites - first).squaredNorm() / total;
}

double state_overlap(const ComplexVector& a, const ComplexVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) fail("overlap with the zero state is undefined");
  return std::abs(a.dot(b)) / (na * nb);
}

std::vector<double> continuation_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) fail("invalid continuation grid request");
  std::vector<double> grid(static_cast<std::size_t>(n));
  const double a0 = std::sqrt(lo), a1 = std::sqrt(hi);
  for (int k = 0; k < n; ++k) {
    const double a = a0 + (a1 - a0) * static_cast<double>(k) / (n - 1);
    grid[static_cast<std::size_t>(k)] = a * a;
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

}  // namespace nhtl
