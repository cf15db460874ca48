#include "nhtl/dynamics.hpp"

#include <Eigen/LU>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nhtl/nonlinear_modes.hpp"
#include "nhtl/parallel.hpp"
#include "nhtl/rng.hpp"

namespace nhtl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kBlowupThreshold = 1e6;

}  // namespace

void PumpConfig::validate(const LatticeSpec1D& spec) const {
  spec.validate();
  if (profile.size() != spec.n_sites) fail("pump profile length does not match n_sites");
  if (kappa_a < 0.0 || kappa_b < 0.0) fail("loss rates must be >= 0");
  const int N = spec.n_hermitian_cells;
  const int m_max = (spec.n_sites - 1) / 2 - N;
  for (int i = 0; i < spec.n_sites; ++i) {
    if (profile[i] == Complex(0, 0)) continue;
    const int cell = i / 2 + 1;
    const bool allowed = LatticeSpec1D::is_a_site(i) && cell > N && cell <= N + m_max;
    if (!allowed)
      fail("pump support must lie on the a-sites of the nonreciprocal chain (site " +
           std::to_string(i + 1) + " is not allowed)");
  }
}

PumpConfig PumpConfig::single_site(const LatticeSpec1D& spec, int m, double strength,
                                   double frequency, double kappa_a, double kappa_b) {
  spec.validate();
  const int N = spec.n_hermitian_cells;
  const int m_max = (spec.n_sites - 1) / 2 - N;
  if (m < 1 || m > m_max) fail("pump site index m out of range 1.." + std::to_string(m_max));
  PumpConfig pump;
  pump.profile = ComplexVector::Zero(spec.n_sites);
  pump.profile[spec.site_of_a(N + m)] = 1.0;
  pump.strength = strength;
  pump.frequency = frequency;
  pump.kappa_a = kappa_a;
  pump.kappa_b = kappa_b;
  pump.validate(spec);
  return pump;
}

DrivenSystem::DrivenSystem(const LatticeSpec1D& spec, const PumpConfig& pump)
    : ham_(lattice_bonds(spec)), omega_(pump.frequency) {
  pump.validate(spec);
  loss_ = ComplexVector(spec.n_sites);
  for (int i = 0; i < spec.n_sites; ++i)
    loss_[i] = Complex(0.0, -(LatticeSpec1D::is_a_site(i) ? pump.kappa_a : pump.kappa_b));
  pump_amp_ = pump.strength * pump.profile;
  kappa_max_ = std::max(pump.kappa_a, pump.kappa_b);
}

ComplexVector DrivenSystem::pump_drive(double t) const {
  return pump_amp_ * std::exp(Complex(0.0, -omega_ * t));
}

ComplexVector DrivenSystem::rhs(double t, const ComplexVector& phi) const {
  ComplexVector h_phi = ham_.apply(phi, phi);
  h_phi.array() += loss_.array() * phi.array();
  return Complex(0.0, -1.0) * h_phi + pump_drive(t);
}

ComplexVector evolve_observed(const DrivenSystem& system, const EvolveOptions& opts,
                              ComplexVector phi, int observe_stride,
                              const std::function<void(std::int64_t, double, const ComplexVector&)>& observer,
                              bool* steady_out, bool* diverged_out, double* end_time_out) {
  if (!(opts.dt > 0.0)) fail("dt must be positive");
  if (!(opts.t_end > 0.0)) fail("t_end must be positive");
  const double speed = system.hamiltonian().inf_norm(phi) + system.kappa_max();
  if (opts.dt * speed >= 0.5)
    fail("stability bound violated: dt * (|H| + max kappa) = " + std::to_string(opts.dt * speed) +
         " must stay below 0.5");

  const auto n_steps = static_cast<std::int64_t>(std::llround(opts.t_end / opts.dt));
  const auto window_steps =
      std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(opts.steady_window / opts.dt)));
  observe_stride = std::max(observe_stride, 1);

  bool steady = false, diverged = false;
  double t = 0.0;
  ComplexVector snapshot = phi;
  ComplexVector k1, k2, k3, k4, tmp;
  if (observer) observer(0, 0.0, phi);

  std::int64_t step = 0;
  for (step = 1; step <= n_steps; ++step) {
    const double t0 = static_cast<double>(step - 1) * opts.dt;
    const double h = opts.dt;
    k1 = system.rhs(t0, phi);
    tmp = phi + (0.5 * h) * k1;
    k2 = system.rhs(t0 + 0.5 * h, tmp);
    tmp = phi + (0.5 * h) * k2;
    k3 = system.rhs(t0 + 0.5 * h, tmp);
    tmp = phi + h * k3;
    k4 = system.rhs(t0 + h, tmp);
    phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t = static_cast<double>(step) * opts.dt;

    if (phi.cwiseAbs().maxCoeff() > kBlowupThreshold) {
      diverged = true;
      if (observer) observer(step, t, phi);
      break;
    }
    if (observer && (step % observe_stride == 0 || step == n_steps)) observer(step, t, phi);
    if (step % window_steps == 0) {
      const double change = (phi - snapshot).lpNorm<Eigen::Infinity>();
      snapshot = phi;
      if (change < opts.steady_tol) {
        steady = true;
        if (opts.stop_when_steady) {
          if (observer && step % observe_stride != 0 && step != n_steps) observer(step, t, phi);
          break;
        }
      } else {
        steady = false;
      }
    }
  }
  if (steady_out) *steady_out = steady;
  if (diverged_out) *diverged_out = diverged;
  if (end_time_out) *end_time_out = t;
  return phi;
}

Trajectory evolve(const LatticeSpec1D& spec, const PumpConfig& pump, const EvolveOptions& opts,
                  const ComplexVector& initial) {
  if (initial.size() != spec.n_sites) fail("initial state length does not match n_sites");
  const DrivenSystem system(spec, pump);
  const auto n_steps = static_cast<std::int64_t>(std::llround(opts.t_end / opts.dt));
  const int stride = opts.store_stride > 0
                         ? opts.store_stride
                         : static_cast<int>(std::max<std::int64_t>(1, n_steps / 1000));

  Trajectory traj;
  auto observer = [&](std::int64_t, double t, const ComplexVector& phi) {
    if (!traj.times.empty() && traj.times.back() == t) return;
    traj.times.push_back(t);
    traj.states.push_back(phi);
  };
  traj.steady_state = evolve_observed(system, opts, initial, stride, observer, &traj.steady,
                                      &traj.diverged, &traj.end_time);
  if (traj.diverged) traj.blowup_time = traj.end_time;
  return traj;
}

double steady_residual(const LatticeSpec1D& spec, const PumpConfig& pump,
                       const ComplexVector& state) {
  const DrivenSystem system(spec, pump);
  ComplexVector lhs = system.hamiltonian().apply(state, state);
  lhs.array() += system.loss_diagonal().array() * state.array();
  lhs -= pump.frequency * state;
  lhs += Complex(0.0, 1.0) * (pump.strength * pump.profile);
  return lhs.norm();
}

namespace {

// Steady-equation residual F(phi) = (H(phi) + H_loss - w) phi + i xi P at a
// frozen pump strength.
ComplexVector steady_f(const DrivenSystem& system, const ComplexVector& pump_amp, double omega,
                       const ComplexVector& phi) {
  ComplexVector f = system.hamiltonian().apply(phi, phi);
  f.array() += system.loss_diagonal().array() * phi.array();
  f -= omega * phi;
  f += Complex(0.0, 1.0) * pump_amp;
  return f;
}

// Newton finisher on the real-split residual, with a finite-difference
// Jacobian; takes over when the frozen-hopping iteration slows down near
// criticality.
bool steady_newton(const DrivenSystem& system, const ComplexVector& pump_amp, double omega,
                   double tol, ComplexVector* phi, int* iterations) {
  const int L = system.n_sites();
  const int n = 2 * L;
  const auto pack = [L](const ComplexVector& v) {
    RealVector x(2 * L);
    for (int i = 0; i < L; ++i) {
      x[2 * i] = v[i].real();
      x[2 * i + 1] = v[i].imag();
    }
    return x;
  };
  const auto unpack = [L](const RealVector& x) {
    ComplexVector v(L);
    for (int i = 0; i < L; ++i) v[i] = Complex(x[2 * i], x[2 * i + 1]);
    return v;
  };
  const auto residual = [&](const RealVector& x) {
    return pack(steady_f(system, pump_amp, omega, unpack(x)));
  };

  RealVector x = pack(*phi);
  RealMatrix jac(n, n);
  for (int it = 0; it < 30; ++it) {
    ++*iterations;
    const RealVector f = residual(x);
    const double fn = f.norm();
    if (fn < tol) {
      *phi = unpack(x);
      return true;
    }
    const double h = 1e-7 * std::max(1.0, x.cwiseAbs().maxCoeff());
    for (int c = 0; c < n; ++c) {
      RealVector xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      jac.col(c) = (residual(xp) - residual(xm)) / (2.0 * h);
    }
    const RealVector step = jac.partialPivLu().solve(f);
    if (!step.allFinite()) break;
    double damping = 1.0;
    RealVector trial = x - step;
    for (int back = 0; back < 30 && !(residual(trial).norm() < fn); ++back) {
      damping /= 2.0;
      trial = x - damping * step;
    }
    if (!(residual(trial).norm() < fn)) break;
    x = trial;
  }
  *phi = unpack(x);
  return residual(x).norm() < tol;
}

// Damped fixed point for the steady equation at one pump strength: freeze the
// nonlinearity, solve the linear system, relax, repeat; a Newton finisher
// handles the critically slowed tail.
bool steady_fixed_point(const DrivenSystem& system, const PumpConfig& pump, double xi,
                        const SteadyStateOptions& opts, ComplexVector* phi, int* iterations) {
  const ComplexVector pump_amp = xi * pump.profile;
  const ComplexVector rhs = Complex(0.0, -1.0) * pump_amp;
  const BondHamiltonian& ham = system.hamiltonian();
  double relax = 1.0;
  double prev_change = std::numeric_limits<double>::infinity();
  const int picard_cap = std::min(opts.max_iter, 40);
  for (int it = 0; it < picard_cap; ++it) {
    ++*iterations;
    ComplexMatrix a = ham.dense(*phi);
    a.diagonal() += system.loss_diagonal();
    a.diagonal().array() -= pump.frequency;
    const ComplexVector next = Eigen::PartialPivLU<ComplexMatrix>(a).solve(rhs);
    const double change = (next - *phi).lpNorm<Eigen::Infinity>();
    const double scale = std::max(1.0, phi->lpNorm<Eigen::Infinity>());
    if (change >= prev_change) relax = std::max(relax / 2.0, 1.0 / 16.0);
    prev_change = change;
    *phi += relax * (next - *phi);
    if (change < opts.tol * scale) return true;
  }
  const double newton_tol =
      opts.tol * std::max(1.0, phi->lpNorm<Eigen::Infinity>()) * std::sqrt(2.0 * ham.n_sites());
  return steady_newton(system, pump_amp, pump.frequency, newton_tol, phi, iterations);
}

}  // namespace

SteadyResult steady_state(const LatticeSpec1D& spec, const PumpConfig& pump,
                          const SteadyStateOptions& opts) {
  pump.validate(spec);
  const DrivenSystem system(spec, pump);

  SteadyResult result;
  result.state = ComplexVector::Zero(spec.n_sites);
  result.converged = true;
  if (pump.strength == 0.0) return result;

  ComplexVector phi = ComplexVector::Zero(spec.n_sites);
  int total_iterations = 0;
  bool all_converged = true;
  for (int rung = 1; rung <= opts.homotopy_steps; ++rung) {
    const double xi = pump.strength * static_cast<double>(rung) / opts.homotopy_steps;
    all_converged &= steady_fixed_point(system, pump, xi, opts, &phi, &total_iterations);
  }

  result.state = phi;
  result.iterations = total_iterations;
  result.residual = steady_residual(spec, pump, phi);
  result.converged = all_converged;
  return result;
}

SteadyResult steady_state_from(const LatticeSpec1D& spec, const PumpConfig& pump,
                               const ComplexVector& start, const SteadyStateOptions& opts) {
  pump.validate(spec);
  if (start.size() != spec.n_sites) fail("start state length does not match n_sites");
  const DrivenSystem system(spec, pump);
  SteadyResult result;
  ComplexVector phi = start;
  int iterations = 0;
  result.converged = steady_fixed_point(system, pump, pump.strength, opts, &phi, &iterations);
  result.state = phi;
  result.iterations = iterations;
  result.residual = steady_residual(spec, pump, phi);
  return result;
}

RobustnessReport noise_robustness(const LatticeSpec1D& spec, const PumpConfig& pump,
                                  const ComplexVector& steady, const NoiseOptions& opts) {
  pump.validate(spec);
  if (steady.size() != spec.n_sites) fail("reference state length does not match n_sites");
  const double ref_norm2 = steady.squaredNorm();
  if (!(ref_norm2 > 0.0)) fail("similarity against a zero reference state is undefined");
  if (opts.n_realizations < 1) fail("need at least one realization");

  const DrivenSystem system(spec, pump);
  const auto n_steps = static_cast<std::int64_t>(std::llround(opts.t_end / opts.dt));
  const int stride = opts.sample_stride > 0
                         ? opts.sample_stride
                         : static_cast<int>(std::max<std::int64_t>(1, n_steps / 400));

  // fixed sample schedule shared by all realizations
  std::vector<std::int64_t> sample_steps;
  for (std::int64_t s = 0; s <= n_steps; s += stride) sample_steps.push_back(s);
  if (sample_steps.back() != n_steps) sample_steps.push_back(n_steps);
  const std::size_t n_samples = sample_steps.size();

  RealMatrix chi(opts.n_realizations, static_cast<Eigen::Index>(n_samples));
  const int L = spec.n_sites;

  EvolveOptions eopts;
  eopts.dt = opts.dt;
  eopts.t_end = opts.t_end;
  eopts.stop_when_steady = false;

  parallel_for(static_cast<std::size_t>(opts.n_realizations), opts.threads, [&](std::size_t r) {
    const std::uint64_t stream = mix64(opts.master_seed) ^ mix64(0x5eed0000ULL + r);
    ComplexVector phi0 = steady;
    for (int i = 0; i < L; ++i) {
      const double re = counter_uniform(stream, static_cast<std::uint64_t>(i), opts.noise_lo,
                                        opts.noise_hi);
      const double im = opts.complex_noise
                            ? counter_uniform(stream, static_cast<std::uint64_t>(L + i),
                                              opts.noise_lo, opts.noise_hi)
                            : 0.0;
      phi0[i] += Complex(re, im);
    }
    std::size_t cursor = 0;
    auto observer = [&](std::int64_t step, double, const ComplexVector& phi) {
      while (cursor < n_samples && sample_steps[cursor] <= step) {
        const double denom = std::sqrt(ref_norm2 * phi.squaredNorm());
        chi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cursor)) =
            denom > 0.0 ? std::abs(steady.dot(phi)) / denom : 0.0;
        ++cursor;
      }
    };
    evolve_observed(system, eopts, std::move(phi0), 1, observer);
  });

  RobustnessReport report;
  report.n_realizations = opts.n_realizations;
  report.times.resize(n_samples);
  report.chi_mean.resize(n_samples);
  report.chi_std.resize(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    report.times[s] = static_cast<double>(sample_steps[s]) * opts.dt;
    const auto col = chi.col(static_cast<Eigen::Index>(s));
    const double mean = col.mean();
    report.chi_mean[s] = mean;
    if (opts.n_realizations > 1) {
      const double var = (col.array() - mean).square().sum() / (opts.n_realizations - 1);
      report.chi_std[s] = std::sqrt(std::max(0.0, var));
    } else {
      report.chi_std[s] = 0.0;
    }
  }
  return report;
}

std::vector<std::pair<int, double>> plateau_reference_sites(const LatticeSpec1D& spec,
                                                            int margin_cells) {
  spec.validate();
  std::vector<std::pair<int, double>> sites;
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  const auto is_constant = [](const std::vector<double>& v) {
    for (double x : v)
      if (std::abs(x - v.front()) > 1e-12 * std::max(1.0, std::abs(v.front()))) return false;
    return !v.empty();
  };
  if (spec.alpha > 0.0 && is_constant(spec.t_bar) && spec.tau > spec.t_bar.front()) {
    const double target = std::sqrt((spec.tau - spec.t_bar.front()) / spec.alpha);
    for (int j = 1 + margin_cells; j <= N - margin_cells; ++j)
      sites.emplace_back(spec.site_of_a(j), target);
  }
  if (spec.beta > 0.0 && is_constant(spec.lambda_bar) &&
      spec.j_hop + spec.delta > spec.lambda_bar.front()) {
    const double target = std::sqrt((spec.j_hop + spec.delta - spec.lambda_bar.front()) / spec.beta);
    for (int j = N + 1 + margin_cells; j <= cells - margin_cells; ++j)
      sites.emplace_back(spec.site_of_a(j), target);
  }
  return sites;
}

namespace {

double coverage_fraction(const ComplexVector& state,
                         const std::vector<std::pair<int, double>>& reference, double rel_tol) {
  if (reference.empty()) return 0.0;
  int hit = 0;
  for (const auto& [site, target] : reference)
    if (std::abs(std::abs(state[site]) - target) <= rel_tol * target) ++hit;
  return static_cast<double>(hit) / static_cast<double>(reference.size());
}

}  // namespace

LongRangeReport long_range_excitation_compare(const LatticeSpec1D& spec_first,
                                              const LatticeSpec1D& spec_second,
                                              const LongRangeOptions& opts) {
  spec_first.validate();
  spec_second.validate();
  if (spec_first.n_sites != spec_second.n_sites) fail("both lattices must share n_sites");
  if (opts.xi_grid.empty()) fail("xi grid must be nonempty");

  // Both steady states are scored against the same long-range pattern: the
  // union of the closed-form plateau references of the two lattices. A
  // lattice whose parameters cannot hold part of the pattern is thereby
  // penalized on exactly those sites.
  std::vector<std::pair<int, double>> shared = plateau_reference_sites(spec_first,
                                                                       opts.margin_cells);
  for (const auto& [site, target] : plateau_reference_sites(spec_second, opts.margin_cells)) {
    bool found = false;
    for (auto& [s, t] : shared) {
      if (s != site) continue;
      found = true;
      if (std::abs(t - target) > 1e-9 * std::max(1.0, target))
        fail("the two lattices define conflicting plateau targets on site " +
             std::to_string(site + 1));
    }
    if (!found) shared.emplace_back(site, target);
  }
  if (shared.empty()) fail("neither lattice defines a plateau pattern");
  std::sort(shared.begin(), shared.end());

  const std::array<const LatticeSpec1D*, 2> specs = {&spec_first, &spec_second};
  const std::array<std::vector<std::pair<int, double>>, 2> reference = {shared, shared};

  const std::size_t n = opts.xi_grid.size();
  LongRangeReport report;
  report.xi = opts.xi_grid;
  report.coverage_first.resize(n);
  report.coverage_second.resize(n);
  report.intensity_first.resize(n);
  report.intensity_second.resize(n);

  parallel_for(2 * n, opts.threads, [&](std::size_t task) {
    const std::size_t which = task / n;
    const std::size_t k = task % n;
    const LatticeSpec1D& spec = *specs[which];
    const PumpConfig pump = PumpConfig::single_site(spec, opts.pump_site_m, opts.xi_grid[k],
                                                    opts.frequency, opts.kappa_a, opts.kappa_b);
    EvolveOptions eopts;
    eopts.dt = opts.dt;
    eopts.t_end = opts.t_end;
    eopts.stop_when_steady = true;
    const DrivenSystem system(spec, pump);
    const ComplexVector final_state =
        evolve_observed(system, eopts, ComplexVector::Zero(spec.n_sites), 1 << 30, nullptr);
    const double cov = coverage_fraction(final_state, reference[which], opts.rel_tol);
    const double intensity = final_state.squaredNorm();
    if (which == 0) {
      report.coverage_first[k] = cov;
      report.intensity_first[k] = intensity;
    } else {
      report.coverage_second[k] = cov;
      report.intensity_second[k] = intensity;
    }
  });
  return report;
}

}  // namespace nhtl
