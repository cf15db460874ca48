#include <doctest.h>

#include <cmath>

#include "nhtl/dynamics.hpp"
#include "nhtl/nonlinear_modes.hpp"
#include "nhtl/rng.hpp"
#include "support/oracles.hpp"

using namespace nhtl;

namespace {

LatticeSpec1D small_spec() {
  return LatticeSpec1D::uniform(2, 9, 2.5, 1.0, 0.05, 1.5, 0.5, 2.5, 0.1, 2.5);
}

LatticeSpec1D fig5_spec() {
  return LatticeSpec1D::uniform(31, 121, 2.5, 1.5, 0.05, 1.5, 1.0, 1.5, 0.05, 2.5);
}

}  // namespace

TEST_CASE("pump validation guards support, range and losses") {
  const LatticeSpec1D spec = small_spec();
  CHECK_NOTHROW(PumpConfig::single_site(spec, 1, 1.0, 0.0, 0.01, 0.5));
  CHECK_THROWS_AS(PumpConfig::single_site(spec, 3, 1.0, 0.0, 0.01, 0.5), std::invalid_argument);

  PumpConfig bad;
  bad.profile = ComplexVector::Zero(spec.n_sites);
  bad.profile[0] = 1.0;  // a-site of the reciprocal chain: not allowed
  CHECK_THROWS_AS(bad.validate(spec), std::invalid_argument);

  PumpConfig bsite;
  bsite.profile = ComplexVector::Zero(spec.n_sites);
  bsite.profile[spec.site_of_b(3)] = 1.0;
  CHECK_THROWS_AS(bsite.validate(spec), std::invalid_argument);

  PumpConfig neg = PumpConfig::single_site(spec, 1, 1.0, 0.0, 0.01, 0.5);
  neg.kappa_a = -0.1;
  CHECK_THROWS_AS(neg.validate(spec), std::invalid_argument);
}

TEST_CASE("vacuum is a fixed point without pumping") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.0, 0.0, 0.02, 0.3);
  EvolveOptions opts;
  opts.t_end = 5.0;
  opts.dt = 1e-3;
  opts.stop_when_steady = false;
  const Trajectory traj = evolve(spec, pump, opts, ComplexVector::Zero(spec.n_sites));
  CHECK(traj.steady_state.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear lossy eigenmode decays exactly exponentially") {
  LatticeSpec1D spec = small_spec();
  spec.alpha = 0.0;
  spec.beta = 0.0;
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.0, 0.0, 0.05, 0.4);
  const DrivenSystem system(spec, pump);

  ComplexMatrix h = build_hamiltonian_1d(spec, ComplexVector::Zero(spec.n_sites));
  h.diagonal() += system.loss_diagonal();
  Eigen::ComplexEigenSolver<ComplexMatrix> es(h, true);
  const int k = 2;
  const Complex omega = es.eigenvalues()[k];
  const ComplexVector mode = es.eigenvectors().col(k);

  EvolveOptions opts;
  opts.t_end = 4.0;
  opts.dt = 1e-3;
  opts.stop_when_steady = false;
  const Trajectory traj = evolve(spec, pump, opts, mode);
  const double expected = std::exp(omega.imag() * opts.t_end) * mode.norm();
  CHECK(traj.steady_state.norm() == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("norm never grows in a reciprocal lossy chain without pumping") {
  LatticeSpec1D spec = small_spec();
  spec.delta = 0.0;
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.0, 0.0, 0.1, 0.2);
  EvolveOptions opts;
  opts.t_end = 3.0;
  opts.dt = 1e-3;
  opts.stop_when_steady = false;
  opts.store_stride = 1;
  ComplexVector init(spec.n_sites);
  for (int i = 0; i < spec.n_sites; ++i)
    init[i] = Complex(counter_uniform(9, 2 * i, -1, 1), counter_uniform(9, 2 * i + 1, -1, 1));
  const Trajectory traj = evolve(spec, pump, opts, init);
  for (std::size_t k = 1; k < traj.states.size(); ++k)
    CHECK(traj.states[k].norm() <= traj.states[k - 1].norm() * (1 + 1e-8));
}

TEST_CASE("halving the step improves endpoints by the fourth-order factor") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 1.4, 0.0, 0.01, 0.5);
  const auto endpoint = [&](double dt) {
    EvolveOptions opts;
    opts.t_end = 5.0;
    opts.dt = dt;
    opts.stop_when_steady = false;
    return evolve(spec, pump, opts, ComplexVector::Zero(spec.n_sites)).steady_state;
  };
  const ComplexVector ref = endpoint(0.0005);
  const double e_coarse = (endpoint(0.008) - ref).norm();
  const double e_fine = (endpoint(0.004) - ref).norm();
  const double ratio = e_coarse / e_fine;
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("stability precondition and divergence guard") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 1.0, 0.0, 0.01, 0.5);
  EvolveOptions opts;
  opts.t_end = 1.0;
  opts.dt = 0.2;  // dt * |H| well above the bound
  CHECK_THROWS_AS(evolve(spec, pump, opts, ComplexVector::Zero(spec.n_sites)),
                  std::invalid_argument);
}

TEST_CASE("steady state without pumping is the vacuum") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.0, 0.0, 0.02, 0.3);
  const SteadyResult res = steady_state(spec, pump);
  CHECK(res.converged);
  CHECK(res.state.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("steady state satisfies the driven equation and the newton oracle agrees") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.8, 0.0, 0.05, 0.4);
  const SteadyResult res = steady_state(spec, pump);
  REQUIRE(res.converged);
  CHECK(res.residual < 1e-9);

  const auto newton = oracle::newton_steady(spec, pump, res.state);
  REQUIRE(newton.has_value());
  CHECK((*newton - res.state).norm() / res.state.norm() < 1e-8);
}

TEST_CASE("evolving from the steady state stays put") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.8, 0.0, 0.05, 0.4);
  const SteadyResult res = steady_state(spec, pump);
  REQUIRE(res.converged);
  EvolveOptions opts;
  opts.t_end = 10.0;
  opts.dt = 1e-3;
  opts.stop_when_steady = false;
  const Trajectory traj = evolve(spec, pump, opts, res.state);
  CHECK((traj.steady_state - res.state).norm() / res.state.norm() < 1e-6);
}

TEST_CASE("noise-free similarity is identically one") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.8, 0.0, 0.05, 0.4);
  const SteadyResult res = steady_state(spec, pump);
  REQUIRE(res.converged);

  NoiseOptions nopts;
  nopts.n_realizations = 3;
  nopts.noise_lo = 0.0;
  nopts.noise_hi = 0.0;
  nopts.t_end = 2.0;
  nopts.dt = 1e-3;
  nopts.threads = 2;
  const RobustnessReport report = noise_robustness(spec, pump, res.state, nopts);
  for (const double chi : report.chi_mean) CHECK(chi == doctest::Approx(1.0).epsilon(1e-9));
  for (const double dev : report.chi_std) CHECK(dev < 1e-12);
}

TEST_CASE("similarity stays within [0, 1] and its start is seed deterministic") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 0.8, 0.0, 0.05, 0.4);
  const SteadyResult res = steady_state(spec, pump);
  REQUIRE(res.converged);

  NoiseOptions nopts;
  nopts.n_realizations = 4;
  nopts.master_seed = 77;
  nopts.t_end = 1.0;
  nopts.dt = 1e-3;
  const RobustnessReport a = noise_robustness(spec, pump, res.state, nopts);
  nopts.threads = 2;
  const RobustnessReport b = noise_robustness(spec, pump, res.state, nopts);
  CHECK(a.chi_mean == b.chi_mean);  // thread count cannot change the statistics
  for (const double chi : a.chi_mean) {
    CHECK(chi >= 0.0);
    CHECK(chi <= 1.0);
  }
  CHECK(a.chi_mean.front() < 1.0);

  CHECK_THROWS_AS(noise_robustness(spec, pump, ComplexVector::Zero(spec.n_sites), nopts),
                  std::invalid_argument);
}

TEST_CASE("norm balance matches the instantaneous drive and loss") {
  const LatticeSpec1D spec = small_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 1.2, 0.0, 0.05, 0.4);
  const DrivenSystem system(spec, pump);
  EvolveOptions opts;
  opts.t_end = 2.0;
  opts.dt = 1e-3;
  opts.stop_when_steady = false;
  opts.store_stride = 1;
  const Trajectory traj = evolve(spec, pump, opts, ComplexVector::Zero(spec.n_sites));
  for (std::size_t k = 50; k + 1 < traj.states.size(); k += 100) {
    const double numeric =
        (traj.states[k + 1].squaredNorm() - traj.states[k - 1].squaredNorm()) / (2 * opts.dt);
    const double analytic =
        2.0 * traj.states[k].dot(system.rhs(traj.times[k], traj.states[k])).real();
    CHECK(numeric == doctest::Approx(analytic).epsilon(5e-5).scale(1.0));
  }
}

TEST_CASE("pumping toward the flat zero-mode profile reaches its plateau") {
  // moderate drive on the interface chain: the steady profile approaches the
  // designed flat zero mode on the nonreciprocal side
  const LatticeSpec1D spec = fig5_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 2.5, 0.0, 0.01, 0.5);
  const SteadyResult res = steady_state(spec, pump);
  REQUIRE(res.converged);
  CHECK(res.residual < 1e-9);
  const auto reference = plateau_reference_sites(spec, 3);
  REQUIRE_FALSE(reference.empty());
  int hit = 0;
  for (const auto& [site, target] : reference)
    if (std::abs(std::abs(res.state[site]) - target) < 0.1 * target) ++hit;
  CHECK(static_cast<double>(hit) / static_cast<double>(reference.size()) > 0.9);
}

TEST_CASE("long-range comparison swaps columns with its arguments") {
  const LatticeSpec1D spec_a = small_spec();
  LatticeSpec1D spec_b = small_spec();
  spec_b.delta = 0.0;
  spec_b.lambda_bar.assign(spec_b.lambda_bar.size(), 2.5);

  LongRangeOptions opts;
  opts.xi_grid = {0.5, 1.5};
  opts.t_end = 40.0;
  opts.dt = 2e-3;
  opts.margin_cells = 0;
  opts.threads = 2;
  const LongRangeReport ab = long_range_excitation_compare(spec_a, spec_b, opts);
  const LongRangeReport ba = long_range_excitation_compare(spec_b, spec_a, opts);
  CHECK(ab.coverage_first == ba.coverage_second);
  CHECK(ab.coverage_second == ba.coverage_first);
  CHECK(ab.intensity_first == ba.intensity_second);
}
