#include <doctest.h>

#include <cmath>

#include "nhtl/nonlinear_modes.hpp"
#include "nhtl/rng.hpp"
#include "support/oracles.hpp"

using namespace nhtl;

namespace {

LatticeSpec1D fig2_spec(double delta) {
  return LatticeSpec1D::uniform(31, 121, 2.5, 1.0, 0.05, 1.5, delta, 2.5, 0.0, 2.5);
}

LatticeSpec1D fig3_spec(double delta, double beta) {
  return LatticeSpec1D::uniform(31, 121, 2.5, 1.5, 0.05, 1.5, delta, 1.5, beta, 2.5);
}

LatticeSpec1D small_spec() {
  return LatticeSpec1D::uniform(2, 9, 2.5, 1.0, 0.05, 1.5, 0.5, 2.5, 0.1, 2.5);
}

ComplexVector random_state(int n, std::uint64_t seed) {
  ComplexVector v(n);
  for (int i = 0; i < n; ++i)
    v[i] = Complex(counter_uniform(seed, 2 * i, -1, 1), counter_uniform(seed, 2 * i + 1, -1, 1));
  return v;
}

double a_site_abs(const LatticeSpec1D& spec, const ComplexVector& state, int cell) {
  return std::abs(state[spec.site_of_a(cell)]);
}

}  // namespace

TEST_CASE("linear recursion produces two geometric sequences") {
  LatticeSpec1D spec = LatticeSpec1D::uniform(4, 17, 2.5, 1.0, 0.0, 1.5, 0.5, 2.2, 0.0, 1.8);
  const ComplexVector state = tzm_recursion(spec, 1.0);
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  for (int j = 1; j <= cells - 1; ++j) {
    const Complex ratio = state[spec.site_of_a(j + 1)] / state[spec.site_of_a(j)];
    if (j < N)
      CHECK(ratio.real() == doctest::Approx(-spec.tau / 1.0));
    else if (j == N)
      CHECK(ratio.real() == doctest::Approx(-spec.tau / spec.t_d));
    else
      CHECK(ratio.real() == doctest::Approx(-(spec.j_hop + spec.delta) / 2.2));
    CHECK(ratio.imag() == 0.0);
  }
  // all b-site amplitudes vanish
  for (int j = 1; j <= cells - 1; ++j) CHECK(std::abs(state[spec.site_of_b(j)]) == 0.0);
}

TEST_CASE("interface amplitude step follows t_d") {
  for (const double t_d : {1.5, 2.5, 3.5}) {
    LatticeSpec1D spec = fig3_spec(1.0, 0.05);
    spec.t_d = t_d;
    const ComplexVector state = tzm_recursion(spec, 3.0);
    const int N = spec.n_hermitian_cells;
    const double lhs = a_site_abs(spec, state, N + 1);
    const double rhs = spec.tau * a_site_abs(spec, state, N) / t_d;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("recursion residual is tiny for the assembled hamiltonian") {
  // boundary amplitudes below the plateau height, where the sweep stays finite
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  for (const double c : {0.1, 1.0, 3.0, 4.4}) {
    const ComplexVector psi = tzm_recursion(spec, c);
    const ComplexMatrix h = build_hamiltonian_1d(spec, psi);
    CHECK((h * psi).norm() / psi.norm() < 1e-12);
  }
}

TEST_CASE("plateau heights evaluate the closed forms") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const auto [a_l, a_r] = plateau_heights(spec);
  CHECK(a_l == doctest::Approx(4.47213595499958).epsilon(1e-14));
  CHECK(a_r == doctest::Approx(4.47213595499958).epsilon(1e-14));

  const auto [a_l2, a_r2] = plateau_heights(fig3_spec(1.5, 0.075));
  CHECK(a_l2 == doctest::Approx(4.47213595499958).epsilon(1e-14));
  CHECK(a_r2 == doctest::Approx(4.47213595499958).epsilon(1e-14));

  LatticeSpec1D degenerate = fig3_spec(1.0, 0.05);
  degenerate.t_bar.assign(degenerate.t_bar.size(), degenerate.tau);
  CHECK(plateau_heights(degenerate).first == 0.0);

  LatticeSpec1D invalid = fig3_spec(1.0, 0.05);
  invalid.beta = 0.0;
  CHECK_THROWS_AS(plateau_heights(invalid), std::invalid_argument);
}

TEST_CASE("deep-bulk amplitudes approach the plateau on both chains") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const auto [a_l, a_r] = plateau_heights(spec);
  const int N = spec.n_hermitian_cells;
  // nonreciprocal side saturates first: visible already via the recursion
  const ComplexVector partial = intensity_shoot(spec, 625.0);
  CHECK(a_site_abs(spec, partial, N + (spec.n_cells() - N) / 2) ==
        doctest::Approx(a_r).epsilon(0.02));
  // both chains at plateau: the intensity exceeds what the boundary-amplitude
  // sweep can resolve, so solve the zero mode as a boundary-value problem
  const Mode full = solve_zero_mode(spec, 1296.0, partial);
  REQUIRE(full.converged);
  CHECK(a_site_abs(spec, full.state, N / 2) == doctest::Approx(a_l).epsilon(0.02));
  CHECK(a_site_abs(spec, full.state, N + (spec.n_cells() - N) / 2) ==
        doctest::Approx(a_r).epsilon(0.02));
}

TEST_CASE("intensity shoot hits the target and round trips") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ComplexVector ref = tzm_recursion(spec, 2.0);
  const double target = total_intensity(ref);
  const ComplexVector found = intensity_shoot(spec, target);
  CHECK(total_intensity(found) == doctest::Approx(target).epsilon(1e-8));
  CHECK(std::abs(found[spec.n_sites - 1]) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK_THROWS_AS(intensity_shoot(spec, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(tzm_recursion(spec, -1.0), std::invalid_argument);
}

TEST_CASE("recursion overflows only past the plateau amplitude") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const auto [a_l, a_r] = plateau_heights(spec);
  CHECK_NOTHROW(tzm_recursion(spec, a_r * 0.999));
  CHECK_THROWS_AS(tzm_recursion(spec, a_r * 1.5), std::overflow_error);
  // the shoot brackets near the divergence edge without throwing...
  const ComplexVector near_edge = intensity_shoot(spec, 625.0);
  CHECK(total_intensity(near_edge) == doctest::Approx(625.0).epsilon(1e-8));
  // ...and reports honestly when the boundary-amplitude grid cannot resolve
  // the requested intensity (both chains saturated)
  CHECK_THROWS_AS(intensity_shoot(spec, 2500.0), std::runtime_error);
}

TEST_CASE("flat design at the plateau height returns constant hoppings") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ProfileTarget target = make_profile_target(ProfileShape::flat, spec);
  const DesignedHoppings design = design_hoppings(spec, target);
  for (const double t : design.t_bar) CHECK(t == doctest::Approx(1.5).epsilon(1e-12));
  for (const double l : design.lambda_bar) CHECK(l == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("design then recursion reproduces targets") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  for (const ProfileShape shape : {ProfileShape::flat, ProfileShape::square,
                                   ProfileShape::triangle, ProfileShape::cosine}) {
    const ProfileTarget target = make_profile_target(shape, spec);
    const LatticeSpec1D designed = apply_design(spec, design_hoppings(spec, target));
    const ComplexVector state = tzm_recursion(designed, target.samples.back());
    for (int j = 1; j <= spec.n_cells(); ++j) {
      const double got = a_site_abs(spec, state, j);
      const double want = target.samples[static_cast<std::size_t>(j - 1)];
      CHECK(std::abs(got - want) / want < 1e-10);
    }
  }
}

TEST_CASE("design round trips on a random smooth positive target") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  std::vector<double> samples(static_cast<std::size_t>(spec.n_cells()));
  for (std::size_t j = 0; j < samples.size(); ++j)
    samples[j] = 3.0 + std::sin(0.21 * static_cast<double>(j)) +
                 0.4 * counter_uniform(5, j, -1.0, 1.0);
  const ProfileTarget target = make_profile_target(samples, spec);
  const LatticeSpec1D designed = apply_design(spec, design_hoppings(spec, target));
  const ComplexVector state = tzm_recursion(designed, target.samples.back());
  for (int j = 1; j <= spec.n_cells(); ++j) {
    const double got = a_site_abs(spec, state, j);
    const double want = target.samples[static_cast<std::size_t>(j - 1)];
    CHECK(std::abs(got - want) / want < 1e-10);
  }
}

TEST_CASE("infeasible designs are rejected with the offending cell") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  std::vector<double> samples(static_cast<std::size_t>(spec.n_cells()), 3.0);
  samples[10] = 0.05;  // forces a steep step the hoppings cannot realize
  const ProfileTarget target = make_profile_target(samples, spec);
  CHECK_THROWS_WITH_AS(design_hoppings(spec, target),
                       doctest::Contains("infeasible"), std::invalid_argument);

  std::vector<double> negative(static_cast<std::size_t>(spec.n_cells()), 3.0);
  negative[4] = -1.0;
  CHECK_THROWS_AS(make_profile_target(negative, spec), std::invalid_argument);
}

TEST_CASE("participation ratio limits") {
  ComplexVector uniform = ComplexVector::Constant(121, Complex(0.3, -0.2));
  CHECK(participation_ratio(uniform) == doctest::Approx(1.0).epsilon(1e-14));
  ComplexVector single = ComplexVector::Zero(121);
  single[17] = 2.0;
  CHECK(participation_ratio(single) == doctest::Approx(0.008264462809917356).epsilon(1e-12));
  CHECK_THROWS_AS(participation_ratio(ComplexVector::Zero(5)), std::invalid_argument);
}

TEST_CASE("vanishing intensity reproduces the linear spectrum") {
  const LatticeSpec1D spec = fig2_spec(0.5);
  const ModeSolver solver = make_solver(spec);
  CHECK(solver.fast_path());
  const auto modes = solve_modes_at_intensity(spec, 1e-10, random_state(spec.n_sites, 3), 1e-10,
                                              500, 2);
  ComplexVector omegas;
  ComplexMatrix vectors;
  solver.diagonalize(ComplexVector::Zero(spec.n_sites), &omegas, &vectors);
  std::vector<double> linear(omegas.size()), nonlinear(modes.size());
  for (Eigen::Index i = 0; i < omegas.size(); ++i) linear[static_cast<std::size_t>(i)] = omegas[i].real();
  for (std::size_t i = 0; i < modes.size(); ++i) nonlinear[i] = modes[i].omega.real();
  std::sort(linear.begin(), linear.end());
  std::sort(nonlinear.begin(), nonlinear.end());
  for (std::size_t i = 0; i < nonlinear.size(); ++i)
    CHECK(nonlinear[i] == doctest::Approx(linear[i]).epsilon(1e-8).scale(1.0));
}

TEST_CASE("solver modes satisfy the independent newton oracle") {
  const LatticeSpec1D spec = small_spec();
  const double target = 4.0;
  const auto modes =
      solve_modes_at_intensity(spec, target, ComplexVector::Ones(spec.n_sites), 1e-11, 5000, 2);
  REQUIRE(modes.size() == static_cast<std::size_t>(spec.n_sites));
  int n_converged = 0;
  for (const Mode& mode : modes) {
    if (!mode.converged) continue;
    ++n_converged;
    CHECK(mode.intensity == doctest::Approx(target).epsilon(1e-12));
    const auto polished = oracle::newton_mode(spec, target, mode.state, mode.omega);
    REQUIRE(polished.converged);
    // the oracle should accept the solver mode nearly unchanged
    CHECK((polished.state - mode.state).norm() / mode.state.norm() < 1e-6);
    CHECK(std::abs(polished.omega - mode.omega) < 1e-6);
  }
  CHECK(n_converged >= spec.n_sites / 2);
}

TEST_CASE("newton oracle from random seeds finds the zero mode the solver reports") {
  const LatticeSpec1D spec = small_spec();
  const double target = 4.0;
  const BranchResult branch = trace_tzm_branch(spec, {target});
  REQUIRE(branch.modes.size() == 1);
  REQUIRE(branch.modes.front().converged);
  const ComplexVector solver_tzm = branch.modes.front().state;

  int matches = 0;
  for (int s = 0; s < 100; ++s) {
    ComplexVector seed = random_state(spec.n_sites, 1000 + static_cast<std::uint64_t>(s));
    seed *= std::sqrt(target) / seed.norm();
    const auto found = oracle::newton_mode(spec, target, seed, Complex(0, 0), 100);
    if (!found.converged) continue;
    if (std::abs(found.omega) > 1e-8) continue;
    const double overlap = state_overlap(found.state, solver_tzm);
    if (overlap > 1.0 - 1e-8) ++matches;
  }
  CHECK(matches > 0);
}

TEST_CASE("single-point trace equals the zero mode from the full solve") {
  const LatticeSpec1D spec = fig2_spec(0.5);
  const double target = 16.0;
  const BranchResult branch = trace_tzm_branch(spec, {target});
  REQUIRE(branch.modes.size() == 1);
  CHECK(branch.classification.front() == ModeClass::tzm);

  const auto all = solve_modes_at_intensity(spec, target, ComplexVector::Ones(spec.n_sites),
                                            1e-10, 10000, 2);
  const Mode* zero_mode = nullptr;
  for (const Mode& m : all) {
    if (!m.converged) continue;
    if (!zero_mode || std::abs(m.omega) < std::abs(zero_mode->omega)) zero_mode = &m;
  }
  REQUIRE(zero_mode != nullptr);
  CHECK(state_overlap(zero_mode->state, branch.modes.front().state) > 1.0 - 1e-8);
}

TEST_CASE("traced zero-mode branch keeps sublattice polarization and continuity") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const auto grid = continuation_grid(1.0, 1600.0, 10);
  const BranchResult branch = trace_tzm_branch(spec, grid);
  REQUIRE_FALSE(branch.branch_lost);
  REQUIRE(branch.modes.size() == grid.size());
  for (std::size_t i = 0; i < branch.modes.size(); ++i) {
    const Mode& m = branch.modes[i];
    CHECK(m.converged);
    CHECK(branch.classification[i] == ModeClass::tzm);
    double max_a = 0, max_b = 0;
    for (int s = 0; s < spec.n_sites; ++s)
      (LatticeSpec1D::is_a_site(s) ? max_a : max_b) =
          std::max(LatticeSpec1D::is_a_site(s) ? max_a : max_b, std::abs(m.state[s]));
    CHECK(max_b < 1e-8 * max_a);
    if (i > 0) CHECK(state_overlap(branch.modes[i - 1].state, m.state) > 0.5);
  }
}

TEST_CASE("critical nonreciprocity pushes the low-intensity zero mode onto the nonreciprocal chain") {
  const LatticeSpec1D spec = fig2_spec(1.0);  // delta equals lambda_bar - j_hop
  const BranchResult branch = trace_tzm_branch(spec, {25.0});
  REQUIRE(branch.modes.front().converged);
  CHECK(nonhermitian_weight(spec, branch.modes.front().state) > 0.95);
}

TEST_CASE("solver agrees with the recursion family") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const auto grid = continuation_grid(1.0, 625.0, 8);
  const BranchResult branch = trace_tzm_branch(spec, grid);
  REQUIRE_FALSE(branch.branch_lost);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const ComplexVector shooter = intensity_shoot(spec, grid[i]);
    const ComplexVector solved = branch.modes[i].state;
    // align the arbitrary sign/phase before comparing
    const Complex phase = solved.dot(shooter) / std::abs(solved.dot(shooter));
    CHECK((shooter - phase * solved).norm() / shooter.norm() < 1e-6);
  }
}

TEST_CASE("continuation grid is ascending and hits both ends") {
  const auto grid = continuation_grid(1.0, 2500.0, 20);
  CHECK(grid.size() == 20);
  CHECK(grid.front() == 1.0);
  CHECK(grid.back() == 2500.0);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  CHECK_THROWS_AS(continuation_grid(0.0, 1.0, 5), std::invalid_argument);
}

TEST_CASE("solver rejects bad seeds and negative targets") {
  const LatticeSpec1D spec = small_spec();
  const ModeSolver solver = make_solver(spec);
  CHECK_THROWS_AS(solver.solve(1.0, ComplexVector::Zero(spec.n_sites), {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(solver.solve(-1.0, ComplexVector::Ones(spec.n_sites), {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(trace_tzm_branch(spec, {}), std::invalid_argument);
  CHECK_THROWS_AS(trace_tzm_branch(spec, {4.0, 2.0}), std::invalid_argument);
}
