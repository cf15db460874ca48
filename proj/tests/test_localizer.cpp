#include <doctest.h>

#include <cmath>

#include "nhtl/localizer.hpp"
#include "nhtl/nonlinear_modes.hpp"
#include "nhtl/rng.hpp"
#include "support/oracles.hpp"

using namespace nhtl;

namespace {

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

}  // namespace

TEST_CASE("reciprocal limit gives the identity rescaling") {
  LatticeSpec1D spec = small_spec();
  spec.delta = 0.0;
  const SimilarityMap map = similarity_map(spec);
  CHECK(map.r == 1.0);
  CHECK((map.diagonal.array() - 1.0).abs().maxCoeff() == 0.0);
  const ComplexVector psi = random_state(spec.n_sites, 3);
  const auto transform = similarity_transform(spec, psi);
  CHECK((transform.h_s - build_hamiltonian_1d(spec, psi)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rescaling ratio and symmetric intracell amplitude at delta = 1") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const SimilarityMap map = similarity_map(spec);
  CHECK(map.r == doctest::Approx(0.4472135954999579).epsilon(1e-15));

  const auto transform = similarity_transform(spec, ComplexVector::Zero(spec.n_sites));
  const int a = spec.site_of_a(spec.n_hermitian_cells + 2);
  const int b = spec.site_of_b(spec.n_hermitian_cells + 2);
  CHECK(std::abs(transform.h_s(a, b)) == doctest::Approx(1.1180339887498949).epsilon(1e-12));
  CHECK(std::abs(transform.h_s(b, a)) == doctest::Approx(1.1180339887498949).epsilon(1e-12));
}

TEST_CASE("rescaling diagonal follows the documented pattern") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const SimilarityMap map = similarity_map(spec);
  const int N = spec.n_hermitian_cells;
  const int L = spec.n_sites;
  for (int i = 0; i < 2 * N; ++i) CHECK(map.diagonal[i] == 1.0);
  // beyond the interface: 1, r, r, r^2, r^2, ..., ending with a doubled top power
  const int tail = (L - 1) / 2 - N;
  CHECK(map.diagonal[2 * N] == 1.0);
  for (int k = 1; k <= tail; ++k) {
    CHECK(map.diagonal[2 * N + 2 * k - 1] == doctest::Approx(std::pow(map.r, k)).epsilon(1e-13));
    CHECK(map.diagonal[2 * N + 2 * k] == doctest::Approx(std::pow(map.r, k)).epsilon(1e-13));
  }
  CHECK(map.diagonal[L - 1] == doctest::Approx(std::pow(map.r, tail)).epsilon(1e-13));
}

TEST_CASE("similarity transform hermitizes and preserves spectra and eigenvectors") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const BranchResult branch = trace_tzm_branch(spec, {900.0});
  REQUIRE(branch.modes.front().converged);
  const ComplexVector psi = branch.modes.front().state;

  const auto transform = similarity_transform(spec, psi);
  CHECK(hermiticity_defect(transform.h_s) < 1e-10);

  // Spectrum preservation, checked through eigenvector witnesses: every
  // eigenpair of H_S maps back to an eigenpair of H. The back-rescaled
  // vectors lose absolute accuracy on the amplified components, so each
  // witness gets one inverse-iteration refinement on the raw matrix before
  // its residual is measured. (A direct eigenvalue comparison would only
  // probe the general eigensolver, which is exponentially ill-conditioned on
  // the raw nonreciprocal matrix at this size.)
  const ComplexMatrix h = build_hamiltonian_1d(spec, psi);
  const double h_norm = h.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> ess(transform.h_s);
  for (int i = 0; i < spec.n_sites; ++i) {
    ComplexVector v =
        transform.map.diagonal.cwiseInverse().asDiagonal() * ess.eigenvectors().col(i);
    v = oracle::refine_eigenvector(h, ess.eigenvalues()[i], std::move(v));
    const double residual = (h * v - ess.eigenvalues()[i] * v).norm() / (h_norm * v.norm());
    CHECK(residual < 1e-10);
  }

  // transformed eigenvector rule: H_S (S psi) = omega (S psi)
  const ComplexVector mapped = transform.map.diagonal.asDiagonal() * psi;
  const ComplexVector lhs = transform.h_s * mapped;
  CHECK((lhs - branch.modes.front().omega * mapped).norm() / mapped.norm() < 1e-8);
}

TEST_CASE("raw and rescaled spectra coincide where the raw solve is well conditioned") {
  const LatticeSpec1D spec = small_spec();
  const ComplexVector psi = random_state(spec.n_sites, 5);
  const auto transform = similarity_transform(spec, psi);
  Eigen::ComplexEigenSolver<ComplexMatrix> es(build_hamiltonian_1d(spec, psi), false);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> ess(transform.h_s);
  std::vector<double> raw(static_cast<std::size_t>(spec.n_sites));
  for (int i = 0; i < spec.n_sites; ++i) {
    raw[static_cast<std::size_t>(i)] = es.eigenvalues()[i].real();
    CHECK(std::abs(es.eigenvalues()[i].imag()) < 1e-10);
  }
  std::sort(raw.begin(), raw.end());
  for (int i = 0; i < spec.n_sites; ++i)
    CHECK(raw[static_cast<std::size_t>(i)] ==
          doctest::Approx(ess.eigenvalues()[i]).epsilon(1e-10).scale(1.0));
}

TEST_CASE("transformed zero mode decays into the nonreciprocal bulk") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ComplexVector psi = intensity_shoot(spec, 625.0);
  const SimilarityMap map = similarity_map(spec);
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  // the raw profile is plateau-like on the nonreciprocal side...
  const double plateau_start = std::abs(psi[spec.site_of_a(N + 5)]);
  const double plateau_end = std::abs(psi[spec.site_of_a(cells - 5)]);
  CHECK(plateau_end > 0.5 * plateau_start);
  // ...while the rescaled one drops by the accumulated powers of r
  const double mapped_start =
      map.diagonal[spec.site_of_a(N + 5)] * std::abs(psi[spec.site_of_a(N + 5)]);
  const double mapped_end =
      map.diagonal[spec.site_of_a(cells - 5)] * std::abs(psi[spec.site_of_a(cells - 5)]);
  CHECK(mapped_end < 1e-6 * mapped_start);
}

TEST_CASE("similarity transform rejects the unidirectional limit") {
  LatticeSpec1D spec = fig3_spec(1.5, 0.075);  // |J| = |delta|
  CHECK_THROWS_AS(similarity_map(spec), std::invalid_argument);
}

TEST_CASE("single-site localizer has unit eigenvalues") {
  const ComplexMatrix h = ComplexMatrix::Zero(1, 1);
  RealVector x(1);
  x << 1.0;
  const ComplexMatrix loc = full_localizer(h, x, 0.0, 0.0, 1.0);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(loc);
  CHECK(es.eigenvalues()[0] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(es.eigenvalues()[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("commuting diagonal localizer has the closed-form spectrum") {
  const int n = 5;
  RealVector x(n), lambda(n);
  for (int i = 0; i < n; ++i) {
    x[i] = i + 1;
    lambda[i] = 0.3 * i - 0.7;
  }
  const ComplexMatrix h = lambda.cast<Complex>().asDiagonal();
  const double eta = 0.4, x0 = 2.3, w0 = 0.1;
  const ComplexMatrix loc = full_localizer(h, x, x0, w0, eta);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(loc);
  std::vector<double> expected;
  for (int i = 0; i < n; ++i) {
    const double mag = std::hypot(eta * (x[i] - x0), lambda[i] - w0);
    expected.push_back(-mag);
    expected.push_back(mag);
  }
  std::sort(expected.begin(), expected.end());
  for (int i = 0; i < 2 * n; ++i)
    CHECK(es.eigenvalues()[i] == doctest::Approx(expected[static_cast<std::size_t>(i)])
                                     .epsilon(1e-12).scale(1.0));
}

TEST_CASE("reduced and full localizer gaps agree at the spectral center") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ComplexVector psi = intensity_shoot(spec, 400.0);
  const auto transform = similarity_transform(spec, psi);
  const RealVector pos = position_operator(spec.n_sites);
  const RealVector chi = chiral_operator(spec.n_sites);
  for (const double x : {1.0, 30.5, 62.0, 100.0, 121.0}) {
    const LocalizerProbe probe = localizer_probe(transform.h_s, pos, chi, x, 0.2);
    const ComplexMatrix full = full_localizer(transform.h_s, pos, x, 0.0, 0.2);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(full);
    const double mu_full = es.eigenvalues().cwiseAbs().minCoeff();
    CHECK(std::abs(probe.local_gap - mu_full) < 1e-10);
  }
}

TEST_CASE("far-field invariants are half integers bracketing the lattice") {
  const LatticeSpec1D spec = small_spec();
  const ComplexVector psi = intensity_shoot(spec, 4.0);
  const auto transform = similarity_transform(spec, psi);
  const RealVector pos = position_operator(spec.n_sites);
  const RealVector chi = chiral_operator(spec.n_sites);
  const LocalizerProbe left = localizer_probe(transform.h_s, pos, chi, -500.0, 0.2);
  const LocalizerProbe right = localizer_probe(transform.h_s, pos, chi, 500.0, 0.2);
  CHECK(left.invariant == doctest::Approx(0.5));
  CHECK(right.invariant == doctest::Approx(-0.5));
}

TEST_CASE("invariant jumps are integers and telescope across the scan") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ComplexVector psi = intensity_shoot(spec, 400.0);
  std::vector<double> grid = {-500.0};
  for (int i = 1; i <= spec.n_sites; ++i) grid.push_back(i);
  grid.push_back(500.0);
  const auto probes = local_invariant_scan(spec, psi, grid, 0.2, 2);
  double total_jump = 0.0;
  for (std::size_t i = 1; i < probes.size(); ++i) {
    const double jump = probes[i].invariant - probes[i - 1].invariant;
    CHECK(jump == doctest::Approx(std::round(jump)).epsilon(1e-12).scale(1.0));
    total_jump += jump;
    const double twice = 2.0 * probes[i].invariant;
    CHECK(twice == doctest::Approx(std::round(twice)).epsilon(1e-12).scale(1.0));
  }
  CHECK(total_jump == doctest::Approx(probes.back().invariant - probes.front().invariant));
  CHECK(probes.front().invariant == doctest::Approx(0.5));
  CHECK(probes.back().invariant == doctest::Approx(-0.5));
}

TEST_CASE("every invariant jump pins a gap closure") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const ComplexVector psi = intensity_shoot(spec, 400.0);
  const auto transform = similarity_transform(spec, psi);
  const RealVector pos = position_operator(spec.n_sites);
  const RealVector chi = chiral_operator(spec.n_sites);
  std::vector<double> grid;
  for (int i = 1; i <= spec.n_sites; ++i) grid.push_back(i);
  const auto probes = local_invariant_scan(transform.h_s, pos, chi, grid, 0.2, 2);
  int jumps = 0;
  for (std::size_t i = 1; i < probes.size(); ++i) {
    if (probes[i].invariant == probes[i - 1].invariant) continue;
    ++jumps;
    const LocalizerProbe closure =
        locate_gap_closure(transform.h_s, pos, chi, probes[i - 1].x, probes[i].x, 0.2);
    CHECK(closure.local_gap < 1e-6);
  }
  CHECK(jumps >= 1);
}

TEST_CASE("onsite disorder trips the chiral guard of the reduced localizer") {
  const LatticeSpec1D spec = fig3_spec(1.0, 0.05);
  const DisorderedLattice noisy = apply_disorder(spec, {DisorderKind::onsite, 0.5, 11});
  const ComplexVector psi = intensity_shoot(spec, 100.0);
  const auto transform = similarity_transform(noisy, psi);
  CHECK(hermiticity_defect(transform.h_s) < 1e-10);  // onsite terms stay Hermitian
  const RealVector pos = position_operator(spec.n_sites);
  const RealVector chi = chiral_operator(spec.n_sites);
  CHECK_THROWS_AS(reduced_localizer(transform.h_s, pos, chi, 10.0, 0.0, 0.2),
                  std::invalid_argument);
  CHECK_NOTHROW(full_localizer(transform.h_s, pos, 10.0, 0.0, 0.2));

  // additive intracell hopping disorder defeats the fixed rescaling entirely
  const DisorderedLattice hop = apply_disorder(spec, {DisorderKind::hopping, 0.5, 12});
  const auto bad = similarity_transform(hop, psi);
  CHECK(hermiticity_defect(bad.h_s) > 1e-10);
  CHECK_THROWS_AS(full_localizer(bad.h_s, pos, 10.0, 0.0, 0.2), std::invalid_argument);

  // multiplicative rescaling of the background hoppings keeps both guards happy
  const DisorderedLattice mult =
      apply_disorder(spec, {DisorderKind::multiplicative_hopping, 0.2, 13});
  const auto good = similarity_transform(mult, psi);
  CHECK(hermiticity_defect(good.h_s) < 1e-10);
  CHECK_NOTHROW(reduced_localizer(good.h_s, pos, chi, 10.0, 0.0, 0.2));
}

TEST_CASE("protection margin bookkeeping") {
  const LatticeSpec1D spec = small_spec();
  const ComplexVector psi = intensity_shoot(spec, 4.0);
  const auto transform = similarity_transform(spec, psi);
  const double mu_max = 0.7;

  const ProtectionReport none = protection_margin(transform.h_s, transform.h_s, mu_max);
  CHECK(none.margin == doctest::Approx(mu_max));
  CHECK(none.is_protected);

  // rank-one bump of norm exactly mu_max sits right on the boundary
  ComplexMatrix bump = transform.h_s;
  ComplexVector u = ComplexVector::Zero(spec.n_sites);
  u[2] = 1.0;
  bump += mu_max * (u * u.adjoint());
  const ProtectionReport edge = protection_margin(transform.h_s, bump, mu_max);
  CHECK(std::abs(edge.margin) < 1e-12);

  CHECK_THROWS_AS(protection_margin(transform.h_s, ComplexMatrix::Zero(3, 3), mu_max),
                  std::invalid_argument);
}
