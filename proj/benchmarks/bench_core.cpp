#include <benchmark/benchmark.h>

#include "nhtl/dynamics.hpp"
#include "nhtl/localizer.hpp"
#include "nhtl/nonlinear_modes.hpp"

using namespace nhtl;

namespace {

LatticeSpec1D reference_spec() {
  return LatticeSpec1D::uniform(31, 121, 2.5, 1.5, 0.05, 1.5, 1.0, 1.5, 0.05, 2.5);
}

ComplexVector plateau_state(const LatticeSpec1D& spec) { return intensity_shoot(spec, 900.0); }

}  // namespace

static void BM_BuildDense(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const ComplexVector psi = plateau_state(spec);
  for (auto _ : state) {
    const ComplexMatrix h = build_hamiltonian_1d(spec, psi);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_BuildDense);

static void BM_ApplyBonds(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const BondHamiltonian ham = lattice_bonds(spec);
  const ComplexVector psi = plateau_state(spec);
  for (auto _ : state) {
    const ComplexVector y = ham.apply(psi, psi);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ApplyBonds);

static void BM_DiagonalizeRescaled(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const ModeSolver solver = make_solver(spec);
  const ComplexVector psi = plateau_state(spec);
  ComplexVector omegas;
  ComplexMatrix vectors;
  for (auto _ : state) {
    solver.diagonalize(psi, &omegas, &vectors);
    benchmark::DoNotOptimize(vectors.data());
  }
}
BENCHMARK(BM_DiagonalizeRescaled);

static void BM_DiagonalizeComplex(benchmark::State& state) {
  LatticeSpec1D spec = reference_spec();
  spec.delta = 1.5;  // unidirectional: forces the general complex path
  spec.beta = 0.075;
  const ModeSolver solver = make_solver(spec);
  const ComplexVector psi = plateau_state(spec);
  ComplexVector omegas;
  ComplexMatrix vectors;
  for (auto _ : state) {
    solver.diagonalize(psi, &omegas, &vectors);
    benchmark::DoNotOptimize(vectors.data());
  }
}
BENCHMARK(BM_DiagonalizeComplex);

static void BM_SolveMode(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const ModeSolver solver = make_solver(spec);
  const ComplexVector seed = plateau_state(spec);
  SolverOptions opts;
  for (auto _ : state) {
    const Mode mode = solver.solve(900.0, seed, opts);
    benchmark::DoNotOptimize(mode.residual);
  }
}
BENCHMARK(BM_SolveMode);

static void BM_LocalizerProbe(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const ComplexVector psi = plateau_state(spec);
  const auto transform = similarity_transform(spec, psi);
  const RealVector pos = position_operator(spec.n_sites);
  const RealVector chi = chiral_operator(spec.n_sites);
  for (auto _ : state) {
    const LocalizerProbe probe = localizer_probe(transform.h_s, pos, chi, 60.5, 0.2);
    benchmark::DoNotOptimize(probe.local_gap);
  }
}
BENCHMARK(BM_LocalizerProbe);

static void BM_EvolveStep(benchmark::State& state) {
  const LatticeSpec1D spec = reference_spec();
  const PumpConfig pump = PumpConfig::single_site(spec, 1, 2.5, 0.0, 0.01, 0.5);
  const DrivenSystem system(spec, pump);
  EvolveOptions opts;
  opts.dt = 0.005;
  opts.t_end = 0.005 * 1000;
  opts.stop_when_steady = false;
  const ComplexVector start = ComplexVector::Zero(spec.n_sites);
  for (auto _ : state) {
    const ComplexVector end = evolve_observed(system, opts, start, 1 << 30, nullptr);
    benchmark::DoNotOptimize(end.data());
  }
  state.SetItemsProcessed(state.iterations() * 1000);  // integration steps
}
BENCHMARK(BM_EvolveStep);

BENCHMARK_MAIN();
