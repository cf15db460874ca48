#pragma once

#include <vector>

#include "nhtl/lattice.hpp"

namespace nhtl {

/// Diagonal positive rescaling that maps the nonreciprocal chain Hamiltonian
/// onto a Hermitian one with the same spectrum. The first 2N entries are 1;
/// beyond the interface the entries step down by r = sqrt|(J-d)/(J+d)| per
/// cell, pairing each b-site with the following a-site.
struct SimilarityMap {
  RealVector diagonal;
  double r = 1.0;
};

/// Throws std::invalid_argument when |J| == |delta| (singular transform).
SimilarityMap similarity_map(const LatticeSpec1D& spec);

/// Row-wise tiling of the 1D map for stacked chains.
RealVector similarity_diagonal(const LatticeSpec2D& spec);

struct SimilarityTransformResult {
  ComplexMatrix h_s;  // S H(state) S^{-1}
  SimilarityMap map;
};

SimilarityTransformResult similarity_transform(const LatticeSpec1D& spec,
                                               const ComplexVector& state);
SimilarityTransformResult similarity_transform(const DisorderedLattice& lattice,
                                               const ComplexVector& state);

/// max_ij |H - H^dagger|.
double hermiticity_defect(const ComplexMatrix& h);

/// Position operator for the flat chain: diag(1, 2, ..., L).
RealVector position_operator(int n_sites);

/// Chiral operator: +1 on the a sublattice, -1 on b. For stacked chains the
/// sublattice alternates with x + y.
RealVector chiral_operator(int n_sites);
RealVector chiral_operator(const LatticeSpec2D& spec);

/// max_ij |H P + P H| with P diagonal.
double chiral_defect(const ComplexMatrix& h_s, const RealVector& chiral);

/// Spectral localizer at probe (x, omega_bar), dimension 2L:
///   [ 0                                   eta (X - x) - i (H_S - omega_bar) ]
///   [ eta (X - x) + i (H_S - omega_bar)   0                                 ]
/// Hermitian by construction. Throws when h_s is not Hermitian within
/// 1e-10 of its magnitude.
ComplexMatrix full_localizer(const ComplexMatrix& h_s, const RealVector& positions, double x,
                             double omega_bar, double eta);

/// Chiral-reduced localizer, dimension L:
///   eta (X - x) Pi + H_S - i omega_bar Pi
/// Hermitian when omega_bar = 0. Throws when the chiral anticommutation
/// fails within 1e-10 (e.g. onsite disorder present); use full_localizer then.
ComplexMatrix reduced_localizer(const ComplexMatrix& h_s, const RealVector& positions,
                                const RealVector& chiral, double x, double omega_bar, double eta);

/// Probe outcome at zeta = (x, omega_bar): reduced-localizer spectrum, local
/// gap mu = min |sigma|, and the half-integer invariant C = Sig/2. Eigenvalues
/// with |sigma| < 1e-12 * max|sigma| are counted as zero and reported.
struct LocalizerProbe {
  double x = 0.0;
  double omega_bar = 0.0;
  double eta = 0.0;
  double local_gap = 0.0;
  double invariant = 0.0;
  int n_zero = 0;
  std::vector<double> spectrum;
};

/// Probe at omega_bar = 0 (chiral symmetry protects only the spectrum center).
LocalizerProbe localizer_probe(const ComplexMatrix& h_s, const RealVector& positions,
                               const RealVector& chiral, double x, double eta);

std::vector<LocalizerProbe> local_invariant_scan(const ComplexMatrix& h_s,
                                                 const RealVector& positions,
                                                 const RealVector& chiral,
                                                 const std::vector<double>& x_grid, double eta,
                                                 int threads = 1);
std::vector<LocalizerProbe> local_invariant_scan(const LatticeSpec1D& spec,
                                                 const ComplexVector& state,
                                                 const std::vector<double>& x_grid, double eta,
                                                 int threads = 1);

/// Bisects [x_lo, x_hi] (where the invariant jumps) down to the gap closure;
/// returns the refined probe, whose local gap is below ~eta * 1e-9.
LocalizerProbe locate_gap_closure(const ComplexMatrix& h_s, const RealVector& positions,
                                  const RealVector& chiral, double x_lo, double x_hi, double eta);

/// Largest local gap over the probes whose invariant differs from the
/// far-field value on the right (the probed topological region).
double topological_gap_max(const std::vector<LocalizerProbe>& probes);

struct ProtectionReport {
  double margin = 0.0;
  bool is_protected = false;
  double perturbation_norm = 0.0;  // largest singular value of H_S' - H_S
  double mu_max = 0.0;
};

/// Margin of the protection bound: mu_max minus the largest singular value of
/// the Hamiltonian perturbation.
ProtectionReport protection_margin(const ComplexMatrix& h_s_base,
                                   const ComplexMatrix& h_s_perturbed, double mu_max);

}  // namespace nhtl
