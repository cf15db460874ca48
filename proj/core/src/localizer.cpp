#include "nhtl/localizer.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

#include "nhtl/parallel.hpp"

namespace nhtl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double matrix_scale(const ComplexMatrix& h) {
  const double m = h.cwiseAbs().maxCoeff();
  return std::max(m, 1.0);
}

}  // namespace

SimilarityMap similarity_map(const LatticeSpec1D& spec) {
  spec.validate();
  const double num = spec.j_hop - spec.delta;
  const double den = spec.j_hop + spec.delta;
  if (num == 0.0 || den == 0.0)
    fail("similarity transform is singular at |J| = |delta| (unidirectional hopping)");
  SimilarityMap map;
  map.r = std::sqrt(std::abs(num / den));
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  map.diagonal = RealVector::Ones(spec.n_sites);
  for (int j = N + 1; j <= cells; ++j) {
    map.diagonal[spec.site_of_a(j)] = std::pow(map.r, j - N - 1);
    if (j < cells) map.diagonal[spec.site_of_b(j)] = std::pow(map.r, j - N);
  }
  return map;
}

RealVector similarity_diagonal(const LatticeSpec2D& spec) {
  spec.validate();
  const SimilarityMap row = similarity_map(spec.chain_spec);
  RealVector diag(spec.n_total_sites());
  for (int y = 0; y < spec.l_y; ++y) diag.segment(y * spec.l_x, spec.l_x) = row.diagonal;
  return diag;
}

namespace {

SimilarityTransformResult transform_dense(const ComplexMatrix& h, SimilarityMap map) {
  SimilarityTransformResult out;
  out.h_s = map.diagonal.asDiagonal() * h * map.diagonal.cwiseInverse().asDiagonal();
  out.map = std::move(map);
  return out;
}

}  // namespace

SimilarityTransformResult similarity_transform(const LatticeSpec1D& spec,
                                               const ComplexVector& state) {
  return transform_dense(build_hamiltonian_1d(spec, state), similarity_map(spec));
}

SimilarityTransformResult similarity_transform(const DisorderedLattice& lattice,
                                               const ComplexVector& state) {
  return transform_dense(build_hamiltonian_1d(lattice, state), similarity_map(lattice.spec));
}

double hermiticity_defect(const ComplexMatrix& h) {
  return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

RealVector position_operator(int n_sites) {
  RealVector x(n_sites);
  for (int i = 0; i < n_sites; ++i) x[i] = static_cast<double>(i + 1);
  return x;
}

RealVector chiral_operator(int n_sites) {
  RealVector pi(n_sites);
  for (int i = 0; i < n_sites; ++i) pi[i] = (i % 2 == 0) ? 1.0 : -1.0;
  return pi;
}

RealVector chiral_operator(const LatticeSpec2D& spec) {
  RealVector pi(spec.n_total_sites());
  for (int y = 1; y <= spec.l_y; ++y)
    for (int x = 1; x <= spec.l_x; ++x)
      pi[spec.site_index(x, y)] = ((x + y) % 2 == 0) ? 1.0 : -1.0;
  return pi;
}

double chiral_defect(const ComplexMatrix& h_s, const RealVector& chiral) {
  return (h_s * chiral.asDiagonal() + chiral.asDiagonal() * h_s).cwiseAbs().maxCoeff();
}

ComplexMatrix full_localizer(const ComplexMatrix& h_s, const RealVector& positions, double x,
                             double omega_bar, double eta) {
  const Eigen::Index L = h_s.rows();
  if (h_s.cols() != L || positions.size() != L) fail("localizer input dimensions do not match");
  if (!(eta > 0.0)) fail("eta must be positive");
  if (hermiticity_defect(h_s) > 1e-10 * matrix_scale(h_s))
    fail("full_localizer requires a Hermitian input within tolerance");
  ComplexMatrix loc = ComplexMatrix::Zero(2 * L, 2 * L);
  ComplexMatrix pos = (eta * (positions.array() - x)).matrix().cast<Complex>().asDiagonal();
  const ComplexMatrix shifted = h_s - omega_bar * ComplexMatrix::Identity(L, L);
  loc.topRightCorner(L, L) = pos - Complex(0, 1) * shifted;
  loc.bottomLeftCorner(L, L) = pos + Complex(0, 1) * shifted;
  return loc;
}

ComplexMatrix reduced_localizer(const ComplexMatrix& h_s, const RealVector& positions,
                                const RealVector& chiral, double x, double omega_bar, double eta) {
  const Eigen::Index L = h_s.rows();
  if (h_s.cols() != L || positions.size() != L || chiral.size() != L)
    fail("localizer input dimensions do not match");
  if (!(eta > 0.0)) fail("eta must be positive");
  if (hermiticity_defect(h_s) > 1e-10 * matrix_scale(h_s))
    fail("reduced_localizer requires a Hermitian input within tolerance");
  if (chiral_defect(h_s, chiral) > 1e-10 * matrix_scale(h_s))
    fail("chiral anticommutation violated (onsite terms present?); use full_localizer");
  ComplexMatrix loc = h_s;
  loc.diagonal() += ((eta * (positions.array() - x) * chiral.array()).matrix()).cast<Complex>();
  if (omega_bar != 0.0) loc.diagonal() -= Complex(0, omega_bar) * chiral.cast<Complex>();
  return loc;
}

LocalizerProbe localizer_probe(const ComplexMatrix& h_s, const RealVector& positions,
                               const RealVector& chiral, double x, double eta) {
  const ComplexMatrix loc = reduced_localizer(h_s, positions, chiral, x, 0.0, eta);
  LocalizerProbe probe;
  probe.x = x;
  probe.omega_bar = 0.0;
  probe.eta = eta;

  const Eigen::Index L = loc.rows();
  RealVector sigma;
  if (loc.imag().cwiseAbs().maxCoeff() < 1e-14 * matrix_scale(loc)) {
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(loc.real());
    sigma = es.eigenvalues();
  } else {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(loc);
    sigma = es.eigenvalues();
  }

  const double scale = std::max(sigma.cwiseAbs().maxCoeff(), 1e-300);
  const double zero_tol = 1e-12 * scale;
  int n_pos = 0, n_neg = 0, n_zero = 0;
  probe.spectrum.resize(static_cast<std::size_t>(L));
  double mu = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < L; ++i) {
    const double s = sigma[i];
    probe.spectrum[static_cast<std::size_t>(i)] = s;
    mu = std::min(mu, std::abs(s));
    if (std::abs(s) < zero_tol)
      ++n_zero;
    else if (s > 0.0)
      ++n_pos;
    else
      ++n_neg;
  }
  probe.local_gap = mu;
  probe.invariant = 0.5 * static_cast<double>(n_pos - n_neg);
  probe.n_zero = n_zero;
  return probe;
}

std::vector<LocalizerProbe> local_invariant_scan(const ComplexMatrix& h_s,
                                                 const RealVector& positions,
                                                 const RealVector& chiral,
                                                 const std::vector<double>& x_grid, double eta,
                                                 int threads) {
  if (x_grid.empty()) fail("probe grid must be nonempty");
  // fail fast on bad inputs before fanning out
  (void)reduced_localizer(h_s, positions, chiral, x_grid.front(), 0.0, eta);
  std::vector<LocalizerProbe> probes(x_grid.size());
  parallel_for(x_grid.size(), threads, [&](std::size_t i) {
    probes[i] = localizer_probe(h_s, positions, chiral, x_grid[i], eta);
  });
  return probes;
}

std::vector<LocalizerProbe> local_invariant_scan(const LatticeSpec1D& spec,
                                                 const ComplexVector& state,
                                                 const std::vector<double>& x_grid, double eta,
                                                 int threads) {
  const auto transform = similarity_transform(spec, state);
  return local_invariant_scan(transform.h_s, position_operator(spec.n_sites),
                              chiral_operator(spec.n_sites), x_grid, eta, threads);
}

LocalizerProbe locate_gap_closure(const ComplexMatrix& h_s, const RealVector& positions,
                                  const RealVector& chiral, double x_lo, double x_hi, double eta) {
  LocalizerProbe lo = localizer_probe(h_s, positions, chiral, x_lo, eta);
  LocalizerProbe hi = localizer_probe(h_s, positions, chiral, x_hi, eta);
  if (lo.invariant == hi.invariant)
    fail("locate_gap_closure requires an invariant jump across the bracket");
  // The localizer spectrum moves at rate <= eta in x, so an interval of width
  // w pins the closure to mu <= eta * w / 2.
  for (int it = 0; it < 64 && (x_hi - x_lo) > 1e-9; ++it) {
    const double mid = 0.5 * (x_lo + x_hi);
    LocalizerProbe probe = localizer_probe(h_s, positions, chiral, mid, eta);
    if (probe.invariant == lo.invariant) {
      x_lo = mid;
      lo = probe;
    } else {
      x_hi = mid;
      hi = probe;
    }
  }
  LocalizerProbe best = localizer_probe(h_s, positions, chiral, 0.5 * (x_lo + x_hi), eta);
  return best;
}

double topological_gap_max(const std::vector<LocalizerProbe>& probes) {
  if (probes.empty()) fail("no probes given");
  // Far to the right of the lattice the localizer is dominated by the position
  // term, whose signature counts b-sites minus a-sites: C = -1/2 for odd L.
  const double far_field = -0.5;
  double mu_max = 0.0;
  for (const auto& p : probes)
    if (p.invariant != far_field) mu_max = std::max(mu_max, p.local_gap);
  return mu_max;
}

ProtectionReport protection_margin(const ComplexMatrix& h_s_base,
                                   const ComplexMatrix& h_s_perturbed, double mu_max) {
  if (h_s_base.rows() != h_s_perturbed.rows() || h_s_base.cols() != h_s_perturbed.cols())
    fail("perturbed and base Hamiltonians must have the same dimension");
  const ComplexMatrix diff = h_s_perturbed - h_s_base;
  ProtectionReport report;
  report.mu_max = mu_max;
  if (diff.cwiseAbs().maxCoeff() == 0.0) {
    report.perturbation_norm = 0.0;
  } else {
    Eigen::BDCSVD<ComplexMatrix> svd(diff);
    report.perturbation_norm = svd.singularValues()(0);
  }
  report.margin = mu_max - report.perturbation_norm;
  report.is_protected = report.margin > 0.0;
  return report;
}

}  // namespace nhtl
