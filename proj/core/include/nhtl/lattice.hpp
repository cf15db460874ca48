#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace nhtl {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

/// Static parameters of the 1D hybrid interface chain: a reciprocal SSH chain
/// (cells 1..N) coupled through t_d to a nonreciprocal SSH chain (cells > N).
/// Sites are indexed a_1, b_1, a_2, b_2, ... and the total site count is odd,
/// so the chain ends on an a-site.
///
/// Intercell hoppings carry a Kerr term: the bond b_j -- a_{j+1} has strength
///   t_j      = t_bar[j]      + alpha * (|a_{j+1}|^2 + |b_j|^2)   (j < N)
///   lambda_j = lambda_bar[j] + beta  * (|a_{j+1}|^2 + |b_j|^2)   (j > N)
/// while intracell hoppings are tau (reciprocal side) and J -+ delta
/// (nonreciprocal side; rightward J-delta, leftward J+delta).
struct LatticeSpec1D {
  int n_hermitian_cells = 0;       // N
  int n_sites = 0;                 // L, odd
  double tau = 0.0;                // intracell hopping, reciprocal side
  std::vector<double> t_bar;       // background intercell hoppings, cells 1..N-1
  double alpha = 0.0;              // Kerr coefficient, reciprocal side
  double j_hop = 0.0;              // J, mean intracell hopping, nonreciprocal side
  double delta = 0.0;              // nonreciprocity
  std::vector<double> lambda_bar;  // background intercell hoppings, cells N+1..(L-1)/2
  double beta = 0.0;               // Kerr coefficient, nonreciprocal side
  double t_d = 0.0;                // inter-chain coupling

  int n_cells() const { return (n_sites + 1) / 2; }
  // 0-based flat site indices; cells are 1-based.
  int site_of_a(int cell) const { return 2 * cell - 2; }
  int site_of_b(int cell) const { return 2 * cell - 1; }
  static bool is_a_site(int site) { return site % 2 == 0; }

  // t_bar entry for cell j (1 <= j <= N-1), lambda_bar for cell j (N+1 <= j <= n_cells()-1).
  double t_bar_at(int cell) const { return t_bar.at(static_cast<std::size_t>(cell - 1)); }
  double lambda_bar_at(int cell) const {
    return lambda_bar.at(static_cast<std::size_t>(cell - n_hermitian_cells - 1));
  }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  nlohmann::json to_json() const;
  static LatticeSpec1D from_json(const nlohmann::json& j);

  /// Spec with constant background hoppings on both sides.
  static LatticeSpec1D uniform(int n_hermitian_cells, int n_sites, double tau, double t_bar,
                               double alpha, double j_hop, double delta, double lambda_bar,
                               double beta, double t_d);
};

double total_intensity(const ComplexVector& state);

enum class DisorderKind { onsite, hopping, multiplicative_hopping };

struct DisorderConfig {
  DisorderKind kind = DisorderKind::onsite;
  double strength = 0.0;  // V for onsite, W for hopping kinds
  std::uint64_t seed = 0;
};

std::string to_string(DisorderKind kind);
DisorderKind disorder_kind_from_string(const std::string& s);

/// Additive disorder terms entering the Hamiltonian on top of a spec.
struct DisorderTerms {
  RealVector onsite;               // per site, length L (empty when absent)
  std::vector<double> intracell;   // symmetric addition to bond a_j -- b_j, cells 1..n_cells-1
  std::vector<double> intercell;   // symmetric addition to bond b_j -- a_{j+1}, cells 1..n_cells-1
  bool empty() const { return onsite.size() == 0 && intracell.empty() && intercell.empty(); }
};

/// A disorder realization: either additive terms over the base spec (onsite /
/// hopping kinds) or a rescaled spec (multiplicative kind). Same config ->
/// identical realization, bit for bit.
struct DisorderedLattice {
  LatticeSpec1D spec;
  DisorderTerms terms;
};

DisorderedLattice apply_disorder(const LatticeSpec1D& spec, const DisorderConfig& cfg);

/// One hopping bond between flat sites u and v. The matrix entries are
///   H[u, v] = fwd + kerr * (|psi_u|^2 + |psi_v|^2)
///   H[v, u] = bwd + kerr * (|psi_u|^2 + |psi_v|^2)
struct Bond {
  int u = 0;
  int v = 0;
  double fwd = 0.0;
  double bwd = 0.0;
  double kerr = 0.0;
};

/// State-dependent Hamiltonian in bond form. Cheap to apply (O(bonds)) without
/// materializing the dense matrix; `dense` builds it when needed.
class BondHamiltonian {
 public:
  BondHamiltonian() = default;
  BondHamiltonian(int n_sites, std::vector<Bond> bonds, RealVector onsite = {});

  int n_sites() const { return n_sites_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const RealVector& onsite() const { return onsite_; }
  bool tridiagonal() const { return tridiagonal_; }
  bool has_kerr() const { return has_kerr_; }

  /// y = H(state) * x. `state` supplies the Kerr weights; usually x == state.
  ComplexVector apply(const ComplexVector& state, const ComplexVector& x) const;
  ComplexMatrix dense(const ComplexVector& state) const;
  /// Max absolute row sum at the given state.
  double inf_norm(const ComplexVector& state) const;

 private:
  int n_sites_ = 0;
  std::vector<Bond> bonds_;
  RealVector onsite_;
  bool tridiagonal_ = false;
  bool has_kerr_ = false;
};

BondHamiltonian lattice_bonds(const LatticeSpec1D& spec);
BondHamiltonian lattice_bonds(const DisorderedLattice& lattice);

/// Dense H(state) for the 1D chain. Throws on a spec/state size mismatch.
ComplexMatrix build_hamiltonian_1d(const LatticeSpec1D& spec, const ComplexVector& state);
ComplexMatrix build_hamiltonian_1d(const DisorderedLattice& lattice, const ComplexVector& state);

/// 2D extension: interface chains stacked along y with staggered vertical
/// hoppings. Vertical bonds between rows y and y+1 carry
///   u = u0 + gamma1 * (|psi_{x,y}|^2 + |psi_{x,y+1}|^2)   (odd row pairs)
///   v0                                                    (even row pairs)
/// and the sign pattern puts one negative vertical bond on every second site
/// column so each square plaquette encloses a pi flux.
struct LatticeSpec2D {
  LatticeSpec1D chain_spec;       // per-row template; chain_spec.n_sites == l_x
  int l_x = 0;
  int l_y = 0;
  double u0 = 0.0;                // vertical intracell hopping base
  double v0 = 0.0;                // vertical intercell hopping
  double gamma1 = 0.0;            // vertical Kerr coefficient
  std::vector<int> sign_pattern;  // +-1 per site column, applied to all vertical bonds in it

  int n_total_sites() const { return l_x * l_y; }
  // 0-based flat index of site (x, y), both 1-based.
  int site_index(int x, int y) const { return (y - 1) * l_x + (x - 1); }

  void validate() const;

  nlohmann::json to_json() const;
  static LatticeSpec2D from_json(const nlohmann::json& j);

  /// Alternating +,-,+,... down the site columns (column 1 positive).
  static std::vector<int> default_sign_pattern(int l_x);
};

BondHamiltonian lattice_bonds(const LatticeSpec2D& spec);
ComplexMatrix build_hamiltonian_2d(const LatticeSpec2D& spec, const ComplexVector& state);

}  // namespace nhtl
