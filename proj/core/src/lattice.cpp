#include "nhtl/lattice.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "nhtl/rng.hpp"

namespace nhtl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

void LatticeSpec1D::validate() const {
  if (n_sites <= 0 || n_sites % 2 == 0) fail("n_sites must be a positive odd integer");
  if (n_hermitian_cells <= 0) fail("n_hermitian_cells must be positive");
  if (2 * n_hermitian_cells >= n_sites) fail("2 * n_hermitian_cells must be < n_sites");
  if (alpha < 0.0) fail("alpha must be >= 0");
  if (beta < 0.0) fail("beta must be >= 0");
  const int n_t = n_hermitian_cells - 1;
  const int n_lambda = n_cells() - 1 - n_hermitian_cells;
  if (static_cast<int>(t_bar.size()) != n_t)
    fail("t_bar must have one entry per cell 1..N-1 (" + std::to_string(n_t) + " entries)");
  if (static_cast<int>(lambda_bar.size()) != n_lambda)
    fail("lambda_bar must have one entry per cell N+1..(L-1)/2 (" + std::to_string(n_lambda) +
         " entries)");
}

LatticeSpec1D LatticeSpec1D::uniform(int n_hermitian_cells, int n_sites, double tau, double t_bar,
                                     double alpha, double j_hop, double delta, double lambda_bar,
                                     double beta, double t_d) {
  LatticeSpec1D spec;
  spec.n_hermitian_cells = n_hermitian_cells;
  spec.n_sites = n_sites;
  spec.tau = tau;
  spec.alpha = alpha;
  spec.j_hop = j_hop;
  spec.delta = delta;
  spec.beta = beta;
  spec.t_d = t_d;
  spec.t_bar.assign(static_cast<std::size_t>(std::max(0, n_hermitian_cells - 1)), t_bar);
  const int n_lambda = (n_sites + 1) / 2 - 1 - n_hermitian_cells;
  spec.lambda_bar.assign(static_cast<std::size_t>(std::max(0, n_lambda)), lambda_bar);
  spec.validate();
  return spec;
}

namespace {

// t_bar / lambda_bar may be given as a scalar (constant hoppings) or as the
// full per-cell array.
std::vector<double> hopping_sequence(const nlohmann::json& j, const char* key, int expected) {
  const auto& v = j.at(key);
  if (v.is_number()) return std::vector<double>(static_cast<std::size_t>(expected), v.get<double>());
  return v.get<std::vector<double>>();
}

}  // namespace

nlohmann::json LatticeSpec1D::to_json() const {
  return nlohmann::json{{"n_hermitian_cells", n_hermitian_cells},
                        {"n_sites", n_sites},
                        {"tau", tau},
                        {"t_bar", t_bar},
                        {"alpha", alpha},
                        {"j_hop", j_hop},
                        {"delta", delta},
                        {"lambda_bar", lambda_bar},
                        {"beta", beta},
                        {"t_d", t_d}};
}

LatticeSpec1D LatticeSpec1D::from_json(const nlohmann::json& j) {
  LatticeSpec1D spec;
  spec.n_hermitian_cells = j.at("n_hermitian_cells").get<int>();
  spec.n_sites = j.at("n_sites").get<int>();
  spec.tau = j.at("tau").get<double>();
  spec.alpha = j.at("alpha").get<double>();
  spec.j_hop = j.at("j_hop").get<double>();
  spec.delta = j.at("delta").get<double>();
  spec.beta = j.at("beta").get<double>();
  spec.t_d = j.at("t_d").get<double>();
  spec.t_bar = hopping_sequence(j, "t_bar", spec.n_hermitian_cells - 1);
  spec.lambda_bar =
      hopping_sequence(j, "lambda_bar", spec.n_cells() - 1 - spec.n_hermitian_cells);
  spec.validate();
  return spec;
}

double total_intensity(const ComplexVector& state) { return state.squaredNorm(); }

std::string to_string(DisorderKind kind) {
  switch (kind) {
    case DisorderKind::onsite: return "onsite";
    case DisorderKind::hopping: return "hopping";
    case DisorderKind::multiplicative_hopping: return "multiplicative_hopping";
  }
  fail("unknown disorder kind");
}

DisorderKind disorder_kind_from_string(const std::string& s) {
  if (s == "onsite") return DisorderKind::onsite;
  if (s == "hopping") return DisorderKind::hopping;
  if (s == "multiplicative_hopping") return DisorderKind::multiplicative_hopping;
  fail("unknown disorder kind: " + s);
}

DisorderedLattice apply_disorder(const LatticeSpec1D& spec, const DisorderConfig& cfg) {
  spec.validate();
  if (cfg.strength < 0.0) fail("disorder strength must be >= 0");
  DisorderedLattice out;
  out.spec = spec;
  if (cfg.strength == 0.0) return out;

  const double half = cfg.strength / 2.0;
  const int L = spec.n_sites;
  const int cells = spec.n_cells();
  // Counter layout keeps draws independent of assembly order:
  //   [0, L)            onsite sites
  //   [L, L+2*cells)    per-cell bond draws (intracell even, intercell odd)
  switch (cfg.kind) {
    case DisorderKind::onsite: {
      out.terms.onsite = RealVector(L);
      for (int i = 0; i < L; ++i)
        out.terms.onsite[i] = counter_uniform(cfg.seed, static_cast<std::uint64_t>(i), -half, half);
      break;
    }
    case DisorderKind::hopping: {
      out.terms.intracell.resize(static_cast<std::size_t>(cells - 1));
      out.terms.intercell.resize(static_cast<std::size_t>(cells - 1));
      for (int j = 1; j <= cells - 1; ++j) {
        const std::uint64_t base = static_cast<std::uint64_t>(L + 2 * j);
        out.terms.intracell[static_cast<std::size_t>(j - 1)] =
            counter_uniform(cfg.seed, base, -half, half);
        out.terms.intercell[static_cast<std::size_t>(j - 1)] =
            counter_uniform(cfg.seed, base + 1, -half, half);
      }
      break;
    }
    case DisorderKind::multiplicative_hopping: {
      for (std::size_t k = 0; k < out.spec.t_bar.size(); ++k) {
        const int j = static_cast<int>(k) + 1;
        out.spec.t_bar[k] *=
            1.0 + counter_uniform(cfg.seed, static_cast<std::uint64_t>(2 * j), -half, half);
      }
      for (std::size_t k = 0; k < out.spec.lambda_bar.size(); ++k) {
        const int j = spec.n_hermitian_cells + 1 + static_cast<int>(k);
        out.spec.lambda_bar[k] *=
            1.0 + counter_uniform(cfg.seed, static_cast<std::uint64_t>(2 * j + 1), -half, half);
      }
      break;
    }
  }
  return out;
}

BondHamiltonian::BondHamiltonian(int n_sites, std::vector<Bond> bonds, RealVector onsite)
    : n_sites_(n_sites), bonds_(std::move(bonds)), onsite_(std::move(onsite)) {
  tridiagonal_ = true;
  for (const Bond& b : bonds_) {
    if (b.u < 0 || b.u >= n_sites_ || b.v < 0 || b.v >= n_sites_ || b.u == b.v)
      fail("bond endpoints out of range");
    if (std::abs(b.u - b.v) != 1) tridiagonal_ = false;
    if (b.kerr != 0.0) has_kerr_ = true;
  }
  if (onsite_.size() != 0 && onsite_.size() != n_sites_) fail("onsite vector length mismatch");
}

ComplexVector BondHamiltonian::apply(const ComplexVector& state, const ComplexVector& x) const {
  if (state.size() != n_sites_ || x.size() != n_sites_)
    fail("state length does not match lattice size");
  ComplexVector y = ComplexVector::Zero(n_sites_);
  for (const Bond& b : bonds_) {
    const double w = b.kerr == 0.0 ? 0.0 : b.kerr * (std::norm(state[b.u]) + std::norm(state[b.v]));
    y[b.u] += (b.fwd + w) * x[b.v];
    y[b.v] += (b.bwd + w) * x[b.u];
  }
  if (onsite_.size() != 0) y.array() += onsite_.array() * x.array();
  return y;
}

ComplexMatrix BondHamiltonian::dense(const ComplexVector& state) const {
  if (state.size() != n_sites_) fail("state length does not match lattice size");
  ComplexMatrix h = ComplexMatrix::Zero(n_sites_, n_sites_);
  for (const Bond& b : bonds_) {
    const double w = b.kerr == 0.0 ? 0.0 : b.kerr * (std::norm(state[b.u]) + std::norm(state[b.v]));
    h(b.u, b.v) += b.fwd + w;
    h(b.v, b.u) += b.bwd + w;
  }
  if (onsite_.size() != 0)
    for (int i = 0; i < n_sites_; ++i) h(i, i) += onsite_[i];
  return h;
}

double BondHamiltonian::inf_norm(const ComplexVector& state) const {
  RealVector row_sum = RealVector::Zero(n_sites_);
  for (const Bond& b : bonds_) {
    const double w = b.kerr == 0.0 ? 0.0 : b.kerr * (std::norm(state[b.u]) + std::norm(state[b.v]));
    row_sum[b.u] += std::abs(b.fwd + w);
    row_sum[b.v] += std::abs(b.bwd + w);
  }
  if (onsite_.size() != 0) row_sum += onsite_.cwiseAbs();
  return row_sum.size() > 0 ? row_sum.maxCoeff() : 0.0;
}

namespace {

// Bonds of one interface chain, offset into a larger lattice. `kerr_scale`
// lets the 2D builder reuse the row structure unchanged.
void append_chain_bonds(const LatticeSpec1D& spec, int offset, std::vector<Bond>* bonds,
                        const DisorderTerms* terms = nullptr) {
  const int N = spec.n_hermitian_cells;
  const int cells = spec.n_cells();
  for (int j = 1; j <= cells; ++j) {
    const int a = offset + spec.site_of_a(j);
    const int b = offset + spec.site_of_b(j);
    if (j < cells) {
      // intracell bond a_j -- b_j (absent for the trailing half cell)
      double w_intra = 0.0;
      if (terms && !terms->intracell.empty()) w_intra = terms->intracell[static_cast<std::size_t>(j - 1)];
      if (j <= N) {
        bonds->push_back({a, b, spec.tau + w_intra, spec.tau + w_intra, 0.0});
      } else {
        // asymmetric pair J-delta / J+delta; additive disorder enters the
        // symmetric part only, leaving delta untouched
        bonds->push_back(
            {a, b, spec.j_hop - spec.delta + w_intra, spec.j_hop + spec.delta + w_intra, 0.0});
      }
    }
    if (j < cells) {
      // intercell bond b_j -- a_{j+1}
      const int a_next = offset + spec.site_of_a(j + 1);
      double w_inter = 0.0;
      if (terms && !terms->intercell.empty()) w_inter = terms->intercell[static_cast<std::size_t>(j - 1)];
      if (j < N) {
        bonds->push_back({a_next, b, spec.t_bar_at(j) + w_inter, spec.t_bar_at(j) + w_inter,
                          spec.alpha});
      } else if (j == N) {
        bonds->push_back({a_next, b, spec.t_d + w_inter, spec.t_d + w_inter, 0.0});
      } else {
        bonds->push_back({a_next, b, spec.lambda_bar_at(j) + w_inter,
                          spec.lambda_bar_at(j) + w_inter, spec.beta});
      }
    }
  }
}

}  // namespace

BondHamiltonian lattice_bonds(const LatticeSpec1D& spec) {
  spec.validate();
  std::vector<Bond> bonds;
  bonds.reserve(static_cast<std::size_t>(spec.n_sites));
  append_chain_bonds(spec, 0, &bonds);
  return BondHamiltonian(spec.n_sites, std::move(bonds));
}

BondHamiltonian lattice_bonds(const DisorderedLattice& lattice) {
  lattice.spec.validate();
  std::vector<Bond> bonds;
  bonds.reserve(static_cast<std::size_t>(lattice.spec.n_sites));
  append_chain_bonds(lattice.spec, 0, &bonds, &lattice.terms);
  return BondHamiltonian(lattice.spec.n_sites, std::move(bonds), lattice.terms.onsite);
}

ComplexMatrix build_hamiltonian_1d(const LatticeSpec1D& spec, const ComplexVector& state) {
  if (state.size() != spec.n_sites) fail("state length does not match n_sites");
  return lattice_bonds(spec).dense(state);
}

ComplexMatrix build_hamiltonian_1d(const DisorderedLattice& lattice, const ComplexVector& state) {
  if (state.size() != lattice.spec.n_sites) fail("state length does not match n_sites");
  return lattice_bonds(lattice).dense(state);
}

std::vector<int> LatticeSpec2D::default_sign_pattern(int l_x) {
  std::vector<int> signs(static_cast<std::size_t>(l_x));
  for (int x = 1; x <= l_x; ++x) signs[static_cast<std::size_t>(x - 1)] = (x % 2 == 1) ? 1 : -1;
  return signs;
}

void LatticeSpec2D::validate() const {
  chain_spec.validate();
  if (l_x != chain_spec.n_sites) fail("l_x must equal chain_spec.n_sites");
  if (l_y <= 0) fail("l_y must be positive");
  if (gamma1 < 0.0) fail("gamma1 must be >= 0");
  if (static_cast<int>(sign_pattern.size()) != l_x)
    fail("sign_pattern must have one entry per site column");
  for (int s : sign_pattern)
    if (s != 1 && s != -1) fail("sign_pattern entries must be +1 or -1");
  // pi flux: adjacent columns must carry opposite vertical-bond signs so every
  // plaquette encloses exactly one negative bond
  for (int x = 0; x + 1 < l_x; ++x)
    if (sign_pattern[static_cast<std::size_t>(x)] * sign_pattern[static_cast<std::size_t>(x + 1)] != -1)
      fail("sign_pattern violates the one-negative-bond-per-plaquette condition between columns " +
           std::to_string(x + 1) + " and " + std::to_string(x + 2));
}

nlohmann::json LatticeSpec2D::to_json() const {
  return nlohmann::json{{"chain_spec", chain_spec.to_json()},
                        {"l_x", l_x},
                        {"l_y", l_y},
                        {"u0", u0},
                        {"v0", v0},
                        {"gamma1", gamma1},
                        {"sign_pattern", sign_pattern}};
}

LatticeSpec2D LatticeSpec2D::from_json(const nlohmann::json& j) {
  LatticeSpec2D spec;
  spec.chain_spec = LatticeSpec1D::from_json(j.at("chain_spec"));
  spec.l_x = j.at("l_x").get<int>();
  spec.l_y = j.at("l_y").get<int>();
  spec.u0 = j.at("u0").get<double>();
  spec.v0 = j.at("v0").get<double>();
  spec.gamma1 = j.at("gamma1").get<double>();
  if (j.contains("sign_pattern"))
    spec.sign_pattern = j.at("sign_pattern").get<std::vector<int>>();
  else
    spec.sign_pattern = default_sign_pattern(spec.l_x);
  spec.validate();
  return spec;
}

BondHamiltonian lattice_bonds(const LatticeSpec2D& spec) {
  spec.validate();
  std::vector<Bond> bonds;
  bonds.reserve(static_cast<std::size_t>(spec.n_total_sites() * 2));
  for (int y = 1; y <= spec.l_y; ++y)
    append_chain_bonds(spec.chain_spec, spec.site_index(1, y), &bonds);
  for (int y = 1; y < spec.l_y; ++y) {
    const bool intracell_row = (y % 2 == 1);  // rows pair up SSH-like along y
    for (int x = 1; x <= spec.l_x; ++x) {
      const double sign = static_cast<double>(spec.sign_pattern[static_cast<std::size_t>(x - 1)]);
      const int lo = spec.site_index(x, y);
      const int hi = spec.site_index(x, y + 1);
      if (intracell_row)
        bonds.push_back({lo, hi, sign * spec.u0, sign * spec.u0, sign * spec.gamma1});
      else
        bonds.push_back({lo, hi, sign * spec.v0, sign * spec.v0, 0.0});
    }
  }
  return BondHamiltonian(spec.n_total_sites(), std::move(bonds));
}

ComplexMatrix build_hamiltonian_2d(const LatticeSpec2D& spec, const ComplexVector& state) {
  if (state.size() != spec.n_total_sites()) fail("state length does not match l_x * l_y");
  return lattice_bonds(spec).dense(state);
}

}  // namespace nhtl
