#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "markovlab/noise.hpp"

namespace mklab {

// Generalized Pauli operator on n qudits of prime dimension q:
//   unit^phase * prod_i X_i^{x_i} Z_i^{z_i},  unit = e^{i pi / q}, omega = unit^2,
// with X|j> = |j+1 mod q> and Z|j> = omega^j |j>. The phase exponent lives in
// Z_{2q} so that q=2 can carry the i factors needed for Hermitian XZ products.
class PauliOperator {
 public:
  PauliOperator() = default;
  PauliOperator(std::size_t n, std::uint32_t q);

  static PauliOperator single(std::size_t n, std::uint32_t q, Vertex site, char letter, int power = 1);
  // Compact text form: optional leading '-' then whitespace-separated
  // "site:letter" or "site:letter^power" entries, e.g. "0:X 1:X 2:Z^2".
  static PauliOperator parse(const std::string& text, std::size_t n, std::uint32_t q);

  std::size_t n_sites() const { return x_.size(); }
  std::uint32_t q() const { return q_; }
  int x_exp(Vertex v) const { return x_[v]; }
  int z_exp(Vertex v) const { return z_[v]; }
  int phase_exp() const { return phase_; }

  Region support() const;
  bool is_identity() const;          // identity including phase
  bool is_phase_identity() const;    // identity up to phase
  PauliOperator times(const PauliOperator& o) const;
  PauliOperator power(int k) const;
  PauliOperator dagger() const;
  bool commutes_with(const PauliOperator& o) const;  // symplectic form mod q
  bool is_hermitian() const;

  Eigen::MatrixXcd dense() const;

  std::string to_string() const;

 private:
  std::uint32_t q_ = 2;
  std::vector<int> x_, z_;  // exponents mod q
  int phase_ = 0;           // exponent of unit, mod 2q
};

// Commuting Pauli Hamiltonian H = sum_a h_a with one term per hyperedge of
// the interaction graph, plus a selected independent generator set through
// which every term is expanded (term = unit^c * prod_g gen_g^{m_g}).
class StabilizerHamiltonian {
 public:
  StabilizerHamiltonian() = default;

  // Generators = first maximal independent subset of the terms, in order.
  static StabilizerHamiltonian from_terms(std::size_t n, std::uint32_t q,
                                          std::vector<PauliOperator> terms);
  // Explicit generator set (must be independent and generate every term).
  static StabilizerHamiltonian with_generators(std::size_t n, std::uint32_t q,
                                               std::vector<PauliOperator> terms,
                                               std::vector<PauliOperator> generators);
  // All-Z classical Hamiltonian from a GibbsModel over bits is not generally
  // a Pauli sum; this helper embeds +/-1-valued Ising-style couplings.
  static StabilizerHamiltonian ising_chain_z(std::size_t n, bool periodic = false);
  // L x L toric code on a torus: 2L^2 qubits, L^2 star (X) + L^2 plaquette (Z) terms.
  static StabilizerHamiltonian toric_patch(std::size_t ell);
  // Open 1D cluster-state chain: K_i = Z_{i-1} X_i Z_{i+1} with truncated ends.
  static StabilizerHamiltonian cluster_chain(std::size_t n);
  // JSON: {n, q, terms: ["0:X 1:X", "- 0:Z 1:Z", ...]}.
  static StabilizerHamiltonian pauli_from_json(const std::string& text);

  std::size_t n_sites() const { return n_; }
  std::uint32_t q() const { return q_; }
  const Hypergraph& graph() const { return graph_; }
  const std::vector<PauliOperator>& terms() const { return terms_; }
  const std::vector<PauliOperator>& generators() const { return generators_; }
  const std::vector<std::vector<int>>& expansions() const { return expansion_; }
  int expansion_phase(std::size_t term) const { return expansion_phase_[term]; }

  Eigen::MatrixXcd dense_hamiltonian() const;

 private:
  void finish_construction();

  std::size_t n_ = 0;
  std::uint32_t q_ = 2;
  Hypergraph graph_;
  std::vector<PauliOperator> terms_;
  std::vector<PauliOperator> generators_;
  std::vector<std::vector<int>> expansion_;
  std::vector<int> expansion_phase_;
};

bool check_commuting(const StabilizerHamiltonian& h);

// Classical Gibbs model over eigenspace labels s (one q-ary label per
// generator), living on the dual hypergraph built per the support-overlap
// rule. P(s) = Tr[Pi_s rho_beta] / Tr[rho_beta].
struct StabilizerDistribution {
  Hypergraph dual_graph;                       // vertices = generators
  GibbsModel label_model;                      // energies h_a(s_a)
  std::vector<std::vector<Vertex>> dual_edges; // per term: overlapping generators
};

StabilizerDistribution stabilizer_distribution(const StabilizerHamiltonian& h, double beta);

// Dense density matrix over qudits with validation helpers.
struct DensityMatrix {
  Eigen::MatrixXcd mat;
  std::vector<std::uint32_t> dims;
};

void validate_density(const DensityMatrix& rho, double tol = 1e-10);
// Dense-path budget: log2 of the Hilbert dimension, default 10 qubits.
DensityMatrix gibbs_density_matrix(const StabilizerHamiltonian& h, double beta,
                                   int budget_bits = 10);

// Quantum channel given by Kraus operators on a small support.
struct QuantumChannel {
  Region support;
  std::vector<std::uint32_t> dims;
  std::vector<Eigen::MatrixXcd> kraus;
};

QuantumChannel depolarizing_channel(Vertex site, double eps);
QuantumChannel dephasing_channel(Vertex site, double p);
QuantumChannel amplitude_damping_channel(Vertex site, double gamma);
QuantumChannel quantum_from_classical(const LocalChannel& ch);

void check_trace_preserving(const QuantumChannel& ch, double tol = 1e-10);
DensityMatrix apply_quantum_channel(const DensityMatrix& rho, const QuantumChannel& ch);

DensityMatrix partial_trace(const DensityMatrix& rho, const Region& keep);
double von_neumann_entropy(const DensityMatrix& rho);

// I(A:C|B) in nats over a qudit tripartition via von Neumann entropies.
double quantum_cmi(const DensityMatrix& rho, const Tripartition& t, int budget_bits = 10);

// Joint-eigenspace projector of the generators adjacent to a support (all
// generators when `adjacent` lists every index).
Eigen::MatrixXcd restricted_projector(const StabilizerHamiltonian& h,
                                      const std::vector<std::size_t>& generators,
                                      const std::vector<int>& labels);

// True iff E maps every restricted eigenspace projector to a nonnegative
// combination of such projectors (off-basis residual below tol).
bool is_stabilizer_mixing(const QuantumChannel& ch, const StabilizerHamiltonian& h, double tol = 1e-10);

// Induced stochastic matrix on the labels of the generators overlapping the
// channel support: T(s'|s) = Tr[E(Pi_s) Pi_{s'}] / R.
LocalChannel induced_classical_channel(const QuantumChannel& ch, const StabilizerHamiltonian& h);

// Label regions classified by generator support against a qudit tripartition.
struct LabelRegions {
  Region a;         // generators inside A
  Region boundary_a;// generators touching A and B
  Region b;         // generators inside B
  Region c;         // generators inside C
  Region boundary_c;// generators touching B and C
};
LabelRegions classify_labels(const StabilizerHamiltonian& h, const Tripartition& t);

struct CmiEqualityResult {
  double quantum = 0.0;    // I_rho'(A:C|B)
  double classical = 0.0;  // I_P'(A dA : C dC | B) on the label distribution
};

// Lemma-6 style cross-check: dense quantum CMI of the noisy Gibbs state vs
// the classical label CMI computed through the induced channels.
CmiEqualityResult cmi_equality_check(const StabilizerHamiltonian& h, double beta,
                                     const std::vector<QuantumChannel>& process,
                                     const Tripartition& t,
                                     int budget_bits = 10);

// Verification rows for the stabilizer-check CLI subcommand.
struct StabilizerCheckReport {
  bool commuting = false;
  bool projectors_resolve_identity = false;
  bool ranks_equal = false;
  double reconstruction_error = 0.0;   // trace-norm gap of sum_s P(s) Pi_s / R vs rho
  double distribution_error = 0.0;     // max_s |P_model(s) - Tr[Pi_s rho]/Tr rho|
  double channel_error = 0.0;          // max entry gap vs full-label trace formula
  double cmi_gap = 0.0;                // |quantum - classical| for the given process
  bool ok(double tol_strong = 1e-10, double tol_cmi = 1e-8) const {
    return commuting && projectors_resolve_identity && ranks_equal &&
           reconstruction_error <= tol_strong && distribution_error <= tol_strong &&
           channel_error <= tol_strong && cmi_gap <= tol_cmi;
  }
};

StabilizerCheckReport stabilizer_check(const StabilizerHamiltonian& h, double beta,
                                       const std::vector<QuantumChannel>& process,
                                       const Tripartition& t);

}  // namespace mklab
