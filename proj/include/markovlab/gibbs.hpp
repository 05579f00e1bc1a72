#pragma once

#include <span>
#include <string>
#include <vector>

#include "markovlab/graph.hpp"

namespace mklab {

// Explicit probability table over the configurations of an ordered set of
// variables (mixed-radix, first variable slowest). Entries are >= 0 and sum
// to 1 within kProbTolerance.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  DiscreteDistribution(Region variables, std::vector<std::uint32_t> dims, std::vector<double> probs,
                       bool normalize = false);

  const Region& variables() const { return vars_; }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  const MixedRadix& radix() const { return radix_; }
  const std::vector<double>& probs() const { return p_; }
  std::size_t size() const { return p_.size(); }
  double prob(std::size_t idx) const { return p_[idx]; }

  std::size_t var_position(Vertex v) const;  // position of v in the variable order

 private:
  Region vars_;
  std::vector<std::uint32_t> dims_;
  MixedRadix radix_;
  std::vector<double> p_;
};

// A per-hyperedge energy table; `table` is indexed mixed-radix over the
// support in sorted vertex order.
struct EnergyTerm {
  std::vector<Vertex> support;
  std::vector<double> table;
};

// Classical Gibbs model: P(x) = exp(-beta * sum_a h_a(x_a)) / Z.
//
// Tables are dense and finite for user-constructed models; +inf entries are
// permitted only in models produced by the pinning constructions, where they
// mark excluded configurations (exp(-inf) == 0 exactly).
class GibbsModel {
 public:
  GibbsModel() = default;
  GibbsModel(Hypergraph graph, double beta, std::vector<EnergyTerm> terms, bool allow_infinite = false);

  const Hypergraph& graph() const { return graph_; }
  double beta() const { return beta_; }
  const std::vector<EnergyTerm>& terms() const { return terms_; }

 private:
  Hypergraph graph_;
  double beta_ = 1.0;
  std::vector<EnergyTerm> terms_;
};

// sum_a h_a(x_a); x assigns a value in 0..dim(v)-1 to every vertex.
double energy(const GibbsModel& m, std::span<const int> x);

DiscreteDistribution exact_distribution(const GibbsModel& m, int budget_bits = kDefaultBudgetBits);

DiscreteDistribution marginal(const DiscreteDistribution& p, const Region& r);

// Distribution over the remaining variables given cond = values (one value
// per cond vertex, sorted order). Throws on a zero-probability event.
DiscreteDistribution conditional(const DiscreteDistribution& p, const Region& cond,
                                 const std::vector<int>& values);

double shannon_entropy(const DiscreteDistribution& p);

// I(a:c) in nats, from entropies of marginals. Regions must be disjoint.
double mutual_information(const DiscreteDistribution& p, const Region& a, const Region& c);

// I(A:C|B) in nats via S_AB + S_BC - S_B - S_ABC.
double cmi(const DiscreteDistribution& p, const Tripartition& t);

// Same quantity via sum_b P(b) * I(A:C | B=b); zero-probability b are skipped.
double cmi_by_decomposition(const DiscreteDistribution& p, const Tripartition& t);

// TV distance, 1/2 * sum |p - q|; distributions must share variables.
double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q);

// Built-in models. Ising couplings use the +/-1 spin encoding s = 1 - 2x,
// with h_edge = -s_i s_j.
GibbsModel ising_chain(std::size_t n, double beta, bool periodic = false);
GibbsModel ising_grid(std::size_t rows, std::size_t cols, double beta, bool periodic = false);

// Loads {n, q, hyperedges, terms, beta?} from a JSON model file.
GibbsModel classical_from_json(const std::string& text, double beta_override = -1.0);

}  // namespace mklab
