#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "markovlab/gibbs.hpp"

namespace mklab {

// Column-stochastic transition table t[x_out][x_in] over the support's joint
// state space, stored row-major as t[x_out * S + x_in]. Every channel carries
// its decomposition T = (1-eps) I + eps N with N column-stochastic.
class LocalChannel {
 public:
  LocalChannel() = default;
  LocalChannel(Region support, std::vector<std::uint32_t> dims, std::vector<double> matrix);

  const Region& support() const { return support_; }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  std::size_t states() const { return states_; }
  const std::vector<double>& matrix() const { return matrix_; }
  double entry(std::size_t out, std::size_t in) const { return matrix_[out * states_ + in]; }
  double epsilon() const { return epsilon_; }
  const std::vector<double>& residual() const { return residual_; }

 private:
  Region support_;
  std::vector<std::uint32_t> dims_;
  std::size_t states_ = 0;
  std::vector<double> matrix_;
  double epsilon_ = 0.0;
  std::vector<double> residual_;
};

// eps = 1 - min_x t(x|x), the minimal eps admitting a stochastic residual;
// for eps = 0 the residual is the identity by convention.
std::pair<double, std::vector<double>> epsilon_decomposition(const std::vector<double>& matrix);

// Common single-site channels (q=2 unless noted).
LocalChannel bit_flip_channel(Vertex site, double eps);
LocalChannel uniform_replacement_channel(Vertex site, std::uint32_t q, double eps);
LocalChannel identity_channel(Vertex site, std::uint32_t q);

struct Layer {
  std::vector<LocalChannel> channels;
};

// Finite-depth local stochastic process: ordered layers whose channel
// supports are pairwise disconnected within a layer (no shared vertex, no
// shared hyperedge), so each layer applies in parallel.
class LayeredProcess {
 public:
  LayeredProcess() = default;
  LayeredProcess(const Hypergraph& g, std::vector<Layer> layers);

  std::size_t depth() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  double max_epsilon() const;

 private:
  std::vector<Layer> layers_;
};

// Independent per-site noise, T = prod_i T_i; depth-1 semantics.
struct SiteProduct {
  std::vector<LocalChannel> channels;  // single-site, distinct sites
};

using NoiseProcess = std::variant<SiteProduct, LayeredProcess>;

// Exact matrix action of one channel on a distribution.
DiscreteDistribution apply_channel(const DiscreteDistribution& p, const LocalChannel& ch);
DiscreteDistribution apply_process(const DiscreteDistribution& p, const LayeredProcess& proc);
DiscreteDistribution apply_process(const DiscreteDistribution& p, const SiteProduct& proc);
DiscreteDistribution apply_process(const DiscreteDistribution& p, const NoiseProcess& proc);
double noise_max_epsilon(const NoiseProcess& proc);
std::size_t noise_depth(const NoiseProcess& proc);

// A pinning table on `support`, shifted so the favored configuration costs
// zero; `shift` records the subtracted favored cost. Entries may be +inf.
struct PinningTerm {
  std::vector<Vertex> support;
  std::vector<int> favored;      // favored value per support site
  std::vector<double> table;     // mixed-radix over support, table[favored] == 0
  double shift = 0.0;
  bool fully_pinned = false;     // support inside the pinned region
};

// Gibbs model plus pinning fields on region B (Appendix-style normal form:
// base tables shifted to h >= 0, pinning shifted to p(favored) = 0).
class PinnedModel {
 public:
  PinnedModel() = default;
  PinnedModel(GibbsModel base, Region pinned, std::vector<PinningTerm> pins,
              std::vector<double> base_shifts);

  const GibbsModel& base() const { return base_; }
  const Region& pinned_region() const { return pinned_; }
  const std::vector<PinningTerm>& pins() const { return pins_; }
  double h_max() const { return h_max_; }
  // Minimal excited pinning energy over fully pinned terms (+inf if all
  // excitations are excluded).
  double p_min() const { return p_min_; }
  int favored_value(Vertex v) const;

  double total_energy(std::span<const int> x) const;  // base*beta + pinning
  DiscreteDistribution exact_distribution(int budget_bits = kDefaultBudgetBits) const;

 private:
  GibbsModel base_;
  Region pinned_;
  std::vector<PinningTerm> pins_;
  std::vector<double> base_shifts_;
  std::vector<int> favored_;  // per vertex; 0 for unpinned sites
  double h_max_ = 0.0;
  double p_min_ = 0.0;
};

// Pinning Lemma: conditions the clean model on noisy observations b_prime of
// the sites in `b`, each read through its single-site channel. The returned
// model's exact distribution equals the Bayes posterior P(x | B' = b').
PinnedModel pin_single_site(const GibbsModel& m, const Region& b,
                            const std::vector<LocalChannel>& channels,
                            const std::vector<int>& b_prime);

// Spacetime Gibbs model produced by conditioning a depth-d layered process on
// the final-time B values. Variables are (site, time) pairs with B sites at
// time d removed; identity propagation fills layers that skip a site.
struct SpacetimeModel {
  GibbsModel model;                       // over spacetime variables
  Hypergraph base_graph;                  // original interaction graph
  std::size_t depth = 0;
  Region b;                               // pinned spatial region
  std::vector<int> b_final;               // conditioned values on b at time d
  std::vector<std::vector<int>> var_of;   // var_of[site][time] -> spacetime index, -1 if conditioned
  std::vector<std::pair<Vertex, int>> site_time;  // inverse map
  // Per term: the (site, layer) transitions it penalizes (empty for the
  // time-0 interaction terms).
  std::vector<std::vector<std::pair<Vertex, int>>> term_transitions;
  double max_epsilon = 0.0;
};

SpacetimeModel spacetime_model(const GibbsModel& m, const LayeredProcess& proc, const Region& b,
                               const std::vector<int>& b_final, int budget_bits = kDefaultBudgetBits);

// Gap bounds per fully-in-B pinning support, classified over the slice
// transitions that the support's own channels and delta couplings cover: a
// configuration counts as excited when one of those transitions is
// non-identity.
struct BlockedGapRow {
  std::vector<Vertex> support;
  double favored_cost = 0.0;   // max unshifted pinning over covered-aligned configurations
  double excited_min = 0.0;    // min unshifted pinning over covered-excited configurations
  double favored_bound = 0.0;  // -d log(1 - eps_max)
  double excited_bound = 0.0;  // -log eps_max
  bool ok = false;
};

struct BlockedModel {
  PinnedModel pinned;
  std::vector<BlockedGapRow> gap_rows;       // one per fully-in-B pinning support
  std::vector<std::size_t> superspin_of;     // site -> blocked variable (identity here)
  std::vector<std::vector<int>> slice_vars;  // site -> spacetime vars collected into its super-spin
  std::vector<std::vector<int>> value_map;   // per B-site permutation: blocked value -> spacetime value
};

// Collapses the time direction of a spacetime model into one super-spin per
// site (q^(d+1) states on A/C sites, q^d on B sites). B super-spin values are
// relabeled so the favored all-aligned configuration maps to 0.
BlockedModel block_spins(const SpacetimeModel& st);

}  // namespace mklab
