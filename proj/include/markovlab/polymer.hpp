#pragma once

#include <optional>
#include <vector>

#include "markovlab/noise.hpp"

namespace mklab {

// Connected subset of the pinned region B (connectivity = hyperedge adjacency).
struct Polymer {
  Region sites;
  std::size_t weight() const { return sites.size(); }
};

// Multiset of distinct polymers with multiplicities.
struct Cluster {
  std::vector<std::pair<Polymer, int>> entries;
  std::size_t weight() const {
    std::size_t w = 0;
    for (const auto& [g, mu] : entries) w += g.weight() * static_cast<std::size_t>(mu);
    return w;
  }
};

// Excitation partition-function ratio Z_gamma with the polymer's sites summed
// over non-favored values, everything else held at the favored/pinned
// reference; computed over only the hyperedges touching the polymer.
// `x_full` supplies values for unpinned sites (pinned entries are ignored).
double polymer_weight(const PinnedModel& m, const Polymer& g, const std::vector<int>& x_full);

// Same ratio for an arbitrary subset D of B, without using factorization.
double subset_excitation_ratio(const PinnedModel& m, const Region& d, const std::vector<int>& x_full);

struct ZdReport {
  bool ok = false;
  double worst_ratio = 0.0;  // max over D and x_AC of |Z_D| * e^{delta |D|}
  double delta = 0.0;
  std::size_t subsets_checked = 0;
};

// Lemma-style exhaustive check: |Z_D| <= e^{-delta |D|} for every D within B,
// with delta = p_min/deg - deg*h_max - log(q_eff - 1), worst-cased over the
// boundary-relevant assignments of the unpinned sites.
ZdReport zd_exponential_bound_check(const PinnedModel& m, int budget_bits = kDefaultBudgetBits);

// Checks Z_{D1 u D2} = Z_{D1} Z_{D2} for disconnected D1, D2 over all
// boundary-relevant assignments; throws if the parts are not disconnected.
bool z_factorization_check(const PinnedModel& m, const Polymer& d1, const Polymer& d2,
                           double tol = 1e-12);

// Ursell function of the cluster graph: vertices are polymer copies, edges
// join incompatible pairs, and phi = sum over connected spanning subgraphs of
// (-1)^{#edges}. Throws if the cluster graph is disconnected.
double ursell(const Hypergraph& g, const Cluster& w);

// All connected subsets of B with at most k_max sites, each exactly once.
std::vector<Polymer> enumerate_polymers(const Hypergraph& g, const Region& b, std::size_t k_max);

struct KpCertificate {
  double a = 0.0;
  double b = 0.0;
  bool satisfied = false;
  double worst_margin = 0.0;  // max over polymers of LHS - a|gamma|; <= 0 iff satisfied
  std::size_t k_max = 0;
};

// Kotecky-Preiss condition sum_{g' incompatible with g} |Z_{g'}| e^{(a+b)|g'|}
// <= a|g| for every polymer up to k_max, with worst-case weights over the
// boundary-relevant unpinned assignments.
KpCertificate kp_certificate(const PinnedModel& m, double a, double b, std::size_t k_max);

// d_deg * (1 + log(1 + d_deg) + d_deg * h_max + log(q_eff - 1)).
double critical_pinning(std::size_t d_deg, double h_max, std::size_t q_eff);

// Root of d*log(1-eps) - log(eps) = deg*(1 + log(1+deg) + deg*beta + d*log q),
// found by bisection to 1e-12.
double critical_epsilon(std::size_t degree_param, double beta, std::uint32_t q, std::size_t depth);

// Exact free-energy split of log Ptilde(x_AC) into A-only / C-only / cross
// parts, by enumerating subsets D of B and filtering components by
// compatibility (log of restricted polymer-gas partition functions).
struct FreeEnergySplit {
  double log_z0 = 0.0;       // log weight of the all-favored reference
  double log_ptilde = 0.0;   // log Z0 + log Xi(all)
  double f_empty = 0.0;
  double f_a = 0.0;
  double f_c = 0.0;
  double f_ac = 0.0;
};
FreeEnergySplit exact_free_energy_split(const PinnedModel& m, const Tripartition& t,
                                        const std::vector<int>& x_full);

// log Ptilde by direct configuration enumeration over the pinned sites.
double exact_log_ptilde(const PinnedModel& m, const std::vector<int>& x_full,
                        int budget_bits = kDefaultBudgetBits);

struct ExpansionReport {
  std::size_t w_max = 0;
  double log_z0 = 0.0;
  // Cumulative sums by cluster weight 1..w_max (index 0 = weight 1).
  std::vector<double> log_ptilde_partial;
  std::vector<double> f_empty_partial;
  std::vector<double> f_a_partial;
  std::vector<double> f_c_partial;
  std::vector<double> f_ac_partial;
  double exact_log_ptilde = 0.0;
  std::vector<double> residual;     // |log_ptilde_partial[w] - exact|
  std::size_t clusters_evaluated = 0;
  std::size_t min_fac_weight = 0;   // smallest weight with a nonzero F_AC cluster; 0 if none
  std::size_t separation_width = 0; // graph_distance(A,C) - 1, the provable F_AC weight floor
  std::optional<KpCertificate> kp;  // filled when (a, b) are supplied
};

// Truncated cluster expansion of log Ptilde(x_AC) with per-weight partial
// sums and the four-way F classification. Supplying kp_a > 0 attaches the
// Kotecky-Preiss certificate at (kp_a, kp_b).
ExpansionReport truncated_log_expansion(const PinnedModel& m, const Tripartition& t,
                                        const std::vector<int>& x_full, std::size_t w_max,
                                        double kp_a = 0.0, double kp_b = 0.0);

struct FacReport {
  double p_min = 0.0;
  double p_min_c = 0.0;
  double decay_b = 0.0;            // p_min - p_min_c
  std::size_t d_ac = 0;            // graph distance between A and C
  std::size_t width = 0;           // d_ac - 1
  double max_abs_fac_truncated = 0.0;
  double tail_bound = 0.0;         // KP geometric tail beyond w_max (0 if certificate fails)
  double max_abs_fac_exact = 0.0;  // via exact_free_energy_split
  double bound_graph = 0.0;        // min(|dA|,|dC|) e^{-b d_ac}
  double bound_width = 0.0;        // min(|dA|,|dC|) e^{-b width}
  std::size_t min_fac_weight = 0;
  bool floor_ok = false;           // no F_AC cluster below the separation width
  bool bound_ok = false;           // exact |F_AC| within bound_graph
  bool certified = false;          // truncated + KP tail within bound_width
};

// Requires p_min > p_min,c for the instance (throws otherwise).
FacReport f_ac_bound_check(const PinnedModel& m, const Tripartition& t, std::size_t w_max);

}  // namespace mklab
