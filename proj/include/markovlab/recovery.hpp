#pragma once

#include "markovlab/noise.hpp"

namespace mklab {

// Stochastic map from the noisy configuration of patch + collar to a restored
// patch configuration, built as the exact Bayes posterior of the clean patch
// given the noisy readings.
class PatchRecovery {
 public:
  PatchRecovery() = default;
  PatchRecovery(Region patch, Region collar, std::vector<std::uint32_t> patch_dims,
                std::vector<std::uint32_t> window_dims, std::vector<double> map);

  const Region& patch() const { return patch_; }
  const Region& collar() const { return collar_; }
  Region window() const { return patch_.unite(collar_); }
  // map[y_patch * n_window + x_window] = P(restore y | observed window x).
  double entry(std::size_t y_patch, std::size_t x_window) const { return map_[y_patch * n_window_ + x_window]; }
  std::size_t patch_states() const { return n_patch_; }
  std::size_t window_states() const { return n_window_; }

 private:
  Region patch_;
  Region collar_;
  std::vector<std::uint32_t> patch_dims_, window_dims_;
  std::size_t n_patch_ = 0, n_window_ = 0;
  std::vector<double> map_;
};

// Builds the posterior-resampling recovery for `patch` from the exact clean
// distribution and the noise process; the collar is every site within graph
// distance r of the patch.
PatchRecovery build_patch_recovery(const DiscreteDistribution& clean, const NoiseProcess& proc,
                                   const Hypergraph& g, const Region& patch, std::size_t r,
                                   int budget_bits = kDefaultBudgetBits);

// Applies the recoveries in order to a distribution over all sites.
DiscreteDistribution apply_recoveries(const DiscreteDistribution& noisy,
                                      const std::vector<PatchRecovery>& recoveries);

// Trotterized composition: one recovery per noise gate, each built against
// the distribution with the earlier gates already applied (patch = the gate's
// support), returned in reverse order so that applying them to the fully
// noisy distribution unwinds the gates last-to-first.
std::vector<PatchRecovery> build_sweep_recoveries(const DiscreteDistribution& clean,
                                                  const NoiseProcess& proc, const Hypergraph& g,
                                                  std::size_t r, int budget_bits = kDefaultBudgetBits);

// TV distance between the clean distribution and recover(noise(clean)).
double recovery_error(const DiscreteDistribution& clean, const NoiseProcess& proc,
                      const std::vector<PatchRecovery>& recoveries);

struct MarkovLengthFit {
  double xi = 0.0;        // -1/slope of the least-squares line on (d, log cmi)
  double prefactor = 0.0; // smallest c with cmi_i <= c e^{-d_i/xi} for all samples
  double residual = 0.0;  // rms residual of the least-squares fit in log space
  bool decaying = false;  // false flags a non-decaying fit (slope >= 0)
  std::size_t n_used = 0;
};

// Least squares on (d_AC, log cmi); samples at or below the numerical floor
// (1e-13) are dropped; requires >= 3 usable samples with distinct d values.
MarkovLengthFit fit_markov_length(const std::vector<std::pair<double, double>>& samples);

}  // namespace mklab
