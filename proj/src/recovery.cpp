#include "markovlab/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mklab {

PatchRecovery::PatchRecovery(Region patch, Region collar, std::vector<std::uint32_t> patch_dims,
                             std::vector<std::uint32_t> window_dims, std::vector<double> map)
    : patch_(std::move(patch)), collar_(std::move(collar)), patch_dims_(std::move(patch_dims)),
      window_dims_(std::move(window_dims)), map_(std::move(map)) {
  if (!patch_.disjoint_from(collar_)) throw std::invalid_argument("patch recovery: patch overlaps collar");
  n_patch_ = 1;
  for (auto d : patch_dims_) n_patch_ *= d;
  n_window_ = 1;
  for (auto d : window_dims_) n_window_ *= d;
  if (map_.size() != n_patch_ * n_window_) throw std::invalid_argument("patch recovery: map size mismatch");
  for (std::size_t w = 0; w < n_window_; ++w) {
    double col = 0.0;
    for (std::size_t y = 0; y < n_patch_; ++y) col += map_[y * n_window_ + w];
    if (std::abs(col - 1.0) > kProbTolerance) {
      throw std::invalid_argument("patch recovery: map is not column stochastic");
    }
  }
}

PatchRecovery build_patch_recovery(const DiscreteDistribution& clean, const NoiseProcess& proc,
                                   const Hypergraph& g, const Region& patch, std::size_t r,
                                   int budget_bits) {
  if (patch.empty()) throw std::invalid_argument("build_patch_recovery: empty patch");
  auto dist = distance_map(g, patch);
  std::vector<Vertex> collar_sites;
  for (std::size_t v = 0; v < g.n_vertices(); ++v) {
    if (dist[v] != kInfiniteDistance && dist[v] >= 1 && dist[v] <= r) {
      collar_sites.push_back(static_cast<Vertex>(v));
    }
  }
  Region collar(collar_sites);
  Region window = patch.unite(collar);
  if (!window.subset_of(clean.variables())) {
    throw std::invalid_argument("build_patch_recovery: window outside distribution variables");
  }
  check_budget(2.0 * g.state_bits(), 2 * budget_bits);

  std::vector<std::size_t> patch_pos, window_pos;
  std::vector<std::uint32_t> patch_dims, window_dims;
  for (Vertex v : patch) {
    patch_pos.push_back(clean.var_position(v));
    patch_dims.push_back(clean.dims()[patch_pos.back()]);
  }
  for (Vertex v : window) {
    window_pos.push_back(clean.var_position(v));
    window_dims.push_back(clean.dims()[window_pos.back()]);
  }
  MixedRadix prad(patch_dims), wrad(window_dims);

  // Joint mass of (clean patch, noisy window) by pushing each clean
  // configuration through the process.
  std::vector<double> joint(prad.size() * wrad.size(), 0.0);
  for (std::size_t x = 0; x < clean.size(); ++x) {
    const double px = clean.prob(x);
    if (px == 0.0) continue;
    std::vector<double> point(clean.size(), 0.0);
    point[x] = 1.0;
    DiscreteDistribution pushed = apply_process(
        DiscreteDistribution(clean.variables(), clean.dims(), std::move(point)), proc);
    std::size_t xp = 0;
    for (std::size_t k = 0; k < patch_pos.size(); ++k) {
      xp = xp * patch_dims[k] + static_cast<std::size_t>(clean.radix().digit(x, patch_pos[k]));
    }
    for (std::size_t y = 0; y < pushed.size(); ++y) {
      const double t = pushed.prob(y);
      if (t == 0.0) continue;
      std::size_t yw = 0;
      for (std::size_t k = 0; k < window_pos.size(); ++k) {
        yw = yw * window_dims[k] + static_cast<std::size_t>(pushed.radix().digit(y, window_pos[k]));
      }
      joint[xp * wrad.size() + yw] += px * t;
    }
  }

  // Normalize per observed window; unreachable windows restore the observed
  // patch value unchanged.
  std::vector<std::size_t> patch_in_window;
  for (Vertex v : patch) {
    auto it = std::lower_bound(window.verts().begin(), window.verts().end(), v);
    patch_in_window.push_back(static_cast<std::size_t>(it - window.verts().begin()));
  }
  std::vector<double> map(prad.size() * wrad.size(), 0.0);
  for (std::size_t w = 0; w < wrad.size(); ++w) {
    double mass = 0.0;
    for (std::size_t y = 0; y < prad.size(); ++y) mass += joint[y * wrad.size() + w];
    if (mass > 0.0) {
      for (std::size_t y = 0; y < prad.size(); ++y) map[y * wrad.size() + w] = joint[y * wrad.size() + w] / mass;
    } else {
      std::size_t yp = 0;
      for (std::size_t k = 0; k < patch_in_window.size(); ++k) {
        yp = yp * patch_dims[k] + static_cast<std::size_t>(wrad.digit(w, patch_in_window[k]));
      }
      map[yp * wrad.size() + w] = 1.0;
    }
  }
  return PatchRecovery(patch, collar, std::move(patch_dims), std::move(window_dims), std::move(map));
}

DiscreteDistribution apply_recoveries(const DiscreteDistribution& noisy,
                                      const std::vector<PatchRecovery>& recoveries) {
  DiscreteDistribution cur = noisy;
  for (const auto& rec : recoveries) {
    Region window = rec.window();
    std::vector<std::size_t> wpos, ppos;
    std::vector<std::uint32_t> wdims, pdims;
    for (Vertex v : window) {
      wpos.push_back(cur.var_position(v));
      wdims.push_back(cur.dims()[wpos.back()]);
    }
    for (Vertex v : rec.patch()) {
      ppos.push_back(cur.var_position(v));
      pdims.push_back(cur.dims()[ppos.back()]);
    }
    std::vector<double> out(cur.size(), 0.0);
    for (std::size_t x = 0; x < cur.size(); ++x) {
      const double px = cur.prob(x);
      if (px == 0.0) continue;
      std::size_t xw = 0;
      for (std::size_t k = 0; k < wpos.size(); ++k) {
        xw = xw * wdims[k] + static_cast<std::size_t>(cur.radix().digit(x, wpos[k]));
      }
      // Base index with the patch digits zeroed.
      long long base = static_cast<long long>(x);
      for (std::size_t k = 0; k < ppos.size(); ++k) {
        base -= static_cast<long long>(cur.radix().digit(x, ppos[k])) *
                static_cast<long long>(cur.radix().stride(ppos[k]));
      }
      for (std::size_t yp = 0; yp < rec.patch_states(); ++yp) {
        const double t = rec.entry(yp, xw);
        if (t == 0.0) continue;
        long long j = base;
        std::size_t rem = yp;
        for (std::size_t k = ppos.size(); k-- > 0;) {
          j += static_cast<long long>(rem % pdims[k]) * static_cast<long long>(cur.radix().stride(ppos[k]));
          rem /= pdims[k];
        }
        out[static_cast<std::size_t>(j)] += t * px;
      }
    }
    cur = DiscreteDistribution(cur.variables(), cur.dims(), std::move(out), /*normalize=*/true);
  }
  return cur;
}

std::vector<PatchRecovery> build_sweep_recoveries(const DiscreteDistribution& clean,
                                                  const NoiseProcess& proc, const Hypergraph& g,
                                                  std::size_t r, int budget_bits) {
  std::vector<const LocalChannel*> gates;
  if (const auto* sp = std::get_if<SiteProduct>(&proc)) {
    for (const auto& ch : sp->channels) gates.push_back(&ch);
  } else {
    for (const auto& layer : std::get<LayeredProcess>(proc).layers()) {
      for (const auto& ch : layer.channels) gates.push_back(&ch);
    }
  }
  std::vector<PatchRecovery> recs;
  DiscreteDistribution state = clean;
  for (const LocalChannel* gate : gates) {
    SiteProduct one;
    one.channels.push_back(*gate);
    NoiseProcess single = one;
    if (gate->support().size() > 1) {
      // Multi-site gates ride in a one-channel layer.
      single = LayeredProcess(g, {Layer{{*gate}}});
    }
    recs.push_back(build_patch_recovery(state, single, g, gate->support(), r, budget_bits));
    state = apply_channel(state, *gate);
  }
  std::reverse(recs.begin(), recs.end());
  return recs;
}

double recovery_error(const DiscreteDistribution& clean, const NoiseProcess& proc,
                      const std::vector<PatchRecovery>& recoveries) {
  DiscreteDistribution noisy = apply_process(clean, proc);
  DiscreteDistribution recovered = apply_recoveries(noisy, recoveries);
  return total_variation(clean, recovered);
}

MarkovLengthFit fit_markov_length(const std::vector<std::pair<double, double>>& samples) {
  std::vector<std::pair<double, double>> used;  // (d, log cmi)
  for (const auto& [d, v] : samples) {
    if (v > 1e-13) used.emplace_back(d, std::log(v));
  }
  MarkovLengthFit fit;
  fit.n_used = used.size();
  if (used.size() < 3) {
    throw std::invalid_argument("fit_markov_length: need at least 3 samples above the numerical floor");
  }
  {
    std::vector<double> ds;
    for (const auto& [d, lv] : used) ds.push_back(d);
    std::sort(ds.begin(), ds.end());
    if (std::adjacent_find(ds.begin(), ds.end()) != ds.end()) {
      throw std::invalid_argument("fit_markov_length: d_AC values must be distinct");
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(used.size());
  for (const auto& [d, lv] : used) {
    sx += d;
    sy += lv;
    sxx += d * d;
    sxy += d * lv;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  double ss = 0.0;
  for (const auto& [d, lv] : used) {
    const double r = lv - (intercept + slope * d);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  if (slope >= 0.0) {
    fit.decaying = false;
    fit.xi = 0.0;
    fit.prefactor = 0.0;
    return fit;
  }
  fit.decaying = true;
  fit.xi = -1.0 / slope;
  double log_c = -std::numeric_limits<double>::infinity();
  for (const auto& [d, lv] : used) log_c = std::max(log_c, lv + d / fit.xi);
  fit.prefactor = std::exp(log_c);
  return fit;
}

}  // namespace mklab
