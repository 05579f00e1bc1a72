#include "markovlab/polymer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>

namespace mklab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Unified view of a pinned model for excitation-ratio computations over
// subsets of the pinned region, encoded as bitmasks.
struct PinnedView {
  const PinnedModel& m;
  const Hypergraph& g;
  std::vector<Vertex> b_sites;
  std::vector<int> bit_of;              // site -> bit index in B, -1 otherwise
  std::vector<std::uint64_t> nbr_mask;  // per B-bit: adjacent B bits
  std::uint64_t all_mask = 0;

  struct Table {
    const std::vector<Vertex>* support;
    const std::vector<double>* table;
  };
  std::vector<Table> tables;                       // base terms followed by pinning terms
  std::vector<std::vector<std::size_t>> touching;  // per B-bit: indices of tables touching it

  explicit PinnedView(const PinnedModel& model) : m(model), g(model.base().graph()) {
    if (m.pinned_region().size() > 62) throw budget_exceeded("pinned region too large for bitmask enumeration");
    b_sites = m.pinned_region().verts();
    bit_of.assign(g.n_vertices(), -1);
    for (std::size_t i = 0; i < b_sites.size(); ++i) bit_of[b_sites[i]] = static_cast<int>(i);
    all_mask = b_sites.empty() ? 0 : (1ull << b_sites.size()) - 1;

    for (const auto& t : m.base().terms()) tables.push_back({&t.support, &t.table});
    for (const auto& p : m.pins()) tables.push_back({&p.support, &p.table});

    touching.assign(b_sites.size(), {});
    for (std::size_t ti = 0; ti < tables.size(); ++ti) {
      for (Vertex v : *tables[ti].support) {
        if (bit_of[v] >= 0) touching[static_cast<std::size_t>(bit_of[v])].push_back(ti);
      }
    }
    for (auto& lst : touching) {
      std::sort(lst.begin(), lst.end());
      lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    }

    nbr_mask.assign(b_sites.size(), 0);
    for (std::size_t i = 0; i < b_sites.size(); ++i) {
      for (Vertex u : g.neighbors(b_sites[i])) {
        if (bit_of[u] >= 0) nbr_mask[i] |= 1ull << bit_of[u];
      }
    }
  }

  std::uint64_t region_mask(const Region& r) const {
    std::uint64_t out = 0;
    for (Vertex v : r) {
      if (bit_of[v] >= 0) out |= 1ull << bit_of[v];
    }
    return out;
  }

  // B bits sharing a hyperedge with a site of r outside B.
  std::uint64_t adjacency_mask(const Region& r) const {
    std::uint64_t out = 0;
    for (Vertex v : r) {
      if (bit_of[v] >= 0) continue;
      for (Vertex u : g.neighbors(v)) {
        if (bit_of[u] >= 0) out |= 1ull << bit_of[u];
      }
    }
    return out;
  }

  bool mask_connected(std::uint64_t mask) const {
    if (mask == 0) return true;
    std::uint64_t seen = mask & (~mask + 1);
    for (;;) {
      std::uint64_t grow = seen;
      std::uint64_t probe = mask & ~seen;
      while (probe) {
        int b = std::countr_zero(probe);
        probe &= probe - 1;
        if (nbr_mask[static_cast<std::size_t>(b)] & seen) grow |= 1ull << b;
      }
      if (grow == seen) break;
      seen = grow;
    }
    return seen == mask;
  }

  // Unpinned sites sharing a hyperedge with any masked B site.
  std::vector<Vertex> relevant_unpinned(std::uint64_t mask) const {
    std::vector<Vertex> out;
    std::uint64_t probe = mask;
    while (probe) {
      int b = std::countr_zero(probe);
      probe &= probe - 1;
      for (Vertex u : g.neighbors(b_sites[static_cast<std::size_t>(b)])) {
        if (bit_of[u] < 0) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  double table_energy(const std::vector<std::size_t>& which, const std::vector<int>& x) const {
    double e = 0.0;
    for (std::size_t ti : which) {
      std::size_t idx = 0;
      for (Vertex v : *tables[ti].support) idx = idx * g.dim(v) + static_cast<std::size_t>(x[v]);
      e += tables[ti].table->at(idx);
      if (e == kInf) return kInf;
    }
    return e;
  }

  // Excitation ratio for subset `mask`: the masked sites run over non-favored
  // values, B\mask sits at favored, unpinned sites come from x_full. Returns
  // nullopt when the favored reference configuration has zero weight.
  std::optional<double> ratio(std::uint64_t mask, const std::vector<int>& x_full) const {
    if (mask == 0) return 1.0;
    std::vector<std::size_t> which;
    {
      std::uint64_t probe = mask;
      while (probe) {
        int b = std::countr_zero(probe);
        probe &= probe - 1;
        for (std::size_t ti : touching[static_cast<std::size_t>(b)]) which.push_back(ti);
      }
      std::sort(which.begin(), which.end());
      which.erase(std::unique(which.begin(), which.end()), which.end());
    }
    std::vector<int> x = x_full;
    for (Vertex v : b_sites) x[v] = m.favored_value(v);
    const double e_fav = table_energy(which, x);
    if (e_fav == kInf) return std::nullopt;

    std::vector<Vertex> sites;
    std::vector<std::vector<int>> excited;
    {
      std::uint64_t probe = mask;
      while (probe) {
        int b = std::countr_zero(probe);
        probe &= probe - 1;
        Vertex v = b_sites[static_cast<std::size_t>(b)];
        sites.push_back(v);
        std::vector<int> vals;
        for (std::uint32_t val = 0; val < g.dim(v); ++val) {
          if (static_cast<int>(val) != m.favored_value(v)) vals.push_back(static_cast<int>(val));
        }
        if (vals.empty()) return 0.0;  // dimension 1: no excitations at all
        excited.push_back(std::move(vals));
      }
    }
    double num = 0.0;
    std::vector<std::size_t> pick(sites.size(), 0);
    for (;;) {
      for (std::size_t k = 0; k < sites.size(); ++k) x[sites[k]] = excited[k][pick[k]];
      const double e = table_energy(which, x);
      if (e != kInf) num += std::exp(-(e - e_fav));
      std::size_t k = sites.size();
      bool done = true;
      while (k > 0) {
        --k;
        if (++pick[k] < excited[k].size()) {
          done = false;
          break;
        }
        pick[k] = 0;
      }
      if (done) return num;
    }
  }

  // Worst |Z_mask| over the boundary-relevant unpinned assignments, with the
  // remaining unpinned sites held at 0.
  double worst_abs_ratio(std::uint64_t mask) const {
    std::vector<Vertex> rel = relevant_unpinned(mask);
    double bits = 0.0;
    for (Vertex v : rel) bits += std::log2(static_cast<double>(g.dim(v)));
    check_budget(bits, 24);
    std::vector<int> x(g.n_vertices(), 0);
    std::vector<std::uint32_t> dims;
    for (Vertex v : rel) dims.push_back(g.dim(v));
    MixedRadix radix(dims);
    double worst = 0.0;
    std::vector<int> vals;
    for (std::size_t i = 0; i < radix.size(); ++i) {
      radix.decode(i, vals);
      for (std::size_t k = 0; k < rel.size(); ++k) x[rel[k]] = vals[k];
      auto r = ratio(mask, x);
      if (r) worst = std::max(worst, std::abs(*r));
    }
    return worst;
  }
};

// Ursell function over copy bitmasks: adj[i] is the bitmask of copies
// incompatible with copy i. phi = sum over connected spanning subgraphs of
// (-1)^{#edges}, computed by Moebius inversion of the independence indicator.
double ursell_masks(const std::vector<std::uint64_t>& adj) {
  const std::size_t nv = adj.size();
  if (nv == 0) return 0.0;
  if (nv == 1) return 1.0;
  if (nv > 20) throw budget_exceeded("ursell: cluster too large");
  const std::size_t total = 1ull << nv;
  std::vector<double> f(total), gg(total, 0.0);
  for (std::size_t s = 0; s < total; ++s) {
    bool independent = true;
    std::uint64_t probe = s;
    while (probe) {
      int b = std::countr_zero(probe);
      probe &= probe - 1;
      if (adj[static_cast<std::size_t>(b)] & probe) {
        independent = false;
        break;
      }
    }
    f[s] = independent ? 1.0 : 0.0;
  }
  for (std::size_t s = 1; s < total; ++s) {
    const std::uint64_t low = s & (~s + 1);
    double val = f[s];
    // Proper submasks of s that contain the lowest bit.
    for (std::uint64_t t = (s - 1) & s; t; t = (t - 1) & s) {
      if ((t & low) && t != s) val -= gg[t] * f[s & ~t];
    }
    gg[s] = val;
  }
  return gg[total - 1];
}

}  // namespace

double polymer_weight(const PinnedModel& m, const Polymer& gam, const std::vector<int>& x_full) {
  PinnedView view(m);
  std::uint64_t mask = view.region_mask(gam.sites);
  if (std::popcount(mask) != static_cast<int>(gam.sites.size())) {
    throw std::invalid_argument("polymer_weight: polymer not inside the pinned region");
  }
  if (!view.mask_connected(mask)) throw std::invalid_argument("polymer_weight: polymer not connected");
  auto r = view.ratio(mask, x_full);
  if (!r) throw std::invalid_argument("polymer_weight: reference configuration has zero weight");
  return *r;
}

double subset_excitation_ratio(const PinnedModel& m, const Region& d, const std::vector<int>& x_full) {
  PinnedView view(m);
  std::uint64_t mask = view.region_mask(d);
  if (std::popcount(mask) != static_cast<int>(d.size())) {
    throw std::invalid_argument("subset_excitation_ratio: subset not inside the pinned region");
  }
  auto r = view.ratio(mask, x_full);
  if (!r) throw std::invalid_argument("subset_excitation_ratio: reference configuration has zero weight");
  return *r;
}

ZdReport zd_exponential_bound_check(const PinnedModel& m, int budget_bits) {
  PinnedView view(m);
  const std::size_t nb = view.b_sites.size();
  check_budget(static_cast<double>(nb), budget_bits);

  std::size_t q_eff = 2;
  for (Vertex v : view.b_sites) q_eff = std::max<std::size_t>(q_eff, m.base().graph().dim(v));
  const double deg = static_cast<double>(m.base().graph().max_degree());
  ZdReport rep;
  rep.delta = m.p_min() / deg - deg * m.h_max() - std::log(static_cast<double>(q_eff - 1));
  rep.worst_ratio = 0.0;
  rep.subsets_checked = 0;

  std::vector<Vertex> rel = view.relevant_unpinned(view.all_mask);
  std::vector<std::uint32_t> dims;
  for (Vertex v : rel) dims.push_back(view.g.dim(v));
  MixedRadix radix(dims);
  double bits = 0.0;
  for (auto d : dims) bits += std::log2(static_cast<double>(d));
  check_budget(static_cast<double>(nb) + bits, budget_bits);

  std::vector<int> x(view.g.n_vertices(), 0);
  std::vector<int> vals;
  for (std::size_t xi = 0; xi < radix.size(); ++xi) {
    radix.decode(xi, vals);
    for (std::size_t k = 0; k < rel.size(); ++k) x[rel[k]] = vals[k];
    for (std::uint64_t mask = 1; mask <= view.all_mask; ++mask) {
      auto r = view.ratio(mask, x);
      if (!r) continue;
      const double scaled = std::abs(*r) * std::exp(rep.delta * static_cast<double>(std::popcount(mask)));
      rep.worst_ratio = std::max(rep.worst_ratio, scaled);
      ++rep.subsets_checked;
    }
  }
  rep.ok = rep.worst_ratio <= 1.0 + 1e-12;
  return rep;
}

bool z_factorization_check(const PinnedModel& m, const Polymer& d1, const Polymer& d2, double tol) {
  PinnedView view(m);
  std::uint64_t m1 = view.region_mask(d1.sites);
  std::uint64_t m2 = view.region_mask(d2.sites);
  if (m1 & m2) throw std::invalid_argument("z_factorization_check: subsets overlap");
  // Disconnected: no site of d1 adjacent to d2.
  std::uint64_t reach = 0;
  {
    std::uint64_t probe = m1;
    while (probe) {
      int b = std::countr_zero(probe);
      probe &= probe - 1;
      reach |= view.nbr_mask[static_cast<std::size_t>(b)];
    }
  }
  if (reach & m2) throw std::invalid_argument("z_factorization_check: subsets are not disconnected");
  if (m1 == 0 || m2 == 0) return true;

  std::vector<Vertex> rel = view.relevant_unpinned(m1 | m2);
  std::vector<std::uint32_t> dims;
  for (Vertex v : rel) dims.push_back(view.g.dim(v));
  MixedRadix radix(dims);
  std::vector<int> x(view.g.n_vertices(), 0);
  std::vector<int> vals;
  for (std::size_t xi = 0; xi < radix.size(); ++xi) {
    radix.decode(xi, vals);
    for (std::size_t k = 0; k < rel.size(); ++k) x[rel[k]] = vals[k];
    auto ru = view.ratio(m1 | m2, x);
    auto r1 = view.ratio(m1, x);
    auto r2 = view.ratio(m2, x);
    if (!ru || !r1 || !r2) continue;
    if (std::abs(*ru - *r1 * *r2) > tol) return false;
  }
  return true;
}

double ursell(const Hypergraph& g, const Cluster& w) {
  // Copies of the same polymer are always incompatible; distinct polymers are
  // incompatible when they share a site or a hyperedge connects them.
  std::vector<const Polymer*> polys;
  std::vector<int> mult;
  for (const auto& [p, mu] : w.entries) {
    if (mu < 1) throw std::invalid_argument("ursell: multiplicities must be >= 1");
    polys.push_back(&p);
    mult.push_back(mu);
  }
  auto incompatible = [&](const Polymer& x, const Polymer& y) {
    if (!x.sites.disjoint_from(y.sites)) return true;
    for (Vertex v : x.sites) {
      for (Vertex u : g.neighbors(v)) {
        if (y.sites.contains(u)) return true;
      }
    }
    return false;
  };
  std::vector<std::pair<std::size_t, int>> copies;  // (polymer index, copy no)
  for (std::size_t i = 0; i < polys.size(); ++i) {
    for (int c = 0; c < mult[i]; ++c) copies.emplace_back(i, c);
  }
  const std::size_t nv = copies.size();
  std::vector<std::uint64_t> adj(nv, 0);
  for (std::size_t i = 0; i < nv; ++i) {
    for (std::size_t j = i + 1; j < nv; ++j) {
      bool inc = copies[i].first == copies[j].first ||
                 incompatible(*polys[copies[i].first], *polys[copies[j].first]);
      if (inc) {
        adj[i] |= 1ull << j;
        adj[j] |= 1ull << i;
      }
    }
  }
  // Connectivity of the cluster graph.
  if (nv == 0) throw std::invalid_argument("ursell: empty cluster");
  std::uint64_t seen = 1;
  const std::uint64_t full = nv >= 64 ? ~0ull : (1ull << nv) - 1;
  for (;;) {
    std::uint64_t grow = seen;
    for (std::size_t i = 0; i < nv; ++i) {
      if (seen & (1ull << i)) grow |= adj[i];
    }
    if (grow == seen) break;
    seen = grow;
  }
  if (seen != full) throw std::invalid_argument("ursell: disconnected cluster");
  return ursell_masks(adj);
}

std::vector<Polymer> enumerate_polymers(const Hypergraph& g, const Region& b, std::size_t k_max) {
  if (k_max < 1) throw std::invalid_argument("enumerate_polymers: k_max must be >= 1");
  std::vector<Vertex> sites = b.verts();
  std::vector<int> pos(g.n_vertices(), -1);
  for (std::size_t i = 0; i < sites.size(); ++i) pos[sites[i]] = static_cast<int>(i);

  std::vector<std::vector<int>> nbr(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (Vertex u : g.neighbors(sites[i])) {
      if (pos[u] >= 0) nbr[i].push_back(pos[u]);
    }
  }

  std::vector<Polymer> out;
  std::vector<int> cur;
  std::vector<char> in_cur(sites.size(), 0), banned(sites.size(), 0);

  // Standard connected-subgraph enumeration anchored at each minimal site:
  // extensions only grow with indices above the anchor, and each candidate is
  // consumed or banned for the rest of the branch.
  std::function<void(int, std::vector<int>)> extend = [&](int anchor, std::vector<int> ext) {
    {
      std::vector<Vertex> vs;
      for (int i : cur) vs.push_back(sites[static_cast<std::size_t>(i)]);
      out.push_back(Polymer{Region(std::move(vs))});
    }
    if (cur.size() == k_max) return;
    std::vector<int> banned_here;
    for (std::size_t e = 0; e < ext.size(); ++e) {
      int v = ext[e];
      std::vector<int> next = std::vector<int>(ext.begin() + static_cast<std::ptrdiff_t>(e) + 1, ext.end());
      cur.push_back(v);
      in_cur[static_cast<std::size_t>(v)] = 1;
      for (int u : nbr[static_cast<std::size_t>(v)]) {
        if (u > anchor && !in_cur[static_cast<std::size_t>(u)] && !banned[static_cast<std::size_t>(u)]) {
          bool already = std::find(next.begin(), next.end(), u) != next.end();
          if (!already) next.push_back(u);
        }
      }
      extend(anchor, next);
      cur.pop_back();
      in_cur[static_cast<std::size_t>(v)] = 0;
      banned[static_cast<std::size_t>(v)] = 1;
      banned_here.push_back(v);
    }
    for (int v : banned_here) banned[static_cast<std::size_t>(v)] = 0;
  };

  for (std::size_t a = 0; a < sites.size(); ++a) {
    cur = {static_cast<int>(a)};
    in_cur[a] = 1;
    std::vector<int> ext;
    for (int u : nbr[a]) {
      if (u > static_cast<int>(a)) ext.push_back(u);
    }
    std::sort(ext.begin(), ext.end());
    extend(static_cast<int>(a), ext);
    in_cur[a] = 0;
  }
  std::sort(out.begin(), out.end(), [](const Polymer& x, const Polymer& y) {
    if (x.weight() != y.weight()) return x.weight() < y.weight();
    return x.sites.verts() < y.sites.verts();
  });
  return out;
}

KpCertificate kp_certificate(const PinnedModel& m, double a, double b, std::size_t k_max) {
  if (!(a > 0.0) || b < 0.0) throw std::invalid_argument("kp_certificate: need a > 0 and b >= 0");
  PinnedView view(m);
  KpCertificate cert;
  cert.a = a;
  cert.b = b;
  cert.k_max = k_max;
  std::vector<Polymer> polys = enumerate_polymers(view.g, m.pinned_region(), k_max);
  std::vector<std::uint64_t> masks;
  std::vector<double> worst;
  masks.reserve(polys.size());
  for (const auto& p : polys) {
    std::uint64_t mask = view.region_mask(p.sites);
    masks.push_back(mask);
    worst.push_back(view.worst_abs_ratio(mask));
  }
  std::vector<std::uint64_t> closure(polys.size());
  for (std::size_t i = 0; i < polys.size(); ++i) {
    std::uint64_t c = masks[i];
    std::uint64_t probe = masks[i];
    while (probe) {
      int bit = std::countr_zero(probe);
      probe &= probe - 1;
      c |= view.nbr_mask[static_cast<std::size_t>(bit)];
    }
    closure[i] = c;
  }
  cert.worst_margin = -kInf;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < polys.size(); ++j) {
      if ((closure[i] & masks[j]) && worst[j] > 0.0) {
        lhs += worst[j] * std::exp((a + b) * static_cast<double>(polys[j].weight()));
      }
    }
    cert.worst_margin = std::max(cert.worst_margin, lhs - a * static_cast<double>(polys[i].weight()));
  }
  cert.satisfied = cert.worst_margin <= 0.0;
  return cert;
}

double critical_pinning(std::size_t d_deg, double h_max, std::size_t q_eff) {
  if (d_deg < 1 || q_eff < 2) throw std::invalid_argument("critical_pinning: need d_deg >= 1, q_eff >= 2");
  const double d = static_cast<double>(d_deg);
  return d * (1.0 + std::log(1.0 + d) + d * h_max + std::log(static_cast<double>(q_eff - 1)));
}

double critical_epsilon(std::size_t degree_param, double beta, std::uint32_t q, std::size_t depth) {
  if (degree_param < 1 || q < 2 || depth < 1 || beta < 0.0) {
    throw std::invalid_argument("critical_epsilon: invalid arguments");
  }
  const double deg = static_cast<double>(degree_param);
  const double d = static_cast<double>(depth);
  const double rhs = deg * (1.0 + std::log(1.0 + deg) + deg * beta + d * std::log(static_cast<double>(q)));
  auto lhs = [&](double eps) { return d * std::log1p(-eps) - std::log(eps); };
  double lo = 1e-300, hi = 1.0 - 1e-16;
  for (int it = 0; it < 400; ++it) {
    double mid = 0.5 * (lo + hi);
    if (lhs(mid) - rhs > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double exact_log_ptilde(const PinnedModel& m, const std::vector<int>& x_full, int budget_bits) {
  const Hypergraph& g = m.base().graph();
  std::vector<Vertex> bs = m.pinned_region().verts();
  std::vector<std::uint32_t> dims;
  for (Vertex v : bs) dims.push_back(g.dim(v));
  double bits = 0.0;
  for (auto d : dims) bits += std::log2(static_cast<double>(d));
  check_budget(bits, budget_bits);
  MixedRadix radix(dims);
  std::vector<int> x = x_full;
  std::vector<int> vals;
  double sum = 0.0;
  for (std::size_t i = 0; i < radix.size(); ++i) {
    radix.decode(i, vals);
    for (std::size_t k = 0; k < bs.size(); ++k) x[bs[k]] = vals[k];
    double e = m.total_energy(x);
    if (e != kInf) sum += std::exp(-e);
  }
  if (!(sum > 0.0)) throw std::runtime_error("exact_log_ptilde: zero total weight");
  return std::log(sum);
}

FreeEnergySplit exact_free_energy_split(const PinnedModel& m, const Tripartition& t,
                                        const std::vector<int>& x_full) {
  PinnedView view(m);
  if (Region(view.b_sites) != t.b) throw std::invalid_argument("exact_free_energy_split: t.b must be the pinned region");
  const std::size_t nb = view.b_sites.size();
  if (nb > 24) throw budget_exceeded("exact_free_energy_split: pinned region too large");
  const std::uint64_t mask_a = view.adjacency_mask(t.a);
  const std::uint64_t mask_c = view.adjacency_mask(t.c);

  // Memoized per-component excitation ratios at this x_AC.
  std::unordered_map<std::uint64_t, double> comp_ratio;
  auto component_ratio = [&](std::uint64_t comp) {
    auto it = comp_ratio.find(comp);
    if (it != comp_ratio.end()) return it->second;
    auto r = view.ratio(comp, x_full);
    if (!r) throw std::invalid_argument("exact_free_energy_split: reference configuration has zero weight");
    comp_ratio.emplace(comp, *r);
    return *r;
  };

  double xi_all = 0.0, xi_ca = 0.0, xi_cc = 0.0, xi_cac = 0.0;
  const std::uint64_t total = view.all_mask;
  for (std::uint64_t d = 0;; ++d) {
    double prod = 1.0;
    bool touches_a = false, touches_c = false;
    std::uint64_t rest = d;
    while (rest) {
      // Peel one connected component off `rest`.
      std::uint64_t comp = rest & (~rest + 1);
      for (;;) {
        std::uint64_t grow = comp;
        std::uint64_t probe = rest & ~comp;
        while (probe) {
          int bit = std::countr_zero(probe);
          probe &= probe - 1;
          if (view.nbr_mask[static_cast<std::size_t>(bit)] & comp) grow |= 1ull << bit;
        }
        if (grow == comp) break;
        comp = grow;
      }
      rest &= ~comp;
      prod *= component_ratio(comp);
      if (comp & mask_a) touches_a = true;
      if (comp & mask_c) touches_c = true;
      if (prod == 0.0) break;
    }
    xi_all += prod;
    if (!touches_a) xi_ca += prod;
    if (!touches_c) xi_cc += prod;
    if (!touches_a && !touches_c) xi_cac += prod;
    if (d == total) break;
  }

  FreeEnergySplit out;
  {
    std::vector<int> x = x_full;
    for (Vertex v : view.b_sites) x[v] = m.favored_value(v);
    out.log_z0 = -m.total_energy(x);
  }
  out.log_ptilde = out.log_z0 + std::log(xi_all);
  out.f_empty = std::log(xi_cac);
  out.f_a = std::log(xi_cc) - out.f_empty;
  out.f_c = std::log(xi_ca) - out.f_empty;
  out.f_ac = std::log(xi_all) - std::log(xi_cc) - std::log(xi_ca) + out.f_empty;
  return out;
}

ExpansionReport truncated_log_expansion(const PinnedModel& m, const Tripartition& t,
                                        const std::vector<int>& x_full, std::size_t w_max,
                                        double kp_a, double kp_b) {
  if (w_max < 1) throw std::invalid_argument("truncated_log_expansion: w_max must be >= 1");
  if (w_max > 16) throw budget_exceeded("truncated_log_expansion: w_max too large");
  PinnedView view(m);
  if (Region(view.b_sites) != t.b) throw std::invalid_argument("truncated_log_expansion: t.b must be the pinned region");

  ExpansionReport rep;
  rep.w_max = w_max;
  {
    std::size_t dac = graph_distance(view.g, t.a, t.c);
    rep.separation_width = dac == kInfiniteDistance || dac == 0 ? 0 : dac - 1;
  }

  std::vector<Polymer> polys = enumerate_polymers(view.g, m.pinned_region(), w_max);
  const std::size_t np = polys.size();
  std::vector<std::uint64_t> masks(np), closure(np);
  std::vector<double> z(np);
  std::vector<char> inc_a(np, 0), inc_c(np, 0);
  const std::uint64_t mask_a = view.adjacency_mask(t.a);
  const std::uint64_t mask_c = view.adjacency_mask(t.c);
  for (std::size_t i = 0; i < np; ++i) {
    masks[i] = view.region_mask(polys[i].sites);
    std::uint64_t c = masks[i];
    std::uint64_t probe = masks[i];
    while (probe) {
      int bit = std::countr_zero(probe);
      probe &= probe - 1;
      c |= view.nbr_mask[static_cast<std::size_t>(bit)];
    }
    closure[i] = c;
    auto r = view.ratio(masks[i], x_full);
    if (!r) throw std::invalid_argument("truncated_log_expansion: reference configuration has zero weight");
    z[i] = *r;
    inc_a[i] = (masks[i] & mask_a) ? 1 : 0;
    inc_c[i] = (masks[i] & mask_c) ? 1 : 0;
  }

  std::vector<double> by_weight_all(w_max + 1, 0.0);
  std::vector<double> by_weight_empty(w_max + 1, 0.0), by_weight_a(w_max + 1, 0.0),
      by_weight_c(w_max + 1, 0.0), by_weight_ac(w_max + 1, 0.0);
  rep.min_fac_weight = 0;
  rep.clusters_evaluated = 0;

  std::vector<std::pair<std::size_t, int>> chosen;  // (polymer index, multiplicity)
  std::function<void(std::size_t, std::size_t)> extend = [&](std::size_t start, std::size_t weight) {
    if (!chosen.empty()) {
      // Connectivity over distinct polymers (copies of one polymer always link).
      const std::size_t k = chosen.size();
      std::uint64_t seen = 1, full = (1ull << k) - 1;
      for (;;) {
        std::uint64_t grow = seen;
        for (std::size_t i = 0; i < k; ++i) {
          if (!(seen & (1ull << i))) continue;
          for (std::size_t j = 0; j < k; ++j) {
            if (!(seen & (1ull << j)) && (closure[chosen[i].first] & masks[chosen[j].first])) {
              grow |= 1ull << j;
            }
          }
        }
        if (grow == seen) break;
        seen = grow;
      }
      if (seen == full) {
        // Cluster graph over copies; compute phi, W!, Z_W.
        std::vector<std::uint64_t> adj;
        std::vector<std::size_t> owner;
        for (std::size_t i = 0; i < k; ++i) {
          for (int cpy = 0; cpy < chosen[i].second; ++cpy) owner.push_back(i);
        }
        const std::size_t nv = owner.size();
        adj.assign(nv, 0);
        for (std::size_t i = 0; i < nv; ++i) {
          for (std::size_t j = i + 1; j < nv; ++j) {
            bool inc = owner[i] == owner[j] ||
                       (closure[chosen[owner[i]].first] & masks[chosen[owner[j]].first]);
            if (inc) {
              adj[i] |= 1ull << j;
              adj[j] |= 1ull << i;
            }
          }
        }
        double phi = ursell_masks(adj);
        double fact = 1.0, zw = 1.0;
        bool a_hit = false, c_hit = false;
        for (const auto& [pi, mu] : chosen) {
          for (int f = 2; f <= mu; ++f) fact *= f;
          for (int f = 0; f < mu; ++f) zw *= z[pi];
          if (inc_a[pi]) a_hit = true;
          if (inc_c[pi]) c_hit = true;
        }
        const double contrib = phi / fact * zw;
        by_weight_all[weight] += contrib;
        if (a_hit && c_hit) {
          by_weight_ac[weight] += contrib;
          if (zw != 0.0 && (rep.min_fac_weight == 0 || weight < rep.min_fac_weight)) {
            rep.min_fac_weight = weight;
          }
        } else if (a_hit) {
          by_weight_a[weight] += contrib;
        } else if (c_hit) {
          by_weight_c[weight] += contrib;
        } else {
          by_weight_empty[weight] += contrib;
        }
        ++rep.clusters_evaluated;
      }
    }
    for (std::size_t i = start; i < np; ++i) {
      const std::size_t pw = polys[i].weight();
      for (int mu = 1; weight + pw * static_cast<std::size_t>(mu) <= w_max; ++mu) {
        chosen.emplace_back(i, mu);
        extend(i + 1, weight + pw * static_cast<std::size_t>(mu));
        chosen.pop_back();
      }
    }
  };
  extend(0, 0);

  {
    std::vector<int> x = x_full;
    for (Vertex v : view.b_sites) x[v] = m.favored_value(v);
    rep.log_z0 = -m.total_energy(x);
  }
  rep.exact_log_ptilde = exact_log_ptilde(m, x_full);
  rep.log_ptilde_partial.resize(w_max);
  rep.f_empty_partial.resize(w_max);
  rep.f_a_partial.resize(w_max);
  rep.f_c_partial.resize(w_max);
  rep.f_ac_partial.resize(w_max);
  rep.residual.resize(w_max);
  double acc = 0.0, acc_e = 0.0, acc_a = 0.0, acc_c = 0.0, acc_ac = 0.0;
  for (std::size_t w = 1; w <= w_max; ++w) {
    acc += by_weight_all[w];
    acc_e += by_weight_empty[w];
    acc_a += by_weight_a[w];
    acc_c += by_weight_c[w];
    acc_ac += by_weight_ac[w];
    rep.log_ptilde_partial[w - 1] = rep.log_z0 + acc;
    rep.f_empty_partial[w - 1] = acc_e;
    rep.f_a_partial[w - 1] = acc_a;
    rep.f_c_partial[w - 1] = acc_c;
    rep.f_ac_partial[w - 1] = acc_ac;
    rep.residual[w - 1] = std::abs(rep.log_ptilde_partial[w - 1] - rep.exact_log_ptilde);
  }
  if (kp_a > 0.0) rep.kp = kp_certificate(m, kp_a, kp_b, m.pinned_region().size());
  return rep;
}

FacReport f_ac_bound_check(const PinnedModel& m, const Tripartition& t, std::size_t w_max) {
  PinnedView view(m);
  const Hypergraph& g = view.g;
  FacReport rep;
  rep.p_min = m.p_min();
  std::size_t q_eff = 2;
  for (Vertex v : view.b_sites) q_eff = std::max<std::size_t>(q_eff, g.dim(v));
  rep.p_min_c = critical_pinning(g.max_degree(), m.h_max(), q_eff);
  if (!(rep.p_min > rep.p_min_c)) {
    throw std::invalid_argument("f_ac_bound_check: requires p_min > p_min,c");
  }
  rep.decay_b = rep.p_min - rep.p_min_c;
  rep.d_ac = graph_distance(g, t.a, t.c);
  if (rep.d_ac == kInfiniteDistance || rep.d_ac == 0) {
    throw std::invalid_argument("f_ac_bound_check: A and C must be separated at positive distance");
  }
  rep.width = rep.d_ac - 1;

  const std::size_t min_boundary = std::min(boundary_set(g, t.a).size(), boundary_set(g, t.c).size());
  rep.bound_graph = static_cast<double>(min_boundary) * std::exp(-rep.decay_b * static_cast<double>(rep.d_ac));
  rep.bound_width = static_cast<double>(min_boundary) * std::exp(-rep.decay_b * static_cast<double>(rep.width));

  KpCertificate cert = kp_certificate(m, 1.0, rep.decay_b, m.pinned_region().size());
  if (cert.satisfied) {
    const double eb = std::exp(-rep.decay_b);
    rep.tail_bound = static_cast<double>(min_boundary) * cert.a *
                     std::pow(eb, static_cast<double>(w_max + 1)) / (1.0 - eb);
  } else {
    rep.tail_bound = kInf;
  }

  // Worst case over the boundary-relevant unpinned assignments.
  std::vector<Vertex> rel = view.relevant_unpinned(view.all_mask);
  std::vector<std::uint32_t> dims;
  for (Vertex v : rel) dims.push_back(g.dim(v));
  MixedRadix radix(dims);
  std::vector<int> x(g.n_vertices(), 0);
  std::vector<int> vals;
  rep.min_fac_weight = 0;
  for (std::size_t xi = 0; xi < radix.size(); ++xi) {
    radix.decode(xi, vals);
    for (std::size_t k = 0; k < rel.size(); ++k) x[rel[k]] = vals[k];
    {
      // Skip excluded x_AC sectors (zero reference weight, e.g. blocked
      // super-spin values whose slices a delta coupling forbids).
      std::vector<int> probe = x;
      for (Vertex v : view.b_sites) probe[v] = m.favored_value(v);
      if (!std::isfinite(m.total_energy(probe))) continue;
    }
    ExpansionReport er = truncated_log_expansion(m, t, x, w_max);
    FreeEnergySplit split = exact_free_energy_split(m, t, x);
    rep.max_abs_fac_truncated = std::max(rep.max_abs_fac_truncated, std::abs(er.f_ac_partial.back()));
    rep.max_abs_fac_exact = std::max(rep.max_abs_fac_exact, std::abs(split.f_ac));
    if (er.min_fac_weight != 0 && (rep.min_fac_weight == 0 || er.min_fac_weight < rep.min_fac_weight)) {
      rep.min_fac_weight = er.min_fac_weight;
    }
  }
  rep.floor_ok = rep.min_fac_weight == 0 || rep.min_fac_weight >= rep.width;
  // The exact value is held to the e^{-b d_AC} form. The truncated series
  // plus its KP tail certifies the provable e^{-b width} form (the minimal
  // connecting cluster has width = d_AC - 1 sites); near threshold the tail
  // can be too loose to certify at small w_max even though the bound holds.
  rep.bound_ok = rep.max_abs_fac_exact <= rep.bound_graph;
  rep.certified = rep.tail_bound != kInf &&
                  rep.max_abs_fac_truncated + rep.tail_bound <= rep.bound_width;
  return rep;
}

}  // namespace mklab
