#include "markovlab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mklab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_stochastic(const std::vector<double>& t, std::size_t s, const char* who) {
  if (t.size() != s * s) throw std::invalid_argument(std::string(who) + ": matrix size mismatch");
  for (std::size_t in = 0; in < s; ++in) {
    double col = 0.0;
    for (std::size_t out = 0; out < s; ++out) {
      double v = t[out * s + in];
      if (!(v >= -kProbTolerance)) throw std::invalid_argument(std::string(who) + ": negative entry");
      col += v;
    }
    if (std::abs(col - 1.0) > kProbTolerance) {
      throw std::invalid_argument(std::string(who) + ": column does not sum to 1");
    }
  }
}

}  // namespace

std::pair<double, std::vector<double>> epsilon_decomposition(const std::vector<double>& matrix) {
  const std::size_t s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(matrix.size()))));
  check_stochastic(matrix, s, "epsilon_decomposition");
  double min_diag = 1.0;
  for (std::size_t i = 0; i < s; ++i) min_diag = std::min(min_diag, matrix[i * s + i]);
  double eps = 1.0 - min_diag;
  std::vector<double> residual(s * s, 0.0);
  if (eps <= 0.0) {
    eps = 0.0;
    for (std::size_t i = 0; i < s; ++i) residual[i * s + i] = 1.0;  // identity by convention
    return {eps, residual};
  }
  for (std::size_t in = 0; in < s; ++in) {
    double col = 0.0;
    for (std::size_t out = 0; out < s; ++out) {
      double v = matrix[out * s + in];
      if (out == in) v -= 1.0 - eps;
      v = std::max(0.0, v / eps);
      residual[out * s + in] = v;
      col += v;
    }
    // Dividing by a tiny eps amplifies roundoff; renormalize each column,
    // then verify the reconstruction T = (1-eps) I + eps N entrywise.
    for (std::size_t out = 0; out < s; ++out) residual[out * s + in] /= col;
  }
  check_stochastic(residual, s, "epsilon_decomposition residual");
  for (std::size_t out = 0; out < s; ++out) {
    for (std::size_t in = 0; in < s; ++in) {
      const double rebuilt = (out == in ? 1.0 - eps : 0.0) + eps * residual[out * s + in];
      if (std::abs(rebuilt - matrix[out * s + in]) > kProbTolerance) {
        throw std::invalid_argument("epsilon_decomposition: reconstruction drift");
      }
    }
  }
  return {eps, residual};
}

LocalChannel::LocalChannel(Region support, std::vector<std::uint32_t> dims, std::vector<double> matrix)
    : support_(std::move(support)), dims_(std::move(dims)), matrix_(std::move(matrix)) {
  if (support_.size() != dims_.size()) throw std::invalid_argument("channel: dims/support mismatch");
  states_ = 1;
  for (std::uint32_t d : dims_) states_ *= d;
  check_stochastic(matrix_, states_, "channel");
  auto [eps, res] = epsilon_decomposition(matrix_);
  epsilon_ = eps;
  residual_ = std::move(res);
}

LocalChannel bit_flip_channel(Vertex site, double eps) {
  return LocalChannel(Region{site}, {2}, {1.0 - eps, eps, eps, 1.0 - eps});
}

LocalChannel uniform_replacement_channel(Vertex site, std::uint32_t q, double eps) {
  std::vector<double> t(static_cast<std::size_t>(q) * q, eps / q);
  for (std::uint32_t i = 0; i < q; ++i) t[static_cast<std::size_t>(i) * q + i] += 1.0 - eps;
  std::vector<Vertex> vs{site};
  return LocalChannel(Region(vs), {q}, std::move(t));
}

LocalChannel identity_channel(Vertex site, std::uint32_t q) {
  std::vector<double> t(static_cast<std::size_t>(q) * q, 0.0);
  for (std::uint32_t i = 0; i < q; ++i) t[static_cast<std::size_t>(i) * q + i] = 1.0;
  return LocalChannel(Region{site}, {q}, std::move(t));
}

LayeredProcess::LayeredProcess(const Hypergraph& g, std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (const auto& layer : layers_) {
    for (std::size_t i = 0; i < layer.channels.size(); ++i) {
      const Region& si = layer.channels[i].support();
      if (si.empty() || si.verts().back() >= g.n_vertices()) {
        throw std::invalid_argument("layered process: channel support out of range");
      }
      for (std::size_t k = 0; k < si.size(); ++k) {
        if (layer.channels[i].dims()[k] != g.dim(si[k])) {
          throw std::invalid_argument("layered process: channel dims do not match graph");
        }
      }
      bool inside_edge = false;
      for (const auto& e : g.hyperedges()) {
        if (si.subset_of(Region(e))) {
          inside_edge = true;
          break;
        }
      }
      if (!inside_edge && si.size() > 1) {
        throw std::invalid_argument("layered process: channel support is not contained in a hyperedge");
      }
      for (std::size_t j = 0; j < i; ++j) {
        const Region& sj = layer.channels[j].support();
        if (!si.disjoint_from(sj)) throw std::invalid_argument("layered process: overlapping supports in a layer");
        for (const auto& e : g.hyperedges()) {
          Region er(e);
          if (!er.intersect(si).empty() && !er.intersect(sj).empty()) {
            throw std::invalid_argument("layered process: supports in a layer share a hyperedge");
          }
        }
      }
    }
  }
}

double LayeredProcess::max_epsilon() const {
  double m = 0.0;
  for (const auto& layer : layers_) {
    for (const auto& ch : layer.channels) m = std::max(m, ch.epsilon());
  }
  return m;
}

DiscreteDistribution apply_channel(const DiscreteDistribution& p, const LocalChannel& ch) {
  if (!ch.support().subset_of(p.variables())) {
    throw std::invalid_argument("apply_channel: support outside distribution variables");
  }
  const std::size_t k = ch.support().size();
  std::vector<std::size_t> pos(k), stride(k);
  for (std::size_t i = 0; i < k; ++i) {
    pos[i] = p.var_position(ch.support()[i]);
    if (p.dims()[pos[i]] != ch.dims()[i]) throw std::invalid_argument("apply_channel: dims mismatch");
    stride[i] = p.radix().stride(pos[i]);
  }
  const std::size_t s = ch.states();
  std::vector<double> out(p.size(), 0.0);
  std::vector<int> digits(k);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = p.prob(i);
    if (w == 0.0) continue;
    std::size_t in_idx = 0;
    for (std::size_t d = 0; d < k; ++d) {
      digits[d] = p.radix().digit(i, pos[d]);
      in_idx = in_idx * ch.dims()[d] + static_cast<std::size_t>(digits[d]);
    }
    // Base index with the support digits zeroed out.
    std::size_t base = i;
    for (std::size_t d = 0; d < k; ++d) base -= static_cast<std::size_t>(digits[d]) * stride[d];
    for (std::size_t out_idx = 0; out_idx < s; ++out_idx) {
      double t = ch.entry(out_idx, in_idx);
      if (t == 0.0) continue;
      std::size_t j = base, rem = out_idx;
      for (std::size_t d = k; d-- > 0;) {
        j += (rem % ch.dims()[d]) * stride[d];
        rem /= ch.dims()[d];
      }
      out[j] += t * w;
    }
  }
  return DiscreteDistribution(p.variables(), p.dims(), std::move(out), /*normalize=*/true);
}

DiscreteDistribution apply_process(const DiscreteDistribution& p, const LayeredProcess& proc) {
  DiscreteDistribution cur = p;
  for (const auto& layer : proc.layers()) {
    for (const auto& ch : layer.channels) cur = apply_channel(cur, ch);
  }
  return cur;
}

DiscreteDistribution apply_process(const DiscreteDistribution& p, const SiteProduct& proc) {
  DiscreteDistribution cur = p;
  for (const auto& ch : proc.channels) {
    if (ch.support().size() != 1) throw std::invalid_argument("site product: channels must be single-site");
    cur = apply_channel(cur, ch);
  }
  return cur;
}

DiscreteDistribution apply_process(const DiscreteDistribution& p, const NoiseProcess& proc) {
  return std::visit([&](const auto& v) { return apply_process(p, v); }, proc);
}

double noise_max_epsilon(const NoiseProcess& proc) {
  if (const auto* sp = std::get_if<SiteProduct>(&proc)) {
    double m = 0.0;
    for (const auto& ch : sp->channels) m = std::max(m, ch.epsilon());
    return m;
  }
  return std::get<LayeredProcess>(proc).max_epsilon();
}

std::size_t noise_depth(const NoiseProcess& proc) {
  if (std::holds_alternative<SiteProduct>(proc)) return 1;
  return std::get<LayeredProcess>(proc).depth();
}

PinnedModel::PinnedModel(GibbsModel base, Region pinned, std::vector<PinningTerm> pins,
                         std::vector<double> base_shifts)
    : base_(std::move(base)), pinned_(std::move(pinned)), pins_(std::move(pins)),
      base_shifts_(std::move(base_shifts)) {
  const Hypergraph& g = base_.graph();
  favored_.assign(g.n_vertices(), 0);
  h_max_ = 0.0;
  for (const auto& t : base_.terms()) {
    for (double e : t.table) {
      if (std::isfinite(e)) {
        if (e < -1e-9) throw std::invalid_argument("pinned model: base energy below zero after shift");
        h_max_ = std::max(h_max_, e);
      }
    }
  }
  p_min_ = kInf;
  for (auto& pin : pins_) {
    std::sort(pin.support.begin(), pin.support.end());
    pin.fully_pinned = Region(pin.support).subset_of(pinned_);
    std::vector<std::uint32_t> dims;
    for (Vertex v : pin.support) dims.push_back(g.dim(v));
    MixedRadix radix(dims);
    if (pin.table.size() != radix.size() || pin.favored.size() != pin.support.size()) {
      throw std::invalid_argument("pinned model: pinning table shape mismatch");
    }
    const std::size_t fav = radix.index(pin.favored);
    if (std::abs(pin.table[fav]) > 1e-9) {
      throw std::invalid_argument("pinned model: favored pinning energy must be zero");
    }
    pin.table[fav] = 0.0;
    for (std::size_t i = 0; i < pin.support.size(); ++i) {
      Vertex v = pin.support[i];
      if (pinned_.contains(v)) favored_[v] = pin.favored[i];
    }
    if (pin.fully_pinned) {
      for (std::size_t c = 0; c < pin.table.size(); ++c) {
        if (c == fav) continue;
        p_min_ = std::min(p_min_, pin.table[c]);
      }
    }
  }
  for (Vertex v : pinned_) {
    bool covered = false;
    for (const auto& pin : pins_) {
      if (std::binary_search(pin.support.begin(), pin.support.end(), v)) {
        covered = true;
        break;
      }
    }
    if (!covered) throw std::invalid_argument("pinned model: pinned site without a pinning term: site " + std::to_string(v));
  }
}

int PinnedModel::favored_value(Vertex v) const { return favored_[v]; }

double PinnedModel::total_energy(std::span<const int> x) const {
  double e = energy(base_, x);
  const Hypergraph& g = base_.graph();
  for (const auto& pin : pins_) {
    std::size_t idx = 0;
    for (Vertex v : pin.support) idx = idx * g.dim(v) + static_cast<std::size_t>(x[v]);
    e += pin.table[idx];
  }
  return e;
}

DiscreteDistribution PinnedModel::exact_distribution(int budget_bits) const {
  const Hypergraph& g = base_.graph();
  check_budget(g.state_bits(), budget_bits);
  MixedRadix radix(g.dims());
  std::vector<double> w(radix.size());
  parallel_chunks(radix.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<int> x;
    for (std::size_t i = begin; i < end; ++i) {
      radix.decode(i, x);
      w[i] = std::exp(-total_energy(x));
    }
  });
  double z = 0.0;
  for (double v : w) z += v;
  if (!(z > 0.0)) {
    throw std::runtime_error("pinned model: observation has zero likelihood under every configuration");
  }
  for (double& v : w) v /= z;
  return DiscreteDistribution(Region::full(g.n_vertices()), g.dims(), std::move(w));
}

namespace {

// Shifts each beta-scaled table by its minimum so h >= 0.
std::pair<std::vector<EnergyTerm>, std::vector<double>> shifted_base_terms(const GibbsModel& m) {
  std::vector<EnergyTerm> terms;
  std::vector<double> shifts;
  for (const auto& t : m.terms()) {
    EnergyTerm s{t.support, t.table};
    double lo = kInf;
    for (double& e : s.table) {
      e *= m.beta();
      if (std::isfinite(e)) lo = std::min(lo, e);
    }
    if (!std::isfinite(lo)) lo = 0.0;
    for (double& e : s.table) e -= lo;
    terms.push_back(std::move(s));
    shifts.push_back(lo);
  }
  return {std::move(terms), std::move(shifts)};
}

}  // namespace

PinnedModel pin_single_site(const GibbsModel& m, const Region& b,
                            const std::vector<LocalChannel>& channels,
                            const std::vector<int>& b_prime) {
  const Hypergraph& g = m.graph();
  if (channels.size() != b.size() || b_prime.size() != b.size()) {
    throw std::invalid_argument("pin_single_site: need one channel and one observation per B site");
  }
  auto [terms, shifts] = shifted_base_terms(m);
  GibbsModel base(g, 1.0, std::move(terms), /*allow_infinite=*/true);

  std::vector<PinningTerm> pins;
  for (std::size_t k = 0; k < b.size(); ++k) {
    const Vertex site = b[k];
    const LocalChannel& ch = channels[k];
    if (ch.support().size() != 1 || ch.support()[0] != site) {
      throw std::invalid_argument("pin_single_site: channel support must be the pinned site");
    }
    const std::uint32_t q = g.dim(site);
    if (ch.dims()[0] != q) throw std::invalid_argument("pin_single_site: channel dims mismatch");
    const int obs = b_prime[k];
    if (obs < 0 || static_cast<std::uint32_t>(obs) >= q) {
      throw std::invalid_argument("pin_single_site: observation out of range");
    }
    const double fav_prob = ch.entry(static_cast<std::size_t>(obs), static_cast<std::size_t>(obs));
    if (fav_prob <= 0.0) {
      throw std::invalid_argument("pin_single_site: channel excludes the favored configuration");
    }
    PinningTerm pin;
    pin.support = {site};
    pin.favored = {obs};
    pin.shift = -std::log(fav_prob);
    pin.table.resize(q);
    for (std::uint32_t x = 0; x < q; ++x) {
      double t = ch.entry(static_cast<std::size_t>(obs), x);
      pin.table[x] = t <= 0.0 ? kInf : -std::log(t) - pin.shift;
    }
    pin.table[static_cast<std::size_t>(obs)] = 0.0;
    pins.push_back(std::move(pin));
  }
  return PinnedModel(std::move(base), b, std::move(pins), std::move(shifts));
}

SpacetimeModel spacetime_model(const GibbsModel& m, const LayeredProcess& proc, const Region& b,
                               const std::vector<int>& b_final, int budget_bits) {
  const Hypergraph& g = m.graph();
  const std::size_t d = proc.depth();
  if (d < 1) throw std::invalid_argument("spacetime_model: depth must be >= 1");
  if (b_final.size() != b.size()) throw std::invalid_argument("spacetime_model: one value per B site");

  SpacetimeModel st;
  st.base_graph = g;
  st.depth = d;
  st.b = b;
  st.b_final = b_final;
  st.max_epsilon = proc.max_epsilon();

  const std::size_t n = g.n_vertices();
  st.var_of.assign(n, std::vector<int>(d + 1, -1));
  std::vector<std::uint32_t> dims;
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t t_max = b.contains(static_cast<Vertex>(v)) ? d - 1 : d;
    for (std::size_t t = 0; t <= t_max; ++t) {
      st.var_of[v][t] = static_cast<int>(dims.size());
      st.site_time.emplace_back(static_cast<Vertex>(v), static_cast<int>(t));
      dims.push_back(g.dim(static_cast<Vertex>(v)));
    }
  }
  auto final_value = [&](Vertex v) {
    std::size_t k = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), v) - b.begin());
    return b_final[k];
  };

  std::vector<std::vector<Vertex>> edges;
  std::vector<EnergyTerm> terms;

  // Time-0 slice carries the original interactions, with beta folded in.
  for (std::size_t a = 0; a < g.n_hyperedges(); ++a) {
    std::vector<Vertex> sup;
    for (Vertex v : g.hyperedge(a)) sup.push_back(static_cast<Vertex>(st.var_of[v][0]));
    EnergyTerm term{sup, m.terms()[a].table};
    for (double& e : term.table) e *= m.beta();
    edges.push_back(sup);
    terms.push_back(std::move(term));
    st.term_transitions.push_back({});
  }

  // One coupling per (channel, layer), conditioned components substituted.
  struct VarRole {
    Vertex var;
    std::size_t site_pos;  // position within the channel support
    bool is_out;
  };
  for (std::size_t layer = 0; layer < d; ++layer) {
    const std::size_t t = layer + 1;
    std::vector<char> acted(n, 0);
    for (const auto& ch : proc.layers()[layer].channels) {
      const auto& sup = ch.support();
      for (Vertex v : sup) acted[v] = 1;
      std::vector<VarRole> roles;
      std::vector<int> fixed_out(sup.size(), -1);
      for (std::size_t k = 0; k < sup.size(); ++k) {
        roles.push_back({static_cast<Vertex>(st.var_of[sup[k]][t - 1]), k, false});
        int vo = st.var_of[sup[k]][t];
        if (vo >= 0) roles.push_back({static_cast<Vertex>(vo), k, true});
        else fixed_out[k] = final_value(sup[k]);
      }
      std::sort(roles.begin(), roles.end(), [](const VarRole& a, const VarRole& b) { return a.var < b.var; });
      std::vector<Vertex> tsup;
      std::vector<std::uint32_t> tdims;
      for (const auto& r : roles) {
        tsup.push_back(r.var);
        tdims.push_back(dims[r.var]);
      }
      MixedRadix radix(tdims);
      std::vector<double> table(radix.size());
      std::vector<int> xs;
      std::vector<int> xin(sup.size()), xout(sup.size());
      for (std::size_t i = 0; i < radix.size(); ++i) {
        radix.decode(i, xs);
        for (std::size_t k = 0; k < sup.size(); ++k) xout[k] = fixed_out[k];
        for (std::size_t r = 0; r < roles.size(); ++r) {
          if (roles[r].is_out) xout[roles[r].site_pos] = xs[r];
          else xin[roles[r].site_pos] = xs[r];
        }
        std::size_t in_idx = 0, out_idx = 0;
        for (std::size_t k = 0; k < sup.size(); ++k) {
          in_idx = in_idx * ch.dims()[k] + static_cast<std::size_t>(xin[k]);
          out_idx = out_idx * ch.dims()[k] + static_cast<std::size_t>(xout[k]);
        }
        double p = ch.entry(out_idx, in_idx);
        table[i] = p <= 0.0 ? kInf : -std::log(p);
      }
      edges.push_back(tsup);
      terms.push_back({tsup, std::move(table)});
      std::vector<std::pair<Vertex, int>> trans;
      for (Vertex v : sup) trans.emplace_back(v, static_cast<int>(t));
      st.term_transitions.push_back(std::move(trans));
    }
    // Identity propagation for sites the layer does not touch.
    for (std::size_t v = 0; v < n; ++v) {
      if (acted[v]) continue;
      const std::uint32_t q = g.dim(static_cast<Vertex>(v));
      int vin = st.var_of[v][t - 1];
      int vout = st.var_of[v][t];
      if (vout >= 0) {
        std::vector<Vertex> sup{static_cast<Vertex>(std::min(vin, vout)), static_cast<Vertex>(std::max(vin, vout))};
        std::vector<double> table(static_cast<std::size_t>(q) * q, kInf);
        for (std::uint32_t x = 0; x < q; ++x) table[static_cast<std::size_t>(x) * q + x] = 0.0;
        edges.push_back(sup);
        terms.push_back({sup, std::move(table)});
        st.term_transitions.push_back({{static_cast<Vertex>(v), static_cast<int>(t)}});
      } else {
        const int fv = final_value(static_cast<Vertex>(v));
        std::vector<Vertex> sup{static_cast<Vertex>(vin)};
        std::vector<double> table(q, kInf);
        table[static_cast<std::size_t>(fv)] = 0.0;
        edges.push_back(sup);
        terms.push_back({sup, std::move(table)});
        st.term_transitions.push_back({{static_cast<Vertex>(v), static_cast<int>(t)}});
      }
    }
  }

  Hypergraph stg(dims, edges);
  check_budget(stg.state_bits(), budget_bits);
  st.model = GibbsModel(std::move(stg), 1.0, std::move(terms), /*allow_infinite=*/true);
  return st;
}

BlockedModel block_spins(const SpacetimeModel& st) {
  const Hypergraph& g = st.base_graph;
  const std::size_t n = g.n_vertices();

  BlockedModel out;
  out.superspin_of.resize(n);
  out.slice_vars.assign(n, {});
  out.value_map.assign(n, {});
  std::vector<std::uint32_t> super_dims(n);
  std::vector<MixedRadix> slice_radix(n);
  std::vector<std::size_t> site_of_var(st.site_time.size());
  for (std::size_t v = 0; v < n; ++v) {
    out.superspin_of[v] = v;
    for (std::size_t t = 0; t < st.var_of[v].size(); ++t) {
      int var = st.var_of[v][t];
      if (var >= 0) {
        site_of_var[static_cast<std::size_t>(var)] = v;
        out.slice_vars[v].push_back(var);
      }
    }
    slice_radix[v] = MixedRadix(std::vector<std::uint32_t>(out.slice_vars[v].size(), g.dim(static_cast<Vertex>(v))));
    super_dims[v] = static_cast<std::uint32_t>(slice_radix[v].size());
  }

  // B super-spins: swap the favored all-aligned value with 0.
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<int> perm(super_dims[v]);
    for (std::size_t s = 0; s < perm.size(); ++s) perm[s] = static_cast<int>(s);
    if (st.b.contains(static_cast<Vertex>(v))) {
      std::size_t k = static_cast<std::size_t>(std::lower_bound(st.b.begin(), st.b.end(), static_cast<Vertex>(v)) - st.b.begin());
      std::vector<int> fav(out.slice_vars[v].size(), st.b_final[k]);
      std::size_t fidx = slice_radix[v].index(fav);
      std::swap(perm[0], perm[fidx]);
    }
    out.value_map[v] = std::move(perm);  // blocked value -> slice-config index
  }

  // Group spacetime terms by blocked support; deltas fold into the group of
  // the first channel covering their site, spectator sites keep their own.
  struct Group {
    std::vector<Vertex> sites;
    std::vector<std::size_t> parts;  // spacetime term indices
    bool from_base = false;
  };
  std::map<std::vector<Vertex>, std::size_t> group_of;
  std::vector<Group> groups;
  const auto& terms = st.model.terms();
  const std::size_t n_base = g.n_hyperedges();

  auto term_sites = [&](const EnergyTerm& t) {
    std::vector<Vertex> sites;
    for (Vertex var : t.support) sites.push_back(static_cast<Vertex>(site_of_var[var]));
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
    return sites;
  };

  // Base groups keep one group per original hyperedge index (duplicates of
  // the same support stay separate, matching the base term list).
  for (std::size_t a = 0; a < n_base; ++a) {
    Group grp;
    grp.sites = term_sites(terms[a]);
    grp.parts = {a};
    grp.from_base = true;
    groups.push_back(std::move(grp));
  }
  std::vector<std::size_t> site_noise_group(n, SIZE_MAX);
  std::vector<std::size_t> pending_deltas;
  for (std::size_t a = n_base; a < terms.size(); ++a) {
    auto sites = term_sites(terms[a]);
    if (sites.size() == 1) {
      // Single-site coupling: an identity-propagation delta or a single-site
      // channel step; both attach to the site's group below.
      pending_deltas.push_back(a);
      continue;
    }
    auto it = group_of.find(sites);
    std::size_t gi;
    if (it == group_of.end()) {
      gi = groups.size();
      group_of[sites] = gi;
      groups.push_back({sites, {}, false});
    } else {
      gi = it->second;
    }
    groups[gi].parts.push_back(a);
    for (Vertex v : sites) {
      if (site_noise_group[v] == SIZE_MAX) site_noise_group[v] = gi;
    }
  }
  for (std::size_t a : pending_deltas) {
    Vertex v = static_cast<Vertex>(site_of_var[terms[a].support[0]]);
    std::size_t gi = site_noise_group[v];
    if (gi == SIZE_MAX) {
      std::vector<Vertex> sites{v};
      auto it = group_of.find(sites);
      if (it == group_of.end()) {
        gi = groups.size();
        group_of[sites] = gi;
        groups.push_back({sites, {}, false});
        site_noise_group[v] = gi;
      } else {
        gi = it->second;
      }
    }
    groups[gi].parts.push_back(a);
  }

  // Fully-in-B noise groups that share a site carry split pieces of one
  // site's temporal pinning (e.g. brickwork layers overlapping inside B);
  // merge them so the pinning normal form sees the whole chain. The parts
  // keep their original supports, so factorization across graph-disconnected
  // splits is unaffected.
  {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = n_base; i < groups.size() && !changed; ++i) {
        if (groups[i].parts.empty() || !Region(groups[i].sites).subset_of(st.b)) continue;
        for (std::size_t j = i + 1; j < groups.size() && !changed; ++j) {
          if (groups[j].parts.empty() || !Region(groups[j].sites).subset_of(st.b)) continue;
          if (Region(groups[i].sites).disjoint_from(Region(groups[j].sites))) continue;
          Region merged = Region(groups[i].sites).unite(Region(groups[j].sites));
          groups[i].sites = merged.verts();
          groups[i].parts.insert(groups[i].parts.end(), groups[j].parts.begin(), groups[j].parts.end());
          groups[j].parts.clear();
          changed = true;
        }
      }
    }
    std::size_t keep = n_base;
    for (std::size_t i = n_base; i < groups.size(); ++i) {
      if (groups[i].parts.empty()) continue;
      if (keep != i) groups[keep] = std::move(groups[i]);
      ++keep;
    }
    groups.resize(keep);
  }

  // Evaluate each group as a blocked table.
  std::vector<std::vector<Vertex>> edges;
  std::vector<EnergyTerm> base_terms;
  std::vector<double> base_shifts;
  std::vector<PinningTerm> pins;
  std::vector<int> spacetime_config(st.site_time.size());
  const double eps = st.max_epsilon;

  for (const auto& grp : groups) {
    std::vector<std::uint32_t> gdims;
    for (Vertex v : grp.sites) gdims.push_back(super_dims[v]);
    MixedRadix radix(gdims);
    std::vector<double> table(radix.size(), 0.0);
    std::vector<char> covered_aligned(radix.size(), 1);
    // Transitions penalized by this group's own parts.
    std::vector<std::pair<Vertex, int>> transitions;
    for (std::size_t a : grp.parts) {
      for (const auto& tr : st.term_transitions[a]) transitions.push_back(tr);
    }
    std::sort(transitions.begin(), transitions.end());
    transitions.erase(std::unique(transitions.begin(), transitions.end()), transitions.end());

    std::vector<int> xs, slice;
    auto slice_value = [&](Vertex v, int t) {
      if (st.var_of[v][static_cast<std::size_t>(t)] >= 0) {
        return spacetime_config[static_cast<std::size_t>(st.var_of[v][static_cast<std::size_t>(t)])];
      }
      std::size_t k = static_cast<std::size_t>(std::lower_bound(st.b.begin(), st.b.end(), v) - st.b.begin());
      return st.b_final[k];
    };
    for (std::size_t i = 0; i < radix.size(); ++i) {
      radix.decode(i, xs);
      for (std::size_t k = 0; k < grp.sites.size(); ++k) {
        Vertex v = grp.sites[k];
        std::size_t sval = static_cast<std::size_t>(out.value_map[v][static_cast<std::size_t>(xs[k])]);
        slice_radix[v].decode(sval, slice);
        for (std::size_t s = 0; s < out.slice_vars[v].size(); ++s) {
          spacetime_config[static_cast<std::size_t>(out.slice_vars[v][s])] = slice[s];
        }
      }
      double e = 0.0;
      for (std::size_t a : grp.parts) {
        std::size_t idx = 0;
        for (Vertex var : terms[a].support) {
          idx = idx * st.model.graph().dim(var) + static_cast<std::size_t>(spacetime_config[var]);
        }
        e += terms[a].table[idx];
      }
      table[i] = e;
      for (const auto& [v, t] : transitions) {
        if (slice_value(v, t - 1) != slice_value(v, t)) {
          covered_aligned[i] = 0;
          break;
        }
      }
    }

    const bool fully_b = Region(grp.sites).subset_of(st.b);
    if (!grp.from_base && fully_b) {
      PinningTerm pin;
      pin.support = grp.sites;
      pin.favored.assign(grp.sites.size(), 0);
      pin.shift = table[0];  // favored configuration maps to joint index 0
      if (!std::isfinite(pin.shift)) {
        throw std::runtime_error("block_spins: favored configuration has zero likelihood");
      }
      BlockedGapRow row;
      row.support = grp.sites;
      row.favored_cost = 0.0;
      row.excited_min = kInf;
      for (std::size_t i = 0; i < table.size(); ++i) {
        if (covered_aligned[i]) row.favored_cost = std::max(row.favored_cost, table[i]);
        else row.excited_min = std::min(row.excited_min, table[i]);
      }
      row.favored_bound = eps < 1.0 ? -static_cast<double>(st.depth) * std::log1p(-eps) : kInf;
      row.excited_bound = eps > 0.0 ? -std::log(eps) : kInf;
      row.ok = row.favored_cost <= row.favored_bound + 1e-12 &&
               (row.excited_min >= row.excited_bound - 1e-12 || row.excited_min == kInf);
      out.gap_rows.push_back(row);
      for (double& e : table) e -= pin.shift;
      table[0] = 0.0;
      pin.table = std::move(table);
      pins.push_back(std::move(pin));
    } else {
      double lo = kInf;
      for (double e : table) {
        if (std::isfinite(e)) lo = std::min(lo, e);
      }
      if (!std::isfinite(lo)) lo = 0.0;
      for (double& e : table) e -= lo;
      edges.push_back(grp.sites);
      base_terms.push_back({grp.sites, std::move(table)});
      base_shifts.push_back(lo);
    }
  }

  Hypergraph blocked_graph(super_dims, edges);
  GibbsModel base(std::move(blocked_graph), 1.0, std::move(base_terms), /*allow_infinite=*/true);
  out.pinned = PinnedModel(std::move(base), st.b, std::move(pins), std::move(base_shifts));
  return out;
}

}  // namespace mklab
