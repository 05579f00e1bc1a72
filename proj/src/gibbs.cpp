#include "markovlab/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace mklab {

namespace {

double xlogx(double p) { return p <= kProbFloor ? 0.0 : p * std::log(p); }

}  // namespace

DiscreteDistribution::DiscreteDistribution(Region variables, std::vector<std::uint32_t> dims,
                                           std::vector<double> probs, bool normalize)
    : vars_(std::move(variables)), dims_(std::move(dims)), radix_(dims_), p_(std::move(probs)) {
  if (vars_.size() != dims_.size()) throw std::invalid_argument("distribution: dims/variables mismatch");
  if (p_.size() != radix_.size()) throw std::invalid_argument("distribution: table size mismatch");
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0)) throw std::invalid_argument("distribution: negative or NaN entry");
    sum += v;
  }
  if (normalize) {
    if (sum <= 0.0) throw std::invalid_argument("distribution: cannot normalize zero mass");
    for (double& v : p_) v /= sum;
  } else if (std::abs(sum - 1.0) > kProbTolerance) {
    throw std::invalid_argument("distribution: entries sum to " + std::to_string(sum));
  }
}

std::size_t DiscreteDistribution::var_position(Vertex v) const {
  const auto& vs = vars_.verts();
  auto it = std::lower_bound(vs.begin(), vs.end(), v);
  if (it == vs.end() || *it != v) throw std::invalid_argument("variable not in distribution");
  return static_cast<std::size_t>(it - vs.begin());
}

GibbsModel::GibbsModel(Hypergraph graph, double beta, std::vector<EnergyTerm> terms, bool allow_infinite)
    : graph_(std::move(graph)), beta_(beta), terms_(std::move(terms)) {
  if (terms_.size() != graph_.n_hyperedges()) {
    throw std::invalid_argument("gibbs model: need one energy table per hyperedge");
  }
  for (std::size_t a = 0; a < terms_.size(); ++a) {
    auto& t = terms_[a];
    std::sort(t.support.begin(), t.support.end());
    if (t.support != graph_.hyperedge(a)) {
      throw std::invalid_argument("gibbs model: term support does not match hyperedge");
    }
    std::size_t want = 1;
    for (Vertex v : t.support) want *= graph_.dim(v);
    if (t.table.size() != want) throw std::invalid_argument("gibbs model: table length != prod(dims)");
    for (double e : t.table) {
      if (std::isnan(e)) throw std::invalid_argument("gibbs model: NaN energy");
      if (!allow_infinite && !std::isfinite(e)) {
        throw std::invalid_argument("gibbs model: infinite energy in plain model");
      }
      if (e == -std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("gibbs model: -inf energy");
      }
    }
  }
}

double energy(const GibbsModel& m, std::span<const int> x) {
  if (x.size() != m.graph().n_vertices()) throw std::invalid_argument("energy: configuration length mismatch");
  double e = 0.0;
  for (const auto& t : m.terms()) {
    std::size_t idx = 0;
    for (Vertex v : t.support) idx = idx * m.graph().dim(v) + static_cast<std::size_t>(x[v]);
    e += t.table[idx];
  }
  return e;
}

DiscreteDistribution exact_distribution(const GibbsModel& m, int budget_bits) {
  const Hypergraph& g = m.graph();
  check_budget(g.state_bits(), budget_bits);
  MixedRadix radix(g.dims());
  const std::size_t total = radix.size();
  std::vector<double> w(total);
  parallel_chunks(total, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<int> x;
    for (std::size_t i = begin; i < end; ++i) {
      radix.decode(i, x);
      w[i] = std::exp(-m.beta() * energy(m, x));
    }
  });
  double z = parallel_sum(total, [&](std::size_t i) { return w[i]; });
  if (!(z > 0.0) || !std::isfinite(z)) throw std::runtime_error("exact_distribution: Z is not positive finite");
  for (double& v : w) v /= z;
  return DiscreteDistribution(Region::full(g.n_vertices()), g.dims(), std::move(w));
}

DiscreteDistribution marginal(const DiscreteDistribution& p, const Region& r) {
  if (!r.subset_of(p.variables())) throw std::invalid_argument("marginal: region not within variables");
  if (r == p.variables()) return p;
  std::vector<std::size_t> pos;
  std::vector<std::uint32_t> rdims;
  for (Vertex v : r) {
    pos.push_back(p.var_position(v));
    rdims.push_back(p.dims()[pos.back()]);
  }
  MixedRadix rrad(rdims);
  std::vector<double> out(rrad.size(), 0.0);
  const MixedRadix& full = p.radix();
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < pos.size(); ++k) idx = idx * rdims[k] + static_cast<std::size_t>(full.digit(i, pos[k]));
    out[idx] += p.prob(i);
  }
  return DiscreteDistribution(r, std::move(rdims), std::move(out), /*normalize=*/true);
}

DiscreteDistribution conditional(const DiscreteDistribution& p, const Region& cond,
                                 const std::vector<int>& values) {
  if (!cond.subset_of(p.variables())) throw std::invalid_argument("conditional: region not within variables");
  if (values.size() != cond.size()) throw std::invalid_argument("conditional: one value per conditioned vertex");
  Region rest = p.variables().subtract(cond);
  if (rest.empty()) throw std::invalid_argument("conditional: no free variables left");
  std::vector<std::size_t> cpos, rpos;
  std::vector<std::uint32_t> rdims;
  for (Vertex v : cond) cpos.push_back(p.var_position(v));
  for (Vertex v : rest) {
    rpos.push_back(p.var_position(v));
    rdims.push_back(p.dims()[rpos.back()]);
  }
  MixedRadix rrad(rdims);
  std::vector<double> out(rrad.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < cpos.size(); ++k) {
      if (p.radix().digit(i, cpos[k]) != values[k]) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    std::size_t idx = 0;
    for (std::size_t k = 0; k < rpos.size(); ++k) idx = idx * rdims[k] + static_cast<std::size_t>(p.radix().digit(i, rpos[k]));
    out[idx] += p.prob(i);
    mass += p.prob(i);
  }
  if (mass <= 0.0) throw std::invalid_argument("conditional: conditioning on a zero-probability event");
  for (double& v : out) v /= mass;
  return DiscreteDistribution(rest, std::move(rdims), std::move(out));
}

double shannon_entropy(const DiscreteDistribution& p) {
  double s = 0.0;
  for (double v : p.probs()) s -= xlogx(v);
  return s;
}

double mutual_information(const DiscreteDistribution& p, const Region& a, const Region& c) {
  if (!a.disjoint_from(c)) throw std::invalid_argument("mutual_information: regions overlap");
  DiscreteDistribution pac = marginal(p, a.unite(c));
  double sa = shannon_entropy(marginal(pac, a));
  double sc = shannon_entropy(marginal(pac, c));
  double sac = shannon_entropy(pac);
  return sa + sc - sac;
}

double cmi(const DiscreteDistribution& p, const Tripartition& t) {
  if (!t.a.disjoint_from(t.b) || !t.a.disjoint_from(t.c) || !t.b.disjoint_from(t.c)) {
    throw std::invalid_argument("cmi: regions overlap");
  }
  DiscreteDistribution pabc = marginal(p, t.a.unite(t.b).unite(t.c));
  double sab = shannon_entropy(marginal(pabc, t.a.unite(t.b)));
  double sbc = shannon_entropy(marginal(pabc, t.b.unite(t.c)));
  double sb = t.b.empty() ? 0.0 : shannon_entropy(marginal(pabc, t.b));
  double sabc = shannon_entropy(pabc);
  return sab + sbc - sb - sabc;
}

double cmi_by_decomposition(const DiscreteDistribution& p, const Tripartition& t) {
  DiscreteDistribution pabc = marginal(p, t.a.unite(t.b).unite(t.c));
  if (t.b.empty()) return mutual_information(pabc, t.a, t.c);
  DiscreteDistribution pb = marginal(pabc, t.b);
  std::vector<int> b;
  double acc = 0.0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb.prob(i) <= 0.0) continue;  // zero-weight branch
    pb.radix().decode(i, b);
    DiscreteDistribution cond = conditional(pabc, t.b, b);
    acc += pb.prob(i) * mutual_information(cond, t.a, t.c);
  }
  return acc;
}

double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.variables() != q.variables() || p.dims() != q.dims()) {
    throw std::invalid_argument("total_variation: distributions over different variables");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.prob(i) - q.prob(i));
  return 0.5 * s;
}

namespace {

// -s_i s_j with s = 1 - 2x on bits.
std::vector<double> ising_edge_table() { return {-1.0, 1.0, 1.0, -1.0}; }

GibbsModel ising_on(Hypergraph g, double beta) {
  std::vector<EnergyTerm> terms;
  terms.reserve(g.n_hyperedges());
  for (const auto& e : g.hyperedges()) terms.push_back({e, ising_edge_table()});
  return GibbsModel(std::move(g), beta, std::move(terms));
}

}  // namespace

GibbsModel ising_chain(std::size_t n, double beta, bool periodic) {
  return ising_on(periodic ? Hypergraph::cycle(n) : Hypergraph::path(n), beta);
}

GibbsModel ising_grid(std::size_t rows, std::size_t cols, double beta, bool periodic) {
  return ising_on(Hypergraph::grid(rows, cols, 2, periodic), beta);
}

GibbsModel classical_from_json(const std::string& text, double beta_override) {
  nlohmann::json j = nlohmann::json::parse(text);
  const std::size_t n = j.at("n").get<std::size_t>();
  const std::uint32_t q = j.at("q").get<std::uint32_t>();
  std::vector<std::vector<Vertex>> edges = j.at("hyperedges").get<std::vector<std::vector<Vertex>>>();
  Hypergraph g(n, q, edges);
  std::vector<EnergyTerm> terms;
  const auto& jt = j.at("terms");
  if (jt.size() != g.n_hyperedges()) throw config_error("model file: one term table per hyperedge required");
  for (std::size_t a = 0; a < g.n_hyperedges(); ++a) {
    terms.push_back({g.hyperedge(a), jt[a].get<std::vector<double>>()});
  }
  double beta = beta_override >= 0.0 ? beta_override : j.value("beta", 1.0);
  return GibbsModel(std::move(g), beta, std::move(terms));
}

}  // namespace mklab
