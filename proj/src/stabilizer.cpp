#include "markovlab/stabilizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace mklab {

namespace {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;

bool is_prime(std::uint32_t q) {
  if (q < 2) return false;
  for (std::uint32_t d = 2; d * d <= q; ++d) {
    if (q % d == 0) return false;
  }
  return true;
}

int mod_inverse(int a, int q) {
  long long base = ((a % q) + q) % q, result = 1;
  int e = q - 2;
  while (e > 0) {
    if (e & 1) result = result * base % q;
    base = base * base % q;
    e >>= 1;
  }
  return static_cast<int>(result);
}

int positive_mod(int a, int m) { return ((a % m) + m) % m; }

}  // namespace

PauliOperator::PauliOperator(std::size_t n, std::uint32_t q) : q_(q), x_(n, 0), z_(n, 0), phase_(0) {
  if (!is_prime(q)) throw std::invalid_argument("pauli: q must be prime");
}

PauliOperator PauliOperator::single(std::size_t n, std::uint32_t q, Vertex site, char letter, int power) {
  PauliOperator p(n, q);
  if (site >= n) throw std::invalid_argument("pauli: site out of range");
  const int k = positive_mod(power, static_cast<int>(q));
  switch (letter) {
    case 'I':
      break;
    case 'X':
      p.x_[site] = k;
      break;
    case 'Z':
      p.z_[site] = k;
      break;
    case 'Y': {
      if (q != 2) throw std::invalid_argument("pauli: Y is only defined for q = 2");
      if (k == 1) {
        p.x_[site] = 1;
        p.z_[site] = 1;
        p.phase_ = 1;  // Y = i X Z
      }
      break;
    }
    default:
      throw std::invalid_argument(std::string("pauli: unknown letter '") + letter + "'");
  }
  return p;
}

PauliOperator PauliOperator::parse(const std::string& text, std::size_t n, std::uint32_t q) {
  PauliOperator acc(n, q);
  std::istringstream in(text);
  std::string tok;
  bool first = true;
  while (in >> tok) {
    if (first && (tok == "-" || tok == "+")) {
      if (tok == "-") acc.phase_ = static_cast<int>(q);  // unit^q = -1
      first = false;
      continue;
    }
    first = false;
    auto colon = tok.find(':');
    if (colon == std::string::npos) throw config_error("pauli term entry must be site:letter[^power]: " + tok);
    std::size_t site = std::stoul(tok.substr(0, colon));
    std::string rest = tok.substr(colon + 1);
    int power = 1;
    auto hat = rest.find('^');
    if (hat != std::string::npos) {
      power = std::stoi(rest.substr(hat + 1));
      rest = rest.substr(0, hat);
    }
    if (rest.size() != 1) throw config_error("pauli letter must be a single character: " + tok);
    acc = acc.times(single(n, q, static_cast<Vertex>(site), rest[0], power));
  }
  return acc;
}

Region PauliOperator::support() const {
  std::vector<Vertex> vs;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (x_[i] != 0 || z_[i] != 0) vs.push_back(static_cast<Vertex>(i));
  }
  return Region(std::move(vs));
}

bool PauliOperator::is_identity() const { return is_phase_identity() && phase_ == 0; }

bool PauliOperator::is_phase_identity() const {
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (x_[i] != 0 || z_[i] != 0) return false;
  }
  return true;
}

PauliOperator PauliOperator::times(const PauliOperator& o) const {
  if (o.q_ != q_ || o.x_.size() != x_.size()) throw std::invalid_argument("pauli: mismatched operands");
  PauliOperator out(x_.size(), q_);
  const int q = static_cast<int>(q_);
  int cross = 0;  // omega^{z . x'} from commuting Z past X'
  for (std::size_t i = 0; i < x_.size(); ++i) {
    cross = positive_mod(cross + z_[i] * o.x_[i], q);
    out.x_[i] = positive_mod(x_[i] + o.x_[i], q);
    out.z_[i] = positive_mod(z_[i] + o.z_[i], q);
  }
  out.phase_ = positive_mod(phase_ + o.phase_ + 2 * cross, 2 * q);
  return out;
}

PauliOperator PauliOperator::power(int k) const {
  PauliOperator out(x_.size(), q_);
  PauliOperator base = *this;
  int e = k;
  if (e < 0) {
    base = dagger();
    e = -e;
  }
  for (int i = 0; i < e; ++i) out = out.times(base);
  return out;
}

PauliOperator PauliOperator::dagger() const {
  PauliOperator out(x_.size(), q_);
  const int q = static_cast<int>(q_);
  int cross = 0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    cross = positive_mod(cross + z_[i] * x_[i], q);
    out.x_[i] = positive_mod(-x_[i], q);
    out.z_[i] = positive_mod(-z_[i], q);
  }
  out.phase_ = positive_mod(-phase_ + 2 * cross, 2 * q);
  return out;
}

bool PauliOperator::commutes_with(const PauliOperator& o) const {
  long long sym = 0;
  for (std::size_t i = 0; i < x_.size(); ++i) sym += x_[i] * o.z_[i] - z_[i] * o.x_[i];
  return positive_mod(static_cast<int>(sym % static_cast<long long>(q_)), static_cast<int>(q_)) == 0;
}

bool PauliOperator::is_hermitian() const {
  PauliOperator d = dagger();
  return d.x_ == x_ && d.z_ == z_ && d.phase_ == phase_;
}

namespace {

// One-entry-per-column form of a generalized Pauli: column j maps to
// (row[j], phase[j]).
struct SparsePauli {
  std::vector<std::size_t> row;
  std::vector<Complex> phase;

  std::size_t dim() const { return row.size(); }

  static SparsePauli identity(std::size_t dim) {
    SparsePauli s;
    s.row.resize(dim);
    s.phase.assign(dim, Complex(1, 0));
    std::iota(s.row.begin(), s.row.end(), 0);
    return s;
  }

  // this * other (other applied first).
  SparsePauli times(const SparsePauli& other) const {
    SparsePauli out;
    out.row.resize(dim());
    out.phase.resize(dim());
    for (std::size_t j = 0; j < dim(); ++j) {
      out.row[j] = row[other.row[j]];
      out.phase[j] = phase[other.row[j]] * other.phase[j];
    }
    return out;
  }

  Complex trace() const {
    Complex t(0, 0);
    for (std::size_t j = 0; j < dim(); ++j) {
      if (row[j] == j) t += phase[j];
    }
    return t;
  }

  Complex trace_with(const Matrix& rho) const {  // Tr[P rho]
    Complex t(0, 0);
    for (std::size_t j = 0; j < dim(); ++j) {
      t += phase[j] * rho(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(row[j]));
    }
    return t;
  }

  void add_to(Matrix& acc, Complex coeff) const {
    for (std::size_t j = 0; j < dim(); ++j) {
      acc(static_cast<Eigen::Index>(row[j]), static_cast<Eigen::Index>(j)) += coeff * phase[j];
    }
  }
};

SparsePauli sparse_pauli(const PauliOperator& p) {
  const std::uint32_t q = p.q();
  const std::size_t n = p.n_sites();
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q, static_cast<double>(n))));
  const Complex unit = std::exp(Complex(0.0, M_PI / static_cast<double>(q)));
  const Complex omega = unit * unit;
  SparsePauli out;
  out.row.resize(dim);
  out.phase.resize(dim);
  const Complex global = std::pow(unit, static_cast<double>(p.phase_exp()));
  MixedRadix radix(std::vector<std::uint32_t>(n, q));
  std::vector<int> digits;
  for (std::size_t j = 0; j < dim; ++j) {
    radix.decode(j, digits);
    long long zdot = 0;
    std::size_t target = 0;
    for (std::size_t i = 0; i < n; ++i) {
      zdot += static_cast<long long>(p.z_exp(static_cast<Vertex>(i))) * digits[i];
      target = target * q + static_cast<std::size_t>((digits[i] + p.x_exp(static_cast<Vertex>(i))) % static_cast<int>(q));
    }
    out.row[j] = target;
    out.phase[j] = global * std::pow(omega, static_cast<double>(zdot % static_cast<long long>(q)));
  }
  return out;
}

// All products prod_g gens[g]^{k_g} for k in Z_q^G, indexed mixed-radix over
// the exponents (first generator slowest).
std::vector<SparsePauli> group_elements(const std::vector<PauliOperator>& gens, std::uint32_t q,
                                        std::size_t dim) {
  std::vector<SparsePauli> out;
  out.reserve(static_cast<std::size_t>(std::pow(q, static_cast<double>(gens.size()))));
  out.push_back(SparsePauli::identity(dim));
  for (const auto& g : gens) {
    SparsePauli gs = sparse_pauli(g);
    const std::size_t before = out.size();
    std::vector<SparsePauli> next;
    next.reserve(before * q);
    // Exponent of the new generator varies fastest.
    for (std::size_t b = 0; b < before; ++b) {
      SparsePauli cur = out[b];
      next.push_back(cur);
      for (std::uint32_t e = 1; e < q; ++e) {
        cur = cur.times(gs);
        next.push_back(cur);
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

Matrix PauliOperator::dense() const {
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q_, static_cast<double>(n_sites()))));
  Matrix out = Matrix::Zero(dim, dim);
  sparse_pauli(*this).add_to(out, Complex(1, 0));
  return out;
}

std::string PauliOperator::to_string() const {
  std::ostringstream os;
  os << "u^" << phase_ << ' ';
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (x_[i]) os << i << ":X^" << x_[i] << ' ';
    if (z_[i]) os << i << ":Z^" << z_[i] << ' ';
  }
  return os.str();
}

namespace {

// Row-reduced F_q basis over (x|z) vectors with generator-combination
// bookkeeping: every stored row satisfies row.vec = sum_g row.combo[g] * gen_g.
struct SymplecticBasis {
  int q = 2;
  std::size_t width = 0;
  struct Row {
    std::vector<int> vec;
    std::vector<int> combo;
    std::size_t pivot;
  };
  std::vector<Row> rows;

  static std::vector<int> vec_of(const PauliOperator& p) {
    std::vector<int> v;
    v.reserve(2 * p.n_sites());
    for (std::size_t i = 0; i < p.n_sites(); ++i) v.push_back(p.x_exp(static_cast<Vertex>(i)));
    for (std::size_t i = 0; i < p.n_sites(); ++i) v.push_back(p.z_exp(static_cast<Vertex>(i)));
    return v;
  }

  std::vector<int> reduce(std::vector<int>& v, std::size_t n_gens) const {
    std::vector<int> acc(n_gens, 0);
    for (const Row& r : rows) {
      if (v[r.pivot] == 0) continue;
      const int c = positive_mod(v[r.pivot] * mod_inverse(r.vec[r.pivot], q), q);
      for (std::size_t i = 0; i < width; ++i) v[i] = positive_mod(v[i] - c * r.vec[i], q);
      for (std::size_t g = 0; g < r.combo.size() && g < n_gens; ++g) {
        acc[g] = positive_mod(acc[g] + c * r.combo[g], q);
      }
    }
    return acc;
  }

  void add(std::vector<int> vec, std::vector<int> combo) {
    std::size_t pivot = width;
    for (std::size_t i = 0; i < width; ++i) {
      if (vec[i] != 0) {
        pivot = i;
        break;
      }
    }
    if (pivot == width) throw std::logic_error("symplectic basis: zero row");
    rows.push_back({std::move(vec), std::move(combo), pivot});
  }
};

SymplecticBasis basis_of(const std::vector<PauliOperator>& gens, std::uint32_t q, std::size_t n) {
  SymplecticBasis basis{static_cast<int>(q), 2 * n, {}};
  for (std::size_t g = 0; g < gens.size(); ++g) {
    std::vector<int> v = SymplecticBasis::vec_of(gens[g]);
    std::vector<int> acc = basis.reduce(v, gens.size());
    if (std::all_of(v.begin(), v.end(), [](int a) { return a == 0; })) {
      throw std::invalid_argument("stabilizer hamiltonian: generators are dependent");
    }
    std::vector<int> self(gens.size(), 0);
    self[g] = 1;
    for (std::size_t k = 0; k < acc.size(); ++k) self[k] = positive_mod(self[k] - acc[k], static_cast<int>(q));
    basis.add(std::move(v), std::move(self));
  }
  return basis;
}

}  // namespace

void StabilizerHamiltonian::finish_construction() {
  for (const auto& t : terms_) {
    if (t.is_phase_identity()) throw std::invalid_argument("stabilizer hamiltonian: identity term");
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    for (std::size_t j = i + 1; j < terms_.size(); ++j) {
      if (!terms_[i].commutes_with(terms_[j])) {
        throw std::invalid_argument("stabilizer hamiltonian: terms do not commute");
      }
    }
  }
  for (std::size_t i = 0; i < generators_.size(); ++i) {
    for (std::size_t j = i + 1; j < generators_.size(); ++j) {
      if (!generators_[i].commutes_with(generators_[j])) {
        throw std::invalid_argument("stabilizer hamiltonian: generators do not commute");
      }
    }
  }

  SymplecticBasis basis = basis_of(generators_, q_, n_);
  expansion_.clear();
  expansion_phase_.clear();
  for (const auto& term : terms_) {
    std::vector<int> v = SymplecticBasis::vec_of(term);
    std::vector<int> combo = basis.reduce(v, generators_.size());
    if (!std::all_of(v.begin(), v.end(), [](int a) { return a == 0; })) {
      throw std::invalid_argument("stabilizer hamiltonian: term outside the generator span");
    }
    PauliOperator prod(n_, q_);
    for (std::size_t g = 0; g < generators_.size(); ++g) {
      if (combo[g] != 0) prod = prod.times(generators_[g].power(combo[g]));
    }
    if (SymplecticBasis::vec_of(prod) != SymplecticBasis::vec_of(term)) {
      throw std::logic_error("stabilizer hamiltonian: expansion mismatch");
    }
    expansion_.push_back(std::move(combo));
    expansion_phase_.push_back(positive_mod(term.phase_exp() - prod.phase_exp(), 2 * static_cast<int>(q_)));
  }

  std::vector<std::vector<Vertex>> edges;
  for (const auto& t : terms_) edges.push_back(t.support().verts());
  graph_ = Hypergraph(n_, q_, std::move(edges));
}

StabilizerHamiltonian StabilizerHamiltonian::from_terms(std::size_t n, std::uint32_t q,
                                                        std::vector<PauliOperator> terms) {
  StabilizerHamiltonian h;
  h.n_ = n;
  h.q_ = q;
  h.terms_ = std::move(terms);
  SymplecticBasis probe{static_cast<int>(q), 2 * n, {}};
  for (const auto& t : h.terms_) {
    std::vector<int> v = SymplecticBasis::vec_of(t);
    probe.reduce(v, 0);
    if (!std::all_of(v.begin(), v.end(), [](int a) { return a == 0; })) {
      h.generators_.push_back(t);
      probe.add(std::move(v), {});
    }
  }
  h.finish_construction();
  return h;
}

StabilizerHamiltonian StabilizerHamiltonian::with_generators(std::size_t n, std::uint32_t q,
                                                             std::vector<PauliOperator> terms,
                                                             std::vector<PauliOperator> generators) {
  StabilizerHamiltonian h;
  h.n_ = n;
  h.q_ = q;
  h.terms_ = std::move(terms);
  h.generators_ = std::move(generators);
  h.finish_construction();
  return h;
}

StabilizerHamiltonian StabilizerHamiltonian::ising_chain_z(std::size_t n, bool periodic) {
  std::vector<PauliOperator> terms;
  const std::size_t bonds = periodic ? n : n - 1;
  for (std::size_t i = 0; i < bonds; ++i) {
    PauliOperator t = PauliOperator::single(n, 2, static_cast<Vertex>(i), 'Z')
                          .times(PauliOperator::single(n, 2, static_cast<Vertex>((i + 1) % n), 'Z'));
    terms.push_back(PauliOperator::parse("-", n, 2).times(t));
  }
  std::vector<PauliOperator> gens;
  for (std::size_t i = 0; i < n; ++i) gens.push_back(PauliOperator::single(n, 2, static_cast<Vertex>(i), 'Z'));
  return with_generators(n, 2, std::move(terms), std::move(gens));
}

StabilizerHamiltonian StabilizerHamiltonian::toric_patch(std::size_t ell) {
  if (ell < 2) throw std::invalid_argument("toric_patch: need L >= 2");
  const std::size_t n = 2 * ell * ell;
  auto h_edge = [&](std::size_t r, std::size_t c) { return (r % ell) * ell + (c % ell); };
  auto v_edge = [&](std::size_t r, std::size_t c) { return ell * ell + (r % ell) * ell + (c % ell); };
  std::vector<PauliOperator> terms;
  auto product = [&](const std::vector<std::size_t>& sites, char letter) {
    PauliOperator p = PauliOperator::parse("-", n, 2);
    for (std::size_t s : sites) p = p.times(PauliOperator::single(n, 2, static_cast<Vertex>(s), letter));
    return p;
  };
  for (std::size_t r = 0; r < ell; ++r) {
    for (std::size_t c = 0; c < ell; ++c) {
      terms.push_back(product({h_edge(r, c), h_edge(r, c + ell - 1), v_edge(r, c), v_edge(r + ell - 1, c)}, 'X'));
    }
  }
  for (std::size_t r = 0; r < ell; ++r) {
    for (std::size_t c = 0; c < ell; ++c) {
      terms.push_back(product({h_edge(r, c), h_edge(r + 1, c), v_edge(r, c), v_edge(r, c + 1)}, 'Z'));
    }
  }
  return from_terms(n, 2, std::move(terms));
}

StabilizerHamiltonian StabilizerHamiltonian::cluster_chain(std::size_t n) {
  if (n < 3) throw std::invalid_argument("cluster_chain: need n >= 3");
  std::vector<PauliOperator> terms;
  for (std::size_t i = 0; i < n; ++i) {
    PauliOperator p = PauliOperator::parse("-", n, 2);
    if (i > 0) p = p.times(PauliOperator::single(n, 2, static_cast<Vertex>(i - 1), 'Z'));
    p = p.times(PauliOperator::single(n, 2, static_cast<Vertex>(i), 'X'));
    if (i + 1 < n) p = p.times(PauliOperator::single(n, 2, static_cast<Vertex>(i + 1), 'Z'));
    terms.push_back(std::move(p));
  }
  return from_terms(n, 2, std::move(terms));
}

StabilizerHamiltonian StabilizerHamiltonian::pauli_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  const std::size_t n = j.at("n").get<std::size_t>();
  const std::uint32_t q = j.at("q").get<std::uint32_t>();
  std::vector<PauliOperator> terms;
  for (const auto& s : j.at("terms")) terms.push_back(PauliOperator::parse(s.get<std::string>(), n, q));
  if (j.contains("generators")) {
    std::vector<PauliOperator> gens;
    for (const auto& s : j.at("generators")) gens.push_back(PauliOperator::parse(s.get<std::string>(), n, q));
    return with_generators(n, q, std::move(terms), std::move(gens));
  }
  return from_terms(n, q, std::move(terms));
}

Matrix StabilizerHamiltonian::dense_hamiltonian() const {
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q_, static_cast<double>(n_))));
  Matrix h = Matrix::Zero(dim, dim);
  for (const auto& t : terms_) sparse_pauli(t).add_to(h, Complex(1, 0));
  if ((h - h.adjoint()).norm() > 1e-9) {
    throw std::invalid_argument("stabilizer hamiltonian: dense Hamiltonian is not Hermitian");
  }
  return h;
}

bool check_commuting(const StabilizerHamiltonian& h) {
  for (std::size_t i = 0; i < h.terms().size(); ++i) {
    for (std::size_t j = i + 1; j < h.terms().size(); ++j) {
      if (!h.terms()[i].commutes_with(h.terms()[j])) return false;
    }
  }
  return true;
}

namespace {

double term_eigenvalue(const StabilizerHamiltonian& h, std::size_t a, const std::vector<int>& labels) {
  const int q = static_cast<int>(h.q());
  int expo = h.expansion_phase(a);
  const auto& m = h.expansions()[a];
  for (std::size_t g = 0; g < m.size(); ++g) expo += 2 * m[g] * labels[g];
  expo = positive_mod(expo, 2 * q);
  if (expo == 0) return 1.0;
  if (expo == q) return -1.0;
  throw std::invalid_argument("stabilizer term has a non-real eigenvalue; not a valid Hamiltonian term");
}

}  // namespace

StabilizerDistribution stabilizer_distribution(const StabilizerHamiltonian& h, double beta) {
  if (!check_commuting(h)) throw std::invalid_argument("stabilizer_distribution: non-commuting terms");
  const std::size_t n_gens = h.generators().size();
  std::vector<Region> gen_support;
  for (const auto& g : h.generators()) gen_support.push_back(g.support());

  std::vector<std::vector<Vertex>> dual_edges;
  for (std::size_t a = 0; a < h.terms().size(); ++a) {
    Region sup = h.terms()[a].support();
    std::vector<Vertex> edge;
    for (std::size_t g = 0; g < n_gens; ++g) {
      if (!gen_support[g].disjoint_from(sup)) edge.push_back(static_cast<Vertex>(g));
    }
    if (edge.empty()) throw std::logic_error("stabilizer_distribution: term overlaps no generator");
    // A dependent term can expand through generators it does not overlap
    // (e.g. the closing star of a small torus); the dual hyperedge must then
    // include those generators so the label table stays well defined.
    for (std::size_t g = 0; g < n_gens; ++g) {
      if (h.expansions()[a][g] != 0 &&
          std::find(edge.begin(), edge.end(), static_cast<Vertex>(g)) == edge.end()) {
        edge.push_back(static_cast<Vertex>(g));
      }
    }
    std::sort(edge.begin(), edge.end());
    dual_edges.push_back(std::move(edge));
  }

  Hypergraph dual(n_gens, h.q(), dual_edges);
  std::vector<EnergyTerm> tables;
  std::vector<int> labels(n_gens, 0);
  for (std::size_t a = 0; a < h.terms().size(); ++a) {
    const auto& edge = dual_edges[a];
    std::vector<std::uint32_t> dims(edge.size(), h.q());
    MixedRadix radix(dims);
    std::vector<double> table(radix.size());
    std::vector<int> vals;
    for (std::size_t i = 0; i < radix.size(); ++i) {
      radix.decode(i, vals);
      std::fill(labels.begin(), labels.end(), 0);
      for (std::size_t k = 0; k < edge.size(); ++k) labels[edge[k]] = vals[k];
      table[i] = term_eigenvalue(h, a, labels);
    }
    tables.push_back({edge, std::move(table)});
  }
  return StabilizerDistribution{dual, GibbsModel(dual, beta, std::move(tables)), dual_edges};
}

void validate_density(const DensityMatrix& rho, double tol) {
  if ((rho.mat - rho.mat.adjoint()).norm() > tol) throw std::invalid_argument("density: not Hermitian");
  if (std::abs(rho.mat.trace().real() - 1.0) > tol) throw std::invalid_argument("density: trace != 1");
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho.mat);
  if (es.eigenvalues().minCoeff() < -tol) throw std::invalid_argument("density: not positive semidefinite");
}

DensityMatrix gibbs_density_matrix(const StabilizerHamiltonian& h, double beta, int budget_bits) {
  check_budget(static_cast<double>(h.n_sites()) * std::log2(static_cast<double>(h.q())), budget_bits);
  Matrix hm = h.dense_hamiltonian();
  Eigen::SelfAdjointEigenSolver<Matrix> es(hm);
  Eigen::VectorXd lam = es.eigenvalues();
  const double lo = lam.minCoeff();
  Eigen::VectorXd w = (-beta * (lam.array() - lo)).exp();
  w /= w.sum();
  Matrix rho = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
  return DensityMatrix{std::move(rho), std::vector<std::uint32_t>(h.n_sites(), h.q())};
}

QuantumChannel depolarizing_channel(Vertex site, double eps) {
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("depolarizing: eps in [0,1]");
  Matrix x(2, 2), y(2, 2), z(2, 2), id = Matrix::Identity(2, 2);
  x << 0, 1, 1, 0;
  y << 0, Complex(0, -1), Complex(0, 1), 0;
  z << 1, 0, 0, -1;
  std::vector<Matrix> kraus{std::sqrt(1.0 - 0.75 * eps) * id, std::sqrt(eps / 4.0) * x,
                            std::sqrt(eps / 4.0) * y, std::sqrt(eps / 4.0) * z};
  return QuantumChannel{Region{site}, {2}, std::move(kraus)};
}

QuantumChannel dephasing_channel(Vertex site, double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("dephasing: p in [0,1]");
  Matrix z(2, 2), id = Matrix::Identity(2, 2);
  z << 1, 0, 0, -1;
  std::vector<Matrix> kraus{std::sqrt(1.0 - p) * id, std::sqrt(p) * z};
  return QuantumChannel{Region{site}, {2}, std::move(kraus)};
}

QuantumChannel amplitude_damping_channel(Vertex site, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("amplitude damping: gamma in [0,1]");
  Matrix k0(2, 2), k1(2, 2);
  k0 << 1, 0, 0, std::sqrt(1.0 - gamma);
  k1 << 0, std::sqrt(gamma), 0, 0;
  return QuantumChannel{Region{site}, {2}, {k0, k1}};
}

QuantumChannel quantum_from_classical(const LocalChannel& ch) {
  const std::size_t s = ch.states();
  std::vector<Matrix> kraus;
  for (std::size_t out = 0; out < s; ++out) {
    for (std::size_t in = 0; in < s; ++in) {
      double t = ch.entry(out, in);
      if (t <= 0.0) continue;
      Matrix k = Matrix::Zero(s, s);
      k(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)) = std::sqrt(t);
      kraus.push_back(std::move(k));
    }
  }
  return QuantumChannel{ch.support(), ch.dims(), std::move(kraus)};
}

void check_trace_preserving(const QuantumChannel& ch, double tol) {
  if (ch.kraus.empty()) throw std::invalid_argument("channel: no Kraus operators");
  const Eigen::Index s = ch.kraus[0].rows();
  Matrix acc = Matrix::Zero(s, s);
  for (const auto& k : ch.kraus) acc += k.adjoint() * k;
  if ((acc - Matrix::Identity(s, s)).norm() > tol) {
    throw std::invalid_argument("channel: not trace preserving");
  }
}

namespace {

// sum_K (I x K) op (I x K)^dag for a channel on a few sites, via index
// remapping instead of dense lifted matrices.
Matrix apply_channel_dense(const QuantumChannel& ch, const Matrix& op, const std::vector<std::uint32_t>& dims) {
  MixedRadix full(dims);
  std::vector<std::size_t> pos;
  std::vector<std::uint32_t> sdims;
  for (Vertex v : ch.support) {
    pos.push_back(v);
    sdims.push_back(dims[v]);
  }
  MixedRadix sub(sdims);
  const std::size_t total = full.size();
  const std::size_t s = sub.size();
  // remap[i * s + s'] = index i with the support digits replaced by s'.
  std::vector<std::size_t> sub_of(total);
  std::vector<std::size_t> remap(total * s);
  std::vector<int> digits(dims.size());
  for (std::size_t i = 0; i < total; ++i) {
    full.decode(i, digits);
    std::size_t sub_in = 0;
    long long base = static_cast<long long>(i);
    for (std::size_t k = 0; k < pos.size(); ++k) {
      sub_in = sub_in * sdims[k] + static_cast<std::size_t>(digits[pos[k]]);
      base -= static_cast<long long>(digits[pos[k]]) * static_cast<long long>(full.stride(pos[k]));
    }
    sub_of[i] = sub_in;
    for (std::size_t so = 0; so < s; ++so) {
      long long j = base;
      std::size_t rem = so;
      for (std::size_t k = pos.size(); k-- > 0;) {
        j += static_cast<long long>(rem % sdims[k]) * static_cast<long long>(full.stride(pos[k]));
        rem /= sdims[k];
      }
      remap[i * s + so] = static_cast<std::size_t>(j);
    }
  }
  Matrix out = Matrix::Zero(op.rows(), op.cols());
  Matrix mid(op.rows(), op.cols());
  for (const auto& k : ch.kraus) {
    mid.setZero();
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t si = sub_of[i];
      for (std::size_t so = 0; so < s; ++so) {
        const Complex kk = k(static_cast<Eigen::Index>(so), static_cast<Eigen::Index>(si));
        if (kk == Complex(0, 0)) continue;
        mid.row(static_cast<Eigen::Index>(remap[i * s + so])) += kk * op.row(static_cast<Eigen::Index>(i));
      }
    }
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t si = sub_of[i];
      for (std::size_t so = 0; so < s; ++so) {
        const Complex kk = k(static_cast<Eigen::Index>(so), static_cast<Eigen::Index>(si));
        if (kk == Complex(0, 0)) continue;
        out.col(static_cast<Eigen::Index>(remap[i * s + so])) += std::conj(kk) * mid.col(static_cast<Eigen::Index>(i));
      }
    }
  }
  return out;
}

std::vector<std::size_t> adjacent_generators(const QuantumChannel& ch, const StabilizerHamiltonian& h) {
  std::vector<std::size_t> adj;
  for (std::size_t g = 0; g < h.generators().size(); ++g) {
    if (!h.generators()[g].support().disjoint_from(ch.support)) adj.push_back(g);
  }
  return adj;
}

// Projectors onto the joint eigenspaces of the listed generators, for every
// label assignment (mixed-radix, first listed generator slowest), assembled
// from the sparse group elements.
std::vector<Matrix> all_restricted_projectors(const StabilizerHamiltonian& h,
                                              const std::vector<std::size_t>& generators) {
  const std::uint32_t q = h.q();
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q, static_cast<double>(h.n_sites()))));
  std::vector<PauliOperator> gens;
  for (std::size_t g : generators) gens.push_back(h.generators()[g]);
  std::vector<SparsePauli> elems = group_elements(gens, q, dim);
  MixedRadix krad(std::vector<std::uint32_t>(gens.size(), q));
  MixedRadix srad(krad);
  const Complex omega = std::exp(Complex(0.0, 2.0 * M_PI / static_cast<double>(q)));
  std::vector<Matrix> out(srad.size());
  std::vector<int> ks, ss;
  for (std::size_t s = 0; s < srad.size(); ++s) {
    srad.decode(s, ss);
    Matrix acc = Matrix::Zero(dim, dim);
    for (std::size_t k = 0; k < krad.size(); ++k) {
      krad.decode(k, ks);
      long long dot = 0;
      for (std::size_t g = 0; g < gens.size(); ++g) dot += static_cast<long long>(ks[g]) * ss[g];
      const Complex coeff = std::pow(omega, -static_cast<double>(dot % static_cast<long long>(q))) /
                            std::pow(static_cast<double>(q), static_cast<double>(gens.size()));
      elems[k].add_to(acc, coeff);
    }
    out[s] = std::move(acc);
  }
  return out;
}

}  // namespace

DensityMatrix apply_quantum_channel(const DensityMatrix& rho, const QuantumChannel& ch) {
  return DensityMatrix{apply_channel_dense(ch, rho.mat, rho.dims), rho.dims};
}

DensityMatrix partial_trace(const DensityMatrix& rho, const Region& keep) {
  MixedRadix full(rho.dims);
  std::vector<std::size_t> kpos, tpos;
  std::vector<std::uint32_t> kdims, tdims;
  for (std::size_t v = 0; v < rho.dims.size(); ++v) {
    if (keep.contains(static_cast<Vertex>(v))) {
      kpos.push_back(v);
      kdims.push_back(rho.dims[v]);
    } else {
      tpos.push_back(v);
      tdims.push_back(rho.dims[v]);
    }
  }
  MixedRadix krad(kdims), trad(tdims);
  Matrix out = Matrix::Zero(krad.size(), krad.size());
  std::vector<int> kr(kpos.size()), kc(kpos.size()), tv(tpos.size());
  std::vector<int> dr(rho.dims.size()), dc(rho.dims.size());
  for (std::size_t r = 0; r < krad.size(); ++r) {
    krad.decode(r, kr);
    for (std::size_t c = 0; c < krad.size(); ++c) {
      krad.decode(c, kc);
      Complex acc(0, 0);
      for (std::size_t t = 0; t < trad.size(); ++t) {
        trad.decode(t, tv);
        for (std::size_t k = 0; k < kpos.size(); ++k) {
          dr[kpos[k]] = kr[k];
          dc[kpos[k]] = kc[k];
        }
        for (std::size_t k = 0; k < tpos.size(); ++k) {
          dr[tpos[k]] = tv[k];
          dc[tpos[k]] = tv[k];
        }
        acc += rho.mat(static_cast<Eigen::Index>(full.index(dr)), static_cast<Eigen::Index>(full.index(dc)));
      }
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = acc;
    }
  }
  return DensityMatrix{std::move(out), kdims};
}

double von_neumann_entropy(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho.mat);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double lam = es.eigenvalues()(i);
    if (lam > kProbFloor) s -= lam * std::log(lam);
  }
  return s;
}

double quantum_cmi(const DensityMatrix& rho, const Tripartition& t, int budget_bits) {
  double bits = 0.0;
  for (std::uint32_t d : rho.dims) bits += std::log2(static_cast<double>(d));
  check_budget(bits, budget_bits);
  const double sab = von_neumann_entropy(partial_trace(rho, t.a.unite(t.b)));
  const double sbc = von_neumann_entropy(partial_trace(rho, t.b.unite(t.c)));
  const double sb = t.b.empty() ? 0.0 : von_neumann_entropy(partial_trace(rho, t.b));
  const double sabc = von_neumann_entropy(partial_trace(rho, t.a.unite(t.b).unite(t.c)));
  return sab + sbc - sb - sabc;
}

Matrix restricted_projector(const StabilizerHamiltonian& h, const std::vector<std::size_t>& generators,
                            const std::vector<int>& labels) {
  const std::uint32_t q = h.q();
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q, static_cast<double>(h.n_sites()))));
  std::vector<PauliOperator> gens;
  for (std::size_t g : generators) gens.push_back(h.generators()[g]);
  std::vector<SparsePauli> elems = group_elements(gens, q, dim);
  MixedRadix krad(std::vector<std::uint32_t>(gens.size(), q));
  const Complex omega = std::exp(Complex(0.0, 2.0 * M_PI / static_cast<double>(q)));
  Matrix acc = Matrix::Zero(dim, dim);
  std::vector<int> ks;
  for (std::size_t k = 0; k < krad.size(); ++k) {
    krad.decode(k, ks);
    long long dot = 0;
    for (std::size_t g = 0; g < gens.size(); ++g) dot += static_cast<long long>(ks[g]) * labels[g];
    const Complex coeff = std::pow(omega, -static_cast<double>(dot % static_cast<long long>(q))) /
                          std::pow(static_cast<double>(q), static_cast<double>(gens.size()));
    elems[k].add_to(acc, coeff);
  }
  return acc;
}

bool is_stabilizer_mixing(const QuantumChannel& ch, const StabilizerHamiltonian& h, double tol) {
  check_trace_preserving(ch, 1e-10);
  const std::vector<std::uint32_t> dims(h.n_sites(), h.q());
  std::vector<std::size_t> adj = adjacent_generators(ch, h);
  std::vector<Matrix> projs = all_restricted_projectors(h, adj);
  const double r_adj = projs[0].trace().real();
  for (const auto& pi : projs) {
    Matrix mapped = apply_channel_dense(ch, pi, dims);
    Matrix residual = mapped;
    for (const auto& pj : projs) {
      Complex c = (mapped.cwiseProduct(pj.conjugate())).sum() / r_adj;
      if (std::abs(c.imag()) > tol) return false;
      if (c.real() < -1e-12) return false;
      residual -= c * pj;
    }
    if (residual.norm() > tol * std::sqrt(static_cast<double>(mapped.rows()))) return false;
  }
  return true;
}

LocalChannel induced_classical_channel(const QuantumChannel& ch, const StabilizerHamiltonian& h) {
  if (!is_stabilizer_mixing(ch, h)) {
    throw std::invalid_argument("induced_classical_channel: channel is not stabilizer mixing");
  }
  const std::vector<std::uint32_t> dims(h.n_sites(), h.q());
  std::vector<std::size_t> adj = adjacent_generators(ch, h);
  std::vector<Matrix> projs = all_restricted_projectors(h, adj);
  const double r_adj = projs[0].trace().real();
  const std::size_t s = projs.size();
  std::vector<double> matrix(s * s, 0.0);
  for (std::size_t in = 0; in < s; ++in) {
    Matrix mapped = apply_channel_dense(ch, projs[in], dims);
    for (std::size_t out = 0; out < s; ++out) {
      double v = (mapped.cwiseProduct(projs[out].conjugate())).sum().real() / r_adj;
      matrix[out * s + in] = std::max(0.0, v);
    }
  }
  std::vector<Vertex> label_sites;
  for (std::size_t g : adj) label_sites.push_back(static_cast<Vertex>(g));
  return LocalChannel(Region(label_sites), std::vector<std::uint32_t>(adj.size(), h.q()), std::move(matrix));
}

LabelRegions classify_labels(const StabilizerHamiltonian& h, const Tripartition& t) {
  LabelRegions out;
  std::vector<Vertex> a, da, b, c, dc;
  for (std::size_t g = 0; g < h.generators().size(); ++g) {
    Region sup = h.generators()[g].support();
    const bool ta = !sup.disjoint_from(t.a);
    const bool tb = !sup.disjoint_from(t.b);
    const bool tc = !sup.disjoint_from(t.c);
    const Vertex gv = static_cast<Vertex>(g);
    if (ta && tc) throw std::invalid_argument("classify_labels: a generator touches both A and C");
    if (ta && tb) da.push_back(gv);
    else if (tb && tc) dc.push_back(gv);
    else if (ta) a.push_back(gv);
    else if (tc) c.push_back(gv);
    else b.push_back(gv);
  }
  out.a = Region(a);
  out.boundary_a = Region(da);
  out.b = Region(b);
  out.c = Region(c);
  out.boundary_c = Region(dc);
  return out;
}

CmiEqualityResult cmi_equality_check(const StabilizerHamiltonian& h, double beta,
                                     const std::vector<QuantumChannel>& process,
                                     const Tripartition& t, int budget_bits) {
  CmiEqualityResult out;
  DensityMatrix rho = gibbs_density_matrix(h, beta, budget_bits);
  for (const auto& ch : process) {
    check_trace_preserving(ch);
    rho = apply_quantum_channel(rho, ch);
  }
  out.quantum = quantum_cmi(rho, t, budget_bits);

  StabilizerDistribution sd = stabilizer_distribution(h, beta);
  DiscreteDistribution p = exact_distribution(sd.label_model);
  for (const auto& ch : process) p = apply_channel(p, induced_classical_channel(ch, h));
  LabelRegions lr = classify_labels(h, t);
  Tripartition label_t{lr.a.unite(lr.boundary_a), lr.b, lr.c.unite(lr.boundary_c)};
  out.classical = cmi(p, label_t);
  return out;
}

StabilizerCheckReport stabilizer_check(const StabilizerHamiltonian& h, double beta,
                                       const std::vector<QuantumChannel>& process,
                                       const Tripartition& t) {
  StabilizerCheckReport rep;
  rep.commuting = check_commuting(h);
  const std::size_t n_gens = h.generators().size();
  if (n_gens > 12) throw budget_exceeded("stabilizer_check: too many generators for dense label sweep");
  const std::uint32_t q = h.q();
  const std::size_t dim = static_cast<std::size_t>(std::llround(std::pow(q, static_cast<double>(h.n_sites()))));

  DensityMatrix rho = gibbs_density_matrix(h, beta);
  StabilizerDistribution sd = stabilizer_distribution(h, beta);
  DiscreteDistribution p_model = exact_distribution(sd.label_model);

  std::vector<std::size_t> all_gens(n_gens);
  std::iota(all_gens.begin(), all_gens.end(), 0);
  std::vector<Matrix> projs = all_restricted_projectors(h, all_gens);
  Matrix proj_sum = Matrix::Zero(dim, dim);
  Matrix recon = Matrix::Zero(dim, dim);
  const double r_expect = static_cast<double>(dim) / std::pow(q, static_cast<double>(n_gens));
  rep.ranks_equal = true;
  rep.distribution_error = 0.0;
  for (std::size_t i = 0; i < projs.size(); ++i) {
    proj_sum += projs[i];
    const double r = projs[i].trace().real();
    if (std::abs(r - r_expect) > 1e-8) rep.ranks_equal = false;
    const double p_dense = (rho.mat.cwiseProduct(projs[i].conjugate())).sum().real();
    rep.distribution_error = std::max(rep.distribution_error, std::abs(p_dense - p_model.prob(i)));
    recon += (p_model.prob(i) / r_expect) * projs[i];
  }
  rep.projectors_resolve_identity = (proj_sum - Matrix::Identity(dim, dim)).norm() < 1e-9;
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(recon - rho.mat);
    rep.reconstruction_error = es.eigenvalues().cwiseAbs().sum();
  }

  // Induced-channel oracle: the restricted matrix must match the full-label
  // trace formula at two reference assignments of the non-adjacent labels.
  rep.channel_error = 0.0;
  for (const auto& ch : process) {
    LocalChannel lc = induced_classical_channel(ch, h);
    std::vector<std::size_t> adj = adjacent_generators(ch, h);
    MixedRadix arad(std::vector<std::uint32_t>(adj.size(), q));
    std::vector<char> is_adj(n_gens, 0);
    for (std::size_t g : adj) is_adj[g] = 1;
    MixedRadix frad(std::vector<std::uint32_t>(n_gens, q));
    for (int rest_val = 0; rest_val < 2; ++rest_val) {
      std::vector<int> base(n_gens, 0);
      for (std::size_t g = 0; g < n_gens; ++g) {
        if (!is_adj[g]) base[g] = rest_val % static_cast<int>(q);
      }
      std::vector<int> in_labels, out_labels;
      for (std::size_t in = 0; in < arad.size(); ++in) {
        arad.decode(in, in_labels);
        std::vector<int> full_in = base;
        for (std::size_t k = 0; k < adj.size(); ++k) full_in[adj[k]] = in_labels[k];
        const Matrix& pi_in = projs[frad.index(full_in)];
        const double r_full = pi_in.trace().real();
        Matrix mapped = apply_channel_dense(ch, pi_in, rho.dims);
        for (std::size_t outl = 0; outl < arad.size(); ++outl) {
          arad.decode(outl, out_labels);
          std::vector<int> full_out = base;
          for (std::size_t k = 0; k < adj.size(); ++k) full_out[adj[k]] = out_labels[k];
          const Matrix& pi_out = projs[frad.index(full_out)];
          const double v = (mapped.cwiseProduct(pi_out.conjugate())).sum().real() / r_full;
          rep.channel_error = std::max(rep.channel_error, std::abs(v - lc.entry(outl, in)));
        }
      }
    }
  }

  CmiEqualityResult eq = cmi_equality_check(h, beta, process, t);
  rep.cmi_gap = std::abs(eq.quantum - eq.classical);
  return rep;
}

}  // namespace mklab
