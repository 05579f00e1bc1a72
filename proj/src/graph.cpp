#include "markovlab/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <mutex>
#include <sstream>

namespace mklab {

namespace {
int g_threads = 1;
}

int worker_threads() { return g_threads; }
void set_worker_threads(int n) { g_threads = n < 1 ? 1 : n; }

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t n_chunks = std::min<std::size_t>(64, n);
  const int n_threads = std::min<int>(g_threads, static_cast<int>(n_chunks));
  if (n_threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      fn(c, n * c / n_chunks, n * (c + 1) / n_chunks);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) {
        fn(c, n * c / n_chunks, n * (c + 1) / n_chunks);
      }
    });
  }
  for (auto& th : pool) th.join();
}

double parallel_sum(std::size_t n, const std::function<double(std::size_t)>& term) {
  if (n == 0) return 0.0;
  const std::size_t n_chunks = std::min<std::size_t>(64, n);
  std::vector<double> partial(n_chunks, 0.0);
  parallel_chunks(n, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    partial[chunk] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

Region::Region(std::initializer_list<Vertex> vs) : Region(std::vector<Vertex>(vs)) {}

Region::Region(std::vector<Vertex> vs) : verts_(std::move(vs)) {
  std::sort(verts_.begin(), verts_.end());
  verts_.erase(std::unique(verts_.begin(), verts_.end()), verts_.end());
}

Region Region::full(std::size_t n) {
  std::vector<Vertex> vs(n);
  for (std::size_t i = 0; i < n; ++i) vs[i] = static_cast<Vertex>(i);
  return Region(std::move(vs));
}

bool Region::contains(Vertex v) const {
  return std::binary_search(verts_.begin(), verts_.end(), v);
}

Region Region::unite(const Region& o) const {
  std::vector<Vertex> out;
  out.reserve(verts_.size() + o.verts_.size());
  std::set_union(verts_.begin(), verts_.end(), o.verts_.begin(), o.verts_.end(), std::back_inserter(out));
  return Region(std::move(out));
}

Region Region::intersect(const Region& o) const {
  std::vector<Vertex> out;
  std::set_intersection(verts_.begin(), verts_.end(), o.verts_.begin(), o.verts_.end(), std::back_inserter(out));
  return Region(std::move(out));
}

Region Region::subtract(const Region& o) const {
  std::vector<Vertex> out;
  std::set_difference(verts_.begin(), verts_.end(), o.verts_.begin(), o.verts_.end(), std::back_inserter(out));
  return Region(std::move(out));
}

bool Region::disjoint_from(const Region& o) const { return intersect(o).empty(); }

bool Region::subset_of(const Region& o) const {
  return std::includes(o.verts_.begin(), o.verts_.end(), verts_.begin(), verts_.end());
}

std::string Region::to_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < verts_.size(); ++i) {
    if (i) os << ',';
    os << verts_[i];
  }
  os << '}';
  return os.str();
}

Hypergraph::Hypergraph(std::size_t n, std::uint32_t q, std::vector<std::vector<Vertex>> hyperedges)
    : Hypergraph(std::vector<std::uint32_t>(n, q), std::move(hyperedges)) {}

Hypergraph::Hypergraph(std::vector<std::uint32_t> dims, std::vector<std::vector<Vertex>> hyperedges)
    : dims_(std::move(dims)), edges_(std::move(hyperedges)) {
  for (std::uint32_t d : dims_) {
    if (d < 1) throw std::invalid_argument("vertex dimension must be >= 1");
  }
  for (auto& e : edges_) {
    if (e.empty()) throw std::invalid_argument("hyperedge must be nonempty");
    std::sort(e.begin(), e.end());
    if (std::adjacent_find(e.begin(), e.end()) != e.end()) {
      throw std::invalid_argument("hyperedge contains duplicate vertices");
    }
    if (e.back() >= dims_.size()) throw std::invalid_argument("hyperedge vertex out of range");
  }
  build_index();
}

void Hypergraph::build_index() {
  const std::size_t n = dims_.size();
  incident_.assign(n, {});
  neighbors_.assign(n, {});
  for (std::size_t a = 0; a < edges_.size(); ++a) {
    for (Vertex v : edges_[a]) incident_[v].push_back(a);
  }
  max_degree_ = 0;
  max_edge_size_ = 0;
  for (const auto& e : edges_) max_edge_size_ = std::max(max_edge_size_, e.size());
  for (std::size_t v = 0; v < n; ++v) {
    max_degree_ = std::max(max_degree_, incident_[v].size());
    std::vector<Vertex> nb;
    for (std::size_t a : incident_[v]) {
      for (Vertex u : edges_[a]) {
        if (u != v) nb.push_back(u);
      }
    }
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    neighbors_[v] = std::move(nb);
  }
}

bool Hypergraph::uniform_dims() const {
  for (std::uint32_t d : dims_) {
    if (d != dims_[0]) return false;
  }
  return !dims_.empty();
}

std::uint32_t Hypergraph::q() const {
  if (!uniform_dims()) throw std::logic_error("hypergraph has non-uniform local dimensions");
  return dims_[0];
}

double Hypergraph::state_bits() const {
  double bits = 0.0;
  for (std::uint32_t d : dims_) bits += std::log2(static_cast<double>(d));
  return bits;
}

Hypergraph Hypergraph::path(std::size_t n, std::uint32_t q) {
  std::vector<std::vector<Vertex>> es;
  for (std::size_t i = 0; i + 1 < n; ++i) es.push_back({static_cast<Vertex>(i), static_cast<Vertex>(i + 1)});
  return Hypergraph(n, q, std::move(es));
}

Hypergraph Hypergraph::cycle(std::size_t n, std::uint32_t q) {
  std::vector<std::vector<Vertex>> es;
  for (std::size_t i = 0; i + 1 < n; ++i) es.push_back({static_cast<Vertex>(i), static_cast<Vertex>(i + 1)});
  if (n > 2) es.push_back({static_cast<Vertex>(n - 1), 0});
  return Hypergraph(n, q, std::move(es));
}

Hypergraph Hypergraph::grid(std::size_t rows, std::size_t cols, std::uint32_t q, bool periodic) {
  auto id = [cols](std::size_t r, std::size_t c) { return static_cast<Vertex>(r * cols + c); };
  std::vector<std::vector<Vertex>> es;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c + 1 < cols) es.push_back({id(r, c), id(r, c + 1)});
      else if (periodic && cols > 2) es.push_back({id(r, c), id(r, 0)});
      if (r + 1 < rows) es.push_back({id(r, c), id(r + 1, c)});
      else if (periodic && rows > 2) es.push_back({id(r, c), id(0, c)});
    }
  }
  return Hypergraph(rows * cols, q, std::move(es));
}

std::size_t max_degree(const Hypergraph& g) { return g.max_degree(); }

std::vector<std::size_t> distance_map(const Hypergraph& g, const Region& from) {
  std::vector<std::size_t> dist(g.n_vertices(), kInfiniteDistance);
  std::deque<Vertex> queue;
  for (Vertex v : from) {
    dist[v] = 0;
    queue.push_back(v);
  }
  while (!queue.empty()) {
    Vertex v = queue.front();
    queue.pop_front();
    for (Vertex u : g.neighbors(v)) {
      if (dist[u] == kInfiniteDistance) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

std::size_t graph_distance(const Hypergraph& g, const Region& a, const Region& c) {
  if (a.empty() || c.empty()) throw std::invalid_argument("graph_distance: empty region");
  auto dist = distance_map(g, a);
  std::size_t best = kInfiniteDistance;
  for (Vertex v : c) best = std::min(best, dist[v]);
  return best;
}

bool separates(const Hypergraph& g, const Tripartition& t) {
  if (!t.a.disjoint_from(t.b) || !t.a.disjoint_from(t.c) || !t.b.disjoint_from(t.c)) {
    throw std::invalid_argument("separates: regions must be pairwise disjoint");
  }
  if (t.a.size() + t.b.size() + t.c.size() != g.n_vertices()) {
    throw std::invalid_argument("separates: regions must cover all vertices");
  }
  if (t.a.empty() || t.c.empty()) return true;
  // Flood-fill from A avoiding B; C must stay unreached.
  std::vector<char> blocked(g.n_vertices(), 0);
  for (Vertex v : t.b) blocked[v] = 1;
  std::vector<char> seen(g.n_vertices(), 0);
  std::deque<Vertex> queue;
  for (Vertex v : t.a) {
    seen[v] = 1;
    queue.push_back(v);
  }
  while (!queue.empty()) {
    Vertex v = queue.front();
    queue.pop_front();
    for (Vertex u : g.neighbors(v)) {
      if (!seen[u] && !blocked[u]) {
        seen[u] = 1;
        queue.push_back(u);
      }
    }
  }
  for (Vertex v : t.c) {
    if (seen[v]) return false;
  }
  return true;
}

Region boundary_set(const Hypergraph& g, const Region& r) {
  std::vector<Vertex> out;
  for (Vertex v : r) {
    for (Vertex u : g.neighbors(v)) {
      if (!r.contains(u)) {
        out.push_back(v);
        break;
      }
    }
  }
  return Region(std::move(out));
}

Tripartition annulus_tripartition(const Hypergraph& g, const Region& center, std::size_t radius) {
  if (radius < 1) throw std::invalid_argument("annulus_tripartition: radius must be >= 1");
  if (center.empty()) throw std::invalid_argument("annulus_tripartition: empty center");
  auto dist = distance_map(g, center);
  std::vector<Vertex> b, c;
  for (std::size_t v = 0; v < g.n_vertices(); ++v) {
    if (dist[v] == 0) continue;
    if (dist[v] != kInfiniteDistance && dist[v] <= radius) b.push_back(static_cast<Vertex>(v));
    else c.push_back(static_cast<Vertex>(v));
  }
  Tripartition t{center, Region(std::move(b)), Region(std::move(c))};
  if (!separates(g, t)) throw std::logic_error("annulus_tripartition: separation violated");
  return t;
}

}  // namespace mklab
