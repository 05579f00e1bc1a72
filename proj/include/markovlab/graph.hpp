#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "markovlab/common.hpp"

namespace mklab {

using Vertex = std::uint32_t;

inline constexpr std::size_t kInfiniteDistance = std::numeric_limits<std::size_t>::max();

// Sorted set of vertex indices.
class Region {
 public:
  Region() = default;
  Region(std::initializer_list<Vertex> vs);
  explicit Region(std::vector<Vertex> vs);

  static Region full(std::size_t n);

  bool contains(Vertex v) const;
  bool empty() const { return verts_.empty(); }
  std::size_t size() const { return verts_.size(); }
  const std::vector<Vertex>& verts() const { return verts_; }
  Vertex operator[](std::size_t i) const { return verts_[i]; }
  auto begin() const { return verts_.begin(); }
  auto end() const { return verts_.end(); }

  bool operator==(const Region& o) const = default;

  Region unite(const Region& o) const;
  Region intersect(const Region& o) const;
  Region subtract(const Region& o) const;
  bool disjoint_from(const Region& o) const;
  bool subset_of(const Region& o) const;

  std::string to_string() const;

 private:
  std::vector<Vertex> verts_;
};

// Hypergraph over dense vertex indices 0..n-1. Two sites are adjacent iff
// they are co-members of some hyperedge; this is the single connectivity
// notion used for distances, separation and polymers.
class Hypergraph {
 public:
  Hypergraph() = default;
  // Uniform local dimension q on every vertex.
  Hypergraph(std::size_t n, std::uint32_t q, std::vector<std::vector<Vertex>> hyperedges);
  // Per-vertex local dimensions (used by blocked super-spin models).
  Hypergraph(std::vector<std::uint32_t> dims, std::vector<std::vector<Vertex>> hyperedges);

  std::size_t n_vertices() const { return dims_.size(); }
  std::size_t n_hyperedges() const { return edges_.size(); }
  const std::vector<std::vector<Vertex>>& hyperedges() const { return edges_; }
  const std::vector<Vertex>& hyperedge(std::size_t a) const { return edges_[a]; }

  std::uint32_t dim(Vertex v) const { return dims_[v]; }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  bool uniform_dims() const;
  // Uniform local dimension; throws if dimensions vary between vertices.
  std::uint32_t q() const;

  std::size_t max_degree() const { return max_degree_; }
  std::size_t max_edge_size() const { return max_edge_size_; }

  const std::vector<std::size_t>& incident_edges(Vertex v) const { return incident_[v]; }
  const std::vector<Vertex>& neighbors(Vertex v) const { return neighbors_[v]; }

  // log2 of the total configuration count.
  double state_bits() const;

  static Hypergraph path(std::size_t n, std::uint32_t q = 2);
  static Hypergraph cycle(std::size_t n, std::uint32_t q = 2);
  static Hypergraph grid(std::size_t rows, std::size_t cols, std::uint32_t q = 2, bool periodic = false);

 private:
  void build_index();

  std::vector<std::uint32_t> dims_;
  std::vector<std::vector<Vertex>> edges_;
  std::vector<std::vector<std::size_t>> incident_;
  std::vector<std::vector<Vertex>> neighbors_;
  std::size_t max_degree_ = 0;
  std::size_t max_edge_size_ = 0;
};

struct Tripartition {
  Region a;
  Region b;
  Region c;
};

std::size_t max_degree(const Hypergraph& g);

// BFS distances from `from` to every vertex; kInfiniteDistance if unreachable.
std::vector<std::size_t> distance_map(const Hypergraph& g, const Region& from);

// Shortest path length between the regions, where consecutive path sites
// share a hyperedge. Returns kInfiniteDistance when disconnected; 0 when the
// regions intersect.
std::size_t graph_distance(const Hypergraph& g, const Region& a, const Region& c);

// True iff every path from t.a to t.c intersects t.b. Requires a,b,c to
// partition the vertices.
bool separates(const Hypergraph& g, const Tripartition& t);

// Sites of r sharing a hyperedge with a site outside r.
Region boundary_set(const Hypergraph& g, const Region& r);

// A = center, B = sites at distance 1..radius, C = the rest.
Tripartition annulus_tripartition(const Hypergraph& g, const Region& center, std::size_t radius);

}  // namespace mklab
