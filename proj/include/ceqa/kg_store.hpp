#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ceqa/types.hpp"

namespace ceqa {

struct Edge {
  VertexId head;
  RelationType rel;
  VertexId tail;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge& a, const Edge& b) {
    if (auto c = a.head <=> b.head; c != 0) return c;
    if (auto c = a.rel <=> b.rel; c != 0) return c;
    return a.tail <=> b.tail;
  }
};

// Collapses internal whitespace runs to one space and trims both ends.
std::string normalize_text(std::string_view text);

// Immutable eventuality graph. Vertex ids are dense; edges are unique.
// Forward and reverse CSR indexes keyed by (vertex, relation).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  // Edges are deduplicated; vertex texts must already be unique.
  KnowledgeGraph(std::vector<std::string> vertices, std::vector<Edge> edges);

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<std::string>& vertices() const { return vertices_; }
  const std::string& text(VertexId v) const;
  std::optional<VertexId> find(std::string_view text) const;
  VertexId id_of(std::string_view text) const;  // throws if absent

  // Sorted by (head, rel, tail).
  std::span<const Edge> edges() const { return edges_; }
  bool has_edge(VertexId head, RelationType rel, VertexId tail) const;

  // Sorted, duplicate-free.
  std::span<const VertexId> successors(VertexId v, RelationType r) const;
  std::span<const VertexId> predecessors(VertexId v, RelationType r) const;

  // All edges (u, r, v) into v, grouped by relation then ascending u.
  std::vector<Edge> in_edges(VertexId v) const;
  std::vector<Edge> out_edges(VertexId v) const;

  std::size_t num_self_loops() const { return self_loops_; }

 private:
  struct Csr {
    std::vector<std::size_t> offsets;  // (vertex * 14 + rel) -> range
    std::vector<VertexId> targets;
  };
  void check_vertex(VertexId v) const;
  static Csr build_index(std::size_t n, std::span<const Edge> edges, bool reverse);

  std::vector<std::string> vertices_;
  std::unordered_map<std::string, VertexId> lookup_;
  std::vector<Edge> edges_;
  Csr fwd_;
  Csr rev_;
  std::size_t self_loops_ = 0;
};

struct GraphSplit {
  KnowledgeGraph train;
  KnowledgeGraph valid;  // train + valid edges
  KnowledgeGraph test;   // all edges
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

// Edge counts for n edges: train = floor(r_train*n), valid = floor(r_val*n),
// test takes the remainder.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

KnowledgeGraph load_graph(const std::filesystem::path& path);
KnowledgeGraph parse_graph(std::istream& in);
// Loads an edge file against a fixed vertex table (the one of `vocabulary`);
// vertices absent from the table are an error.
KnowledgeGraph load_graph(const std::filesystem::path& path,
                          const KnowledgeGraph& vocabulary);

void write_graph(std::ostream& out, const KnowledgeGraph& g);
void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g);

GraphSplit split_edges(const KnowledgeGraph& g, const SplitRatios& ratios,
                       std::uint64_t seed);

// Directory form of a split: vertices.txt (one text per line, in id order)
// plus kg_train.tsv, kg_valid.tsv and kg_test.tsv.
void save_split(const std::filesystem::path& dir, const GraphSplit& split);
GraphSplit load_split(const std::filesystem::path& dir);

// Clustered random graph used by the benchmarks and tests. Vertices are
// partitioned into clusters and each relation maps a cluster onto a fixed
// target cluster, so projections have learnable structure.
struct SyntheticGraphConfig {
  std::size_t num_vertices = 300;
  std::size_t num_edges = 1800;
  std::size_t num_clusters = 10;
  std::size_t max_fanout = 3;  // tails drawn per (head, relation) pick
  double tail_skew = 2.0;      // 1 is uniform within the target cluster
  std::uint64_t seed = 0;
};
KnowledgeGraph make_synthetic_graph(const SyntheticGraphConfig& cfg);

}  // namespace ceqa
