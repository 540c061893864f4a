#include "ceqa/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ceqa {

namespace {

constexpr std::array<std::string_view, kNumRelations> kRelationNames = {
    "Precedence",  "Succession",    "Synchronous", "Reason",      "Result",
    "Condition",   "Concession",    "Contrast",    "Conjunction", "Instantiation",
    "Restatement", "Alternative",   "ChosenAlternative", "Exception",
};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Shared line parser; `intern` maps normalized text to an id.
template <typename Intern>
std::vector<Edge> parse_edges(std::istream& in, Intern&& intern) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw Error("malformed line " + std::to_string(line_no) +
                  ": expected head<TAB>relation<TAB>tail");
    auto head = normalize_text(fields[0]);
    auto tail = normalize_text(fields[2]);
    auto rel_token = normalize_text(fields[1]);
    if (head.empty() || tail.empty())
      throw Error("malformed line " + std::to_string(line_no) + ": empty eventuality");
    auto rel = parse_relation(rel_token);
    if (!rel)
      throw Error("unknown relation " + rel_token + " on line " + std::to_string(line_no));
    edges.push_back({intern(head, line_no), *rel, intern(tail, line_no)});
  }
  return edges;
}

}  // namespace

std::string_view relation_name(RelationType r) { return kRelationNames[index_of(r)]; }

std::optional<RelationType> parse_relation(std::string_view name) {
  for (std::size_t i = 0; i < kNumRelations; ++i)
    if (kRelationNames[i] == name) return kAllRelations[i];
  return std::nullopt;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

KnowledgeGraph::KnowledgeGraph(std::vector<std::string> vertices, std::vector<Edge> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  lookup_.reserve(vertices_.size());
  for (VertexId i = 0; i < vertices_.size(); ++i) {
    if (!lookup_.emplace(vertices_[i], i).second)
      throw Error("duplicate eventuality text: " + vertices_[i]);
  }
  for (const auto& e : edges_) {
    if (e.head >= vertices_.size() || e.tail >= vertices_.size())
      throw Error("edge references unknown vertex");
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  self_loops_ = static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.head == e.tail; }));
  fwd_ = build_index(vertices_.size(), edges_, false);
  rev_ = build_index(vertices_.size(), edges_, true);
}

KnowledgeGraph::Csr KnowledgeGraph::build_index(std::size_t n, std::span<const Edge> edges,
                                                bool reverse) {
  Csr csr;
  csr.offsets.assign(n * kNumRelations + 1, 0);
  auto key = [&](const Edge& e) {
    return (reverse ? e.tail : e.head) * kNumRelations + index_of(e.rel);
  };
  for (const auto& e : edges) ++csr.offsets[key(e) + 1];
  for (std::size_t i = 1; i < csr.offsets.size(); ++i) csr.offsets[i] += csr.offsets[i - 1];
  csr.targets.resize(edges.size());
  auto cursor = csr.offsets;
  for (const auto& e : edges) csr.targets[cursor[key(e)]++] = reverse ? e.head : e.tail;
  for (std::size_t k = 0; k + 1 < csr.offsets.size(); ++k)
    std::sort(csr.targets.begin() + static_cast<std::ptrdiff_t>(csr.offsets[k]),
              csr.targets.begin() + static_cast<std::ptrdiff_t>(csr.offsets[k + 1]));
  return csr;
}

void KnowledgeGraph::check_vertex(VertexId v) const {
  if (v >= vertices_.size())
    throw Error("vertex id " + std::to_string(v) + " out of range (|V|=" +
                std::to_string(vertices_.size()) + ")");
}

const std::string& KnowledgeGraph::text(VertexId v) const {
  check_vertex(v);
  return vertices_[v];
}

std::optional<VertexId> KnowledgeGraph::find(std::string_view text) const {
  auto it = lookup_.find(std::string(text));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

VertexId KnowledgeGraph::id_of(std::string_view text) const {
  auto id = find(text);
  if (!id) throw Error("unknown eventuality: " + std::string(text));
  return *id;
}

bool KnowledgeGraph::has_edge(VertexId head, RelationType rel, VertexId tail) const {
  auto s = successors(head, rel);
  return std::binary_search(s.begin(), s.end(), tail);
}

std::span<const VertexId> KnowledgeGraph::successors(VertexId v, RelationType r) const {
  check_vertex(v);
  auto k = v * kNumRelations + index_of(r);
  return {fwd_.targets.data() + fwd_.offsets[k], fwd_.offsets[k + 1] - fwd_.offsets[k]};
}

std::span<const VertexId> KnowledgeGraph::predecessors(VertexId v, RelationType r) const {
  check_vertex(v);
  auto k = v * kNumRelations + index_of(r);
  return {rev_.targets.data() + rev_.offsets[k], rev_.offsets[k + 1] - rev_.offsets[k]};
}

std::vector<Edge> KnowledgeGraph::in_edges(VertexId v) const {
  std::vector<Edge> out;
  for (auto r : kAllRelations)
    for (auto u : predecessors(v, r)) out.push_back({u, r, v});
  return out;
}

std::vector<Edge> KnowledgeGraph::out_edges(VertexId v) const {
  std::vector<Edge> out;
  for (auto r : kAllRelations)
    for (auto u : successors(v, r)) out.push_back({v, r, u});
  return out;
}

KnowledgeGraph parse_graph(std::istream& in) {
  std::vector<std::string> vertices;
  std::unordered_map<std::string, VertexId> ids;
  auto edges = parse_edges(in, [&](const std::string& text, std::size_t) {
    auto [it, inserted] = ids.emplace(text, static_cast<VertexId>(vertices.size()));
    if (inserted) vertices.push_back(text);
    return it->second;
  });
  KnowledgeGraph g(std::move(vertices), std::move(edges));
  if (g.num_self_loops() > 0)
    std::clog << "warning: graph contains " << g.num_self_loops() << " self-loop edge(s)\n";
  return g;
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open graph file " + path.string());
  return parse_graph(in);
}

KnowledgeGraph load_graph(const std::filesystem::path& path, const KnowledgeGraph& vocabulary) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open graph file " + path.string());
  auto edges = parse_edges(in, [&](const std::string& text, std::size_t line_no) {
    auto id = vocabulary.find(text);
    if (!id)
      throw Error("line " + std::to_string(line_no) + ": eventuality not in vocabulary: " + text);
    return *id;
  });
  return KnowledgeGraph(vocabulary.vertices(), std::move(edges));
}

void write_graph(std::ostream& out, const KnowledgeGraph& g) {
  for (const auto& e : g.edges())
    out << g.text(e.head) << '\t' << relation_name(e.rel) << '\t' << g.text(e.tail) << '\n';
}

void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write graph file " + path.string());
  write_graph(out, g);
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& r) {
  // Small epsilon so that exact products (0.8 * 10) do not floor down.
  auto part = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  std::size_t train = part(r.train);
  std::size_t valid = std::min(part(r.valid), n - train);
  return {train, valid, n - train - valid};
}

GraphSplit split_edges(const KnowledgeGraph& g, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.valid <= 0 || ratios.test <= 0)
    throw Error("split ratios must be positive");
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw Error("split ratios must sum to 1");
  if (g.num_edges() < 3) throw Error("need at least 3 edges to split");

  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
  Rng rng(seed);
  rng.shuffle(edges);
  auto [n_train, n_valid, n_test] = split_sizes(edges.size(), ratios);
  (void)n_test;

  auto prefix = [&](std::size_t k) {
    return KnowledgeGraph(g.vertices(), std::vector<Edge>(edges.begin(), edges.begin() +
                                                          static_cast<std::ptrdiff_t>(k)));
  };
  return {prefix(n_train), prefix(n_train + n_valid), prefix(edges.size())};
}

KnowledgeGraph make_synthetic_graph(const SyntheticGraphConfig& cfg) {
  if (cfg.num_vertices == 0 || cfg.num_clusters == 0 || cfg.num_clusters > cfg.num_vertices)
    throw Error("invalid synthetic graph configuration");
  Rng rng(cfg.seed);
  std::vector<std::string> vertices;
  vertices.reserve(cfg.num_vertices);
  for (std::size_t i = 0; i < cfg.num_vertices; ++i)
    vertices.push_back("event " + std::to_string(i));

  auto cluster_of = [&](std::size_t v) { return v % cfg.num_clusters; };
  const std::size_t per_cluster = cfg.num_vertices / cfg.num_clusters;

  // relation -> permutation of clusters
  std::vector<std::vector<std::size_t>> target(kNumRelations);
  for (auto& t : target) {
    t.resize(cfg.num_clusters);
    for (std::size_t c = 0; c < cfg.num_clusters; ++c) t[c] = c;
    rng.shuffle(t);
  }

  std::vector<Edge> edges;
  edges.reserve(cfg.num_edges);
  std::size_t attempts = 0;
  while (edges.size() < cfg.num_edges && attempts < cfg.num_edges * 20) {
    ++attempts;
    auto head = rng.uniform_index(cfg.num_vertices);
    auto rel = kAllRelations[rng.uniform_index(kNumRelations)];
    auto c = target[index_of(rel)][cluster_of(head)];
    const auto fanout = 1 + rng.uniform_index(std::max<std::size_t>(cfg.max_fanout, 1));
    for (std::size_t k = 0; k < fanout && edges.size() < cfg.num_edges; ++k) {
      // Low in-cluster indices are hubs: index = floor(n * u^tail_skew).
      const auto slot = static_cast<std::size_t>(static_cast<double>(per_cluster) *
                                                 std::pow(rng.uniform01(), cfg.tail_skew));
      auto tail = c + cfg.num_clusters * std::min(slot, per_cluster - 1);
      if (tail >= cfg.num_vertices || tail == head) continue;
      edges.push_back({static_cast<VertexId>(head), rel, static_cast<VertexId>(tail)});
    }
    if (edges.size() >= cfg.num_edges || attempts % 64 == 0) {
      std::sort(edges.begin(), edges.end());
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }
  }
  return KnowledgeGraph(std::move(vertices), std::move(edges));
}

void save_split(const std::filesystem::path& dir, const GraphSplit& split) {
  std::filesystem::create_directories(dir);
  std::ofstream vocab(dir / "vertices.txt");
  if (!vocab) throw Error("cannot write " + (dir / "vertices.txt").string());
  for (const auto& v : split.test.vertices()) vocab << v << '\n';
  save_graph(dir / "kg_train.tsv", split.train);
  save_graph(dir / "kg_valid.tsv", split.valid);
  save_graph(dir / "kg_test.tsv", split.test);
}

GraphSplit load_split(const std::filesystem::path& dir) {
  std::ifstream in(dir / "vertices.txt");
  if (!in) throw Error("cannot open " + (dir / "vertices.txt").string());
  std::vector<std::string> vertices;
  for (std::string line; std::getline(in, line);) vertices.push_back(line);
  KnowledgeGraph vocabulary(std::move(vertices), {});
  return {load_graph(dir / "kg_train.tsv", vocabulary), load_graph(dir / "kg_valid.tsv", vocabulary),
          load_graph(dir / "kg_test.tsv", vocabulary)};
}

}  // namespace ceqa
