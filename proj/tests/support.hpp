#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "ceqa/kg_store.hpp"
#include "ceqa/query_lang.hpp"
#include "ceqa/symbolic_exec.hpp"

namespace ceqa::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CEQA_FIXTURE_DIR) / name; }
inline std::filesystem::path golden(const std::string& name) { return std::filesystem::path(CEQA_GOLDEN_DIR) / name; }

inline const KnowledgeGraph& figure_graph() {
  static const KnowledgeGraph g = load_graph(fixture("figure_example.tsv"));
  return g;
}

inline constexpr const char* kFigureQuery =
    "(p,Reason,(i,(p,Succession,(e,PersonX complains)),(p,Succession,(e,PersonX leaves the restaurant))))";

inline std::vector<InformationalAtomic> figure_info(const KnowledgeGraph& g) {
  return {{g.id_of("PersonY adds ketchup"), RelationType::ChosenAlternative, g.id_of("PersonY adds vinegar")},
          {g.id_of("Food is bad"), RelationType::Precedence, g.id_of("PersonY adds soy sauce")}};
}

inline KnowledgeGraph random_graph(std::size_t vertices, std::size_t edges, std::size_t relations, Rng& rng) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < vertices; ++i) names.push_back("v" + std::to_string(i));
  std::vector<Edge> out;
  for (std::size_t i = 0; i < edges; ++i)
    out.push_back({static_cast<VertexId>(rng.uniform_index(vertices)),
                   kAllRelations[rng.uniform_index(relations)],
                   static_cast<VertexId>(rng.uniform_index(vertices))});
  return KnowledgeGraph(std::move(names), std::move(out));
}

// Brute force over every assignment of the query variables: a full
// assignment counts when each projection node's edge is present.
inline void for_each_assignment(const KnowledgeGraph& g, const GroundedQuery& q,
                                const std::function<void(const std::vector<VertexId>&)>& visit) {
  const auto k = static_cast<std::size_t>(q.num_variables());
  std::vector<VertexId> values(k, 0);
  std::function<VertexId(const GroundedNode&)> value_of = [&](const GroundedNode& n) {
    return n.op == NodeOp::Anchor ? n.anchor : values[static_cast<std::size_t>(n.variable)];
  };
  std::function<bool(const GroundedNode&)> holds = [&](const GroundedNode& n) {
    if (n.op == NodeOp::Anchor) return true;
    for (const auto& c : n.children) {
      if (!holds(c)) return false;
      if (n.op == NodeOp::Projection && !g.has_edge(value_of(c), n.rel, value_of(n))) return false;
      if (n.op == NodeOp::Intersection && c.op == NodeOp::Anchor && c.anchor != value_of(n)) return false;
    }
    return true;
  };
  if (k == 0) {
    visit(values);
    return;
  }
  const auto n = g.num_vertices();
  for (;;) {
    if (holds(q.root())) visit(values);
    std::size_t i = 0;
    while (i < k && ++values[i] == n) values[i++] = 0;
    if (i == k) return;
  }
}

inline VertexSet brute_force_answers(const KnowledgeGraph& g, const GroundedQuery& q) {
  if (q.num_variables() == 0) return {q.root().anchor};
  VertexSet out;
  for_each_assignment(g, q, [&](const std::vector<VertexId>& v) { out.push_back(v[0]); });
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace ceqa::testing
