#pragma once

#include <vector>

#include "ceqa/kg_store.hpp"
#include "ceqa/query_lang.hpp"

namespace ceqa {

// Sorted, duplicate-free vertex ids.
using VertexSet = std::vector<VertexId>;

inline constexpr std::size_t kDefaultGroundingCap = 10'000;

// Assignment of every query variable (index = variable, 0 is V_?).
struct Grounding {
  std::vector<VertexId> values;
  friend bool operator==(const Grounding&, const Grounding&) = default;
};

struct GroundingSet {
  std::vector<Grounding> groundings;
  bool truncated = false;  // more groundings exist than were returned
};

// Set semantics: anchors are singletons, projections follow head->tail
// edges, intersections intersect (smallest child first).
VertexSet answer_set(const KnowledgeGraph& g, const GroundedQuery& q);

// All groundings placing `answer` at V_?, at most `cap` of them.
GroundingSet enumerate_groundings(const KnowledgeGraph& g, const GroundedQuery& q,
                                  VertexId answer, std::size_t cap = kDefaultGroundingCap);

// Anchors plus every assigned vertex across the groundings.
VertexSet chain_vertices(const GroundingSet& gs, const GroundedQuery& q);

// The query's projection atomics instantiated by one grounding, in
// post-order of the projection nodes.
std::vector<Edge> computational_atomics(const GroundedQuery& q, const Grounding& grounding);

}  // namespace ceqa
