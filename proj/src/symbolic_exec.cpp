#include "ceqa/symbolic_exec.hpp"

#include <algorithm>
#include <unordered_map>

namespace ceqa {

namespace {

using NodeSets = std::unordered_map<const GroundedNode*, VertexSet>;

VertexSet intersect_sorted(const VertexSet& a, const VertexSet& b) {
  VertexSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

const VertexSet& evaluate(const KnowledgeGraph& g, const GroundedNode& n, NodeSets& sets) {
  VertexSet result;
  switch (n.op) {
    case NodeOp::Anchor:
      if (n.anchor >= g.num_vertices()) throw Error("anchor not in graph");
      result = {n.anchor};
      break;
    case NodeOp::Projection: {
      for (auto v : evaluate(g, n.children.front(), sets)) {
        auto succ = g.successors(v, n.rel);
        result.insert(result.end(), succ.begin(), succ.end());
      }
      std::sort(result.begin(), result.end());
      result.erase(std::unique(result.begin(), result.end()), result.end());
      break;
    }
    case NodeOp::Intersection: {
      std::vector<const VertexSet*> children;
      for (const auto& ch : n.children) children.push_back(&evaluate(g, ch, sets));
      std::sort(children.begin(), children.end(),
                [](const VertexSet* a, const VertexSet* b) { return a->size() < b->size(); });
      result = *children.front();
      for (std::size_t i = 1; i < children.size() && !result.empty(); ++i)
        result = intersect_sorted(result, *children[i]);
      break;
    }
  }
  return sets[&n] = std::move(result);
}

class GroundingSearch {
 public:
  GroundingSearch(const KnowledgeGraph& g, const NodeSets& sets, std::size_t cap)
      : g_(g), sets_(sets), cap_(cap) {}

  void run(const GroundedNode& root, VertexId answer, int num_variables) {
    current_.values.assign(static_cast<std::size_t>(num_variables), 0);
    if (root.op != NodeOp::Anchor) current_.values[0] = answer;
    work_.push_back({&root, answer});
    search();
  }

  GroundingSet result() && { return {std::move(found_), truncated_}; }

 private:
  bool contains(const GroundedNode* n, VertexId v) const {
    const auto& s = sets_.at(n);
    return std::binary_search(s.begin(), s.end(), v);
  }

  void search() {
    if (truncated_) return;
    if (work_.empty()) {
      if (found_.size() == cap_) {
        truncated_ = true;
        return;
      }
      found_.push_back(current_);
      return;
    }
    auto [n, x] = work_.back();
    work_.pop_back();
    switch (n->op) {
      case NodeOp::Anchor:
        if (x == n->anchor) search();
        break;
      case NodeOp::Intersection:
        for (const auto& ch : n->children) work_.push_back({&ch, x});
        search();
        work_.resize(work_.size() - n->children.size());
        break;
      case NodeOp::Projection: {
        const auto* child = &n->children.front();
        for (auto y : g_.predecessors(x, n->rel)) {
          if (!contains(child, y)) continue;
          if (child->op != NodeOp::Anchor)
            current_.values[static_cast<std::size_t>(child->variable)] = y;
          work_.push_back({child, y});
          search();
          work_.pop_back();
          if (truncated_) break;
        }
        break;
      }
    }
    work_.push_back({n, x});
  }

  const KnowledgeGraph& g_;
  const NodeSets& sets_;
  std::size_t cap_;
  std::vector<std::pair<const GroundedNode*, VertexId>> work_;
  Grounding current_;
  std::vector<Grounding> found_;
  bool truncated_ = false;
};

void collect_atomics(const GroundedNode& n, const Grounding& gr, std::vector<Edge>& out) {
  for (const auto& ch : n.children) collect_atomics(ch, gr, out);
  if (n.op != NodeOp::Projection) return;
  auto value = [&](const GroundedNode& m) {
    if (m.op == NodeOp::Anchor) return m.anchor;
    auto idx = static_cast<std::size_t>(m.variable);
    if (idx >= gr.values.size()) throw Error("grounding does not cover " + GroundedQuery::label(m.variable));
    return gr.values[idx];
  };
  out.push_back({value(n.children.front()), n.rel, value(n)});
}

}  // namespace

VertexSet answer_set(const KnowledgeGraph& g, const GroundedQuery& q) {
  NodeSets sets;
  return evaluate(g, q.root(), sets);
}

GroundingSet enumerate_groundings(const KnowledgeGraph& g, const GroundedQuery& q,
                                  VertexId answer, std::size_t cap) {
  NodeSets sets;
  const auto& answers = evaluate(g, q.root(), sets);
  if (!std::binary_search(answers.begin(), answers.end(), answer))
    throw Error("vertex " + std::to_string(answer) + " is not an answer of the query");
  GroundingSearch search(g, sets, cap);
  search.run(q.root(), answer, q.num_variables());
  return std::move(search).result();
}

VertexSet chain_vertices(const GroundingSet& gs, const GroundedQuery& q) {
  if (gs.groundings.empty()) throw Error("empty grounding set");
  VertexSet out = q.anchors();
  for (const auto& gr : gs.groundings) out.insert(out.end(), gr.values.begin(), gr.values.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Edge> computational_atomics(const GroundedQuery& q, const Grounding& grounding) {
  std::vector<Edge> out;
  collect_atomics(q.root(), grounding, out);
  return out;
}

}  // namespace ceqa
