#pragma once

// Query structures in the Lisp-like comma syntax:
//   type:     node := (e) | (p,node) | (i,node,node[,node...])
//   grounded: node := (e,<text>) | (p,<Relation>,node) | (i,node,node[,...])
// Vertex text inside (e,...) is written bare unless it contains one of
// `(),"\`, in which case it is double-quoted with backslash escapes.

#include <string>
#include <string_view>
#include <vector>

#include "ceqa/kg_store.hpp"
#include "ceqa/types.hpp"

namespace ceqa {

enum class NodeOp : std::uint8_t { Anchor, Projection, Intersection };

struct QueryType {
  NodeOp op = NodeOp::Anchor;
  std::vector<QueryType> children;

  static QueryType anchor() { return {}; }
  static QueryType projection(QueryType child);
  static QueryType intersection(std::vector<QueryType> children);

  friend bool operator==(const QueryType&, const QueryType&) = default;
};

QueryType parse_query_type(std::string_view s);
std::string to_string(const QueryType& t);

struct TypeStats {
  int anchors = 0;
  int depth = 0;  // max projections on a root-to-leaf path
  friend bool operator==(const TypeStats&, const TypeStats&) = default;
};
TypeStats stats(const QueryType& t);

// Number of nodes (anchors + operators).
std::size_t node_count(const QueryType& t);

struct GroundedNode {
  NodeOp op = NodeOp::Anchor;
  VertexId anchor = 0;                          // Anchor only
  RelationType rel = RelationType::Precedence;  // Projection only
  std::vector<GroundedNode> children;
  int variable = -1;  // -1 on anchors; 0 is the target V_?

  friend bool operator==(const GroundedNode&, const GroundedNode&) = default;
};

GroundedNode make_anchor(VertexId v);
GroundedNode make_projection(RelationType rel, GroundedNode child);
GroundedNode make_intersection(std::vector<GroundedNode> children);

// A grounded query with variables labelled. Non-anchor children of an
// intersection share its variable; every other operator node introduces
// one. The root is V_?; the rest are V_1..V_k in post-order of first use.
class GroundedQuery {
 public:
  GroundedQuery() : GroundedQuery(make_anchor(0)) {}
  explicit GroundedQuery(GroundedNode root);

  const GroundedNode& root() const { return root_; }
  // Includes the target when the root is an operator; 0 for an anchor root.
  int num_variables() const { return num_variables_; }
  static std::string label(int variable);

  std::vector<VertexId> anchors() const;

  friend bool operator==(const GroundedQuery&, const GroundedQuery&) = default;

 private:
  GroundedNode root_;
  int num_variables_ = 0;
};

QueryType erase(const GroundedQuery& q);
std::string to_string(const GroundedQuery& q, const KnowledgeGraph& g);
GroundedQuery parse_grounded(std::string_view s, const KnowledgeGraph& g);

// Variable-free edge carried alongside a query.
using InformationalAtomic = Edge;

enum class ConstraintFamily : std::uint8_t { Occurrence, Temporal };
enum class SplitName : std::uint8_t { Train, Valid, Test };

std::string_view family_name(ConstraintFamily f);
std::string_view split_name(SplitName s);
SplitName parse_split_name(std::string_view s);

struct QueryInstance {
  GroundedQuery query;
  std::vector<InformationalAtomic> info_atomics;
  std::vector<VertexId> answers;                // sorted
  std::vector<VertexId> contradictory_answers;  // sorted
  ConstraintFamily family = ConstraintFamily::Occurrence;
  SplitName split = SplitName::Train;

  std::string type_string() const { return to_string(erase(query)); }
  friend bool operator==(const QueryInstance&, const QueryInstance&) = default;
};

// One JSON object per line; field order type, query, info_atomics, answers,
// contradictory_answers, family, split. Vertices are written as text.
std::string serialize_instance(const QueryInstance& q, const KnowledgeGraph& g);
QueryInstance parse_instance(std::string_view line, const KnowledgeGraph& g);

}  // namespace ceqa
