#pragma once

// One relation-table row: name, occurrence formula, temporal constraints.

#include <string>

#include "ceqa/constraint_engine.hpp"

namespace ceqa::testing {

inline std::string v12(VertexId v) { return "V" + std::to_string(v + 1); }

inline std::string render_row(RelationType r) {
  auto d = derive({0, r, 1});
  std::string temporal = "-";
  if (!d.temporal.empty()) {
    temporal.clear();
    for (std::size_t i = 0; i < d.temporal.size(); ++i)
      temporal += (i ? " & " : "") + to_string(d.temporal[i], v12);
  }
  return std::string(relation_name(r)) + "\t" + to_string(d.occurrence, v12) + "\t" + temporal;
}

}  // namespace ceqa::testing
