#pragma once

// Implicit occurrence and temporal constraints carried by discourse
// relations, and native deciders for both families.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ceqa/kg_store.hpp"
#include "ceqa/query_lang.hpp"
#include "ceqa/symbolic_exec.hpp"

namespace ceqa {

// Propositional formula over occurrence variables eta(v).
class Formula {
 public:
  enum class Op : std::uint8_t { True, Var, Not, And, Or, Implies, Iff };

  Formula() = default;  // True
  static Formula truth() { return {}; }
  static Formula var(VertexId v);
  static Formula make(Op op, std::vector<Formula> args);

  Op op() const { return op_; }
  VertexId variable() const { return var_; }
  const std::vector<Formula>& args() const { return args_; }

  bool evaluate(const std::function<bool(VertexId)>& value) const;
  // Distinct variables, ascending.
  std::vector<VertexId> variables() const;

  friend bool operator==(const Formula&, const Formula&) = default;

 private:
  void collect(std::vector<VertexId>& out) const;

  Op op_ = Op::True;
  VertexId var_ = 0;
  std::vector<Formula> args_;
};

inline Formula eta(VertexId v) { return Formula::var(v); }
Formula operator!(Formula f);
Formula operator&&(Formula a, Formula b);  // flattens nested conjunctions
Formula operator||(Formula a, Formula b);
Formula implies(Formula a, Formula b);
Formula iff(Formula a, Formula b);

using VertexNamer = std::function<std::string(VertexId)>;
std::string to_string(const Formula& f, const VertexNamer& name);

// Before(a, b): a strictly precedes b. Same is stored smaller id first.
struct TemporalConstraint {
  enum class Kind : std::uint8_t { Before, Same };
  Kind kind = Kind::Before;
  VertexId a = 0;
  VertexId b = 0;

  static TemporalConstraint before(VertexId a, VertexId b) { return {Kind::Before, a, b}; }
  static TemporalConstraint after(VertexId a, VertexId b) { return {Kind::Before, b, a}; }
  static TemporalConstraint same(VertexId a, VertexId b) {
    return {Kind::Same, std::min(a, b), std::max(a, b)};
  }

  friend bool operator==(const TemporalConstraint&, const TemporalConstraint&) = default;
};

std::string to_string(const TemporalConstraint& t, const VertexNamer& name);

struct DerivedConstraints {
  Formula occurrence;
  std::vector<TemporalConstraint> temporal;
};

// Row lookup of the relation -> constraint table for one concrete atomic.
DerivedConstraints derive(const Edge& atomic);

struct ConstraintSet {
  std::vector<Formula> occurrence;  // conjunction
  std::vector<TemporalConstraint> temporal;
};

// Computational atomics of `q` under `grounding`, then the informational ones.
ConstraintSet derive_for_grounding(const GroundedQuery& q,
                                   std::span<const InformationalAtomic> info,
                                   const Grounding& grounding);

struct SatOptions {
  std::size_t max_variables = 64;  // occurrence variables, auxiliaries excluded
};

using OccurrenceModel = std::vector<std::pair<VertexId, bool>>;
using Timeline = std::vector<std::pair<VertexId, int>>;  // event -> integer timestamp

// Tseitin CNF + DPLL with unit propagation. Throws when the variable
// limit is exceeded.
std::optional<OccurrenceModel> solve_occurrence(std::span<const Formula> conjunction,
                                                const SatOptions& opts = {});
bool sat_occurrence(std::span<const Formula> conjunction, const SatOptions& opts = {});

// Union-find on Same, then acyclicity of the strict order over classes.
std::optional<Timeline> solve_temporal(std::span<const TemporalConstraint> constraints);
bool feasible_temporal(std::span<const TemporalConstraint> constraints);

// Exhaustive references: truth tables (<= 20 variables) and every weak
// ordering of the events (<= 6 events).
bool oracle_sat(std::span<const Formula> conjunction);
bool oracle_temporal(std::span<const TemporalConstraint> constraints);

enum class VerdictStatus : std::uint8_t { Valid, OccurrenceContradiction, TemporalContradiction };
std::string_view status_name(VerdictStatus s);

struct Verdict {
  VerdictStatus status = VerdictStatus::Valid;
  std::optional<Grounding> witness;  // present iff Valid
  std::optional<OccurrenceModel> occurrence_model;
  std::optional<Timeline> timeline;
  // Grounding enumeration was truncated and no valid grounding was found.
  bool possibly_incomplete = false;
  // Neither family failed on every grounding (some groundings failed only
  // occurrence, others only temporal).
  bool mixed = false;
};

struct CheckOptions {
  std::size_t grounding_cap = kDefaultGroundingCap;
  SatOptions sat;
};

// Valid iff some grounding satisfies both families.
Verdict check_answer(const KnowledgeGraph& g, const GroundedQuery& q,
                     std::span<const InformationalAtomic> info, VertexId answer,
                     const CheckOptions& opts = {});

}  // namespace ceqa
