#include "ceqa/constraint_engine.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>

namespace ceqa {

Formula Formula::var(VertexId v) {
  Formula f;
  f.op_ = Op::Var;
  f.var_ = v;
  return f;
}

Formula Formula::make(Op op, std::vector<Formula> args) {
  Formula f;
  f.op_ = op;
  f.args_ = std::move(args);
  return f;
}

bool Formula::evaluate(const std::function<bool(VertexId)>& value) const {
  switch (op_) {
    case Op::True: return true;
    case Op::Var: return value(var_);
    case Op::Not: return !args_[0].evaluate(value);
    case Op::And:
      return std::all_of(args_.begin(), args_.end(), [&](const Formula& f) { return f.evaluate(value); });
    case Op::Or:
      return std::any_of(args_.begin(), args_.end(), [&](const Formula& f) { return f.evaluate(value); });
    case Op::Implies: return !args_[0].evaluate(value) || args_[1].evaluate(value);
    case Op::Iff: return args_[0].evaluate(value) == args_[1].evaluate(value);
  }
  return false;
}

void Formula::collect(std::vector<VertexId>& out) const {
  if (op_ == Op::Var) out.push_back(var_);
  for (const auto& a : args_) a.collect(out);
}

std::vector<VertexId> Formula::variables() const {
  std::vector<VertexId> out;
  collect(out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Formula operator!(Formula f) { return Formula::make(Formula::Op::Not, {std::move(f)}); }

Formula operator&&(Formula a, Formula b) {
  std::vector<Formula> args;
  for (auto* f : {&a, &b}) {
    if (f->op() == Formula::Op::And) args.insert(args.end(), f->args().begin(), f->args().end());
    else args.push_back(std::move(*f));
  }
  return Formula::make(Formula::Op::And, std::move(args));
}

Formula operator||(Formula a, Formula b) {
  return Formula::make(Formula::Op::Or, {std::move(a), std::move(b)});
}

Formula implies(Formula a, Formula b) {
  return Formula::make(Formula::Op::Implies, {std::move(a), std::move(b)});
}

Formula iff(Formula a, Formula b) {
  return Formula::make(Formula::Op::Iff, {std::move(a), std::move(b)});
}

std::string to_string(const Formula& f, const VertexNamer& name) {
  using Op = Formula::Op;
  auto sub = [&](const Formula& g) {
    auto s = to_string(g, name);
    bool atomic = g.op() == Op::True || g.op() == Op::Var || g.op() == Op::Not;
    return atomic ? s : "(" + s + ")";
  };
  auto join = [&](std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < f.args().size(); ++i) {
      if (i) out += sep;
      out += sub(f.args()[i]);
    }
    return out;
  };
  switch (f.op()) {
    case Op::True: return "true";
    case Op::Var: return "eta(" + name(f.variable()) + ")";
    case Op::Not: return "~" + sub(f.args()[0]);
    case Op::And: return join(" & ");
    case Op::Or: return join(" | ");
    case Op::Implies: return join(" -> ");
    case Op::Iff: return join(" <-> ");
  }
  return {};
}

std::string to_string(const TemporalConstraint& t, const VertexNamer& name) {
  auto op = t.kind == TemporalConstraint::Kind::Before ? " < " : " = ";
  return "tau(" + name(t.a) + ")" + op + "tau(" + name(t.b) + ")";
}

DerivedConstraints derive(const Edge& atomic) {
  const auto h = eta(atomic.head);
  const auto t = eta(atomic.tail);
  using T = TemporalConstraint;
  switch (atomic.rel) {
    case RelationType::Precedence:
      return {h && t, {T::before(atomic.head, atomic.tail)}};
    case RelationType::Succession:
      return {h && t, {T::after(atomic.head, atomic.tail)}};
    case RelationType::Synchronous:
      return {h && t, {T::same(atomic.head, atomic.tail)}};
    case RelationType::Reason:
      return {h && t && implies(t, h), {T::after(atomic.head, atomic.tail)}};
    case RelationType::Result:
      return {h && t && implies(h, t), {T::before(atomic.head, atomic.tail)}};
    case RelationType::Condition:
      return {implies(h, t), {T::after(atomic.head, atomic.tail)}};
    case RelationType::Concession:
    case RelationType::Contrast:
    case RelationType::Conjunction:
    case RelationType::Instantiation:
      return {h && t, {}};
    case RelationType::Restatement:
      return {iff(h, t), {}};
    case RelationType::Alternative:
      return {h || t, {}};
    case RelationType::ChosenAlternative:
      return {h && !t, {}};
    case RelationType::Exception:
      return {!h && t && implies(!t, h), {}};
  }
  return {};
}

ConstraintSet derive_for_grounding(const GroundedQuery& q,
                                   std::span<const InformationalAtomic> info,
                                   const Grounding& grounding) {
  if (grounding.values.size() != static_cast<std::size_t>(q.num_variables()))
    throw Error("grounding does not cover all query variables");
  ConstraintSet out;
  auto add = [&](const Edge& e) {
    auto d = derive(e);
    out.occurrence.push_back(std::move(d.occurrence));
    out.temporal.insert(out.temporal.end(), d.temporal.begin(), d.temporal.end());
  };
  for (const auto& e : computational_atomics(q, grounding)) add(e);
  for (const auto& e : info) add(e);
  return out;
}

// ---------------------------------------------------------------------------
// Occurrence: Tseitin encoding + DPLL.

namespace {

class CnfBuilder {
 public:
  // Literals are +-(index + 1).
  int literal(const Formula& f) {
    using Op = Formula::Op;
    switch (f.op()) {
      case Op::True: {
        int x = fresh();
        clauses.push_back({x});
        return x;
      }
      case Op::Var: {
        auto [it, inserted] = user_vars.emplace(f.variable(), 0);
        if (inserted) it->second = fresh();
        return it->second;
      }
      case Op::Not:
        return -literal(f.args()[0]);
      case Op::And:
      case Op::Or: {
        bool is_and = f.op() == Op::And;
        std::vector<int> lits;
        for (const auto& a : f.args()) lits.push_back(literal(a));
        int x = fresh();
        std::vector<int> big{is_and ? x : -x};
        for (int l : lits) {
          clauses.push_back(is_and ? std::vector<int>{-x, l} : std::vector<int>{x, -l});
          big.push_back(is_and ? -l : l);
        }
        clauses.push_back(std::move(big));
        return x;
      }
      case Op::Implies: {
        int a = literal(f.args()[0]);
        int b = literal(f.args()[1]);
        int x = fresh();
        clauses.push_back({-x, -a, b});
        clauses.push_back({x, a});
        clauses.push_back({x, -b});
        return x;
      }
      case Op::Iff: {
        int a = literal(f.args()[0]);
        int b = literal(f.args()[1]);
        int x = fresh();
        clauses.push_back({-x, -a, b});
        clauses.push_back({-x, a, -b});
        clauses.push_back({x, a, b});
        clauses.push_back({x, -a, -b});
        return x;
      }
    }
    return 0;
  }

  int fresh() { return ++num_vars; }

  int num_vars = 0;
  std::map<VertexId, int> user_vars;
  std::vector<std::vector<int>> clauses;
};

class Dpll {
 public:
  Dpll(const std::vector<std::vector<int>>& clauses, int num_vars)
      : clauses_(clauses), assign_(static_cast<std::size_t>(num_vars) + 1, 0) {}

  bool solve() { return search(assign_); }
  int value(int var) const { return assign_[static_cast<std::size_t>(var)]; }

 private:
  static int lit_value(const std::vector<std::int8_t>& a, int lit) {
    auto v = a[static_cast<std::size_t>(std::abs(lit))];
    return lit > 0 ? v : -v;
  }

  // Returns false on conflict.
  bool propagate(std::vector<std::int8_t>& a) const {
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& c : clauses_) {
        int unassigned = 0, last = 0;
        bool satisfied = false;
        for (int lit : c) {
          int v = lit_value(a, lit);
          if (v > 0) {
            satisfied = true;
            break;
          }
          if (v == 0) {
            ++unassigned;
            last = lit;
          }
        }
        if (satisfied) continue;
        if (unassigned == 0) return false;
        if (unassigned == 1) {
          a[static_cast<std::size_t>(std::abs(last))] = last > 0 ? 1 : -1;
          changed = true;
        }
      }
    }
    return true;
  }

  bool search(std::vector<std::int8_t>& a) const {
    if (!propagate(a)) return false;
    int branch = 0;
    for (const auto& c : clauses_) {
      bool satisfied = false;
      int candidate = 0;
      for (int lit : c) {
        int v = lit_value(a, lit);
        if (v > 0) {
          satisfied = true;
          break;
        }
        if (v == 0 && candidate == 0) candidate = std::abs(lit);
      }
      if (!satisfied && candidate) {
        branch = candidate;
        break;
      }
    }
    if (branch == 0) return true;
    for (std::int8_t choice : {std::int8_t{1}, std::int8_t{-1}}) {
      auto trial = a;
      trial[static_cast<std::size_t>(branch)] = choice;
      if (search(trial)) {
        a = std::move(trial);
        return true;
      }
    }
    return false;
  }

  const std::vector<std::vector<int>>& clauses_;
  std::vector<std::int8_t> assign_;
};

std::size_t count_variables(std::span<const Formula> conjunction) {
  std::vector<VertexId> vars;
  for (const auto& f : conjunction) {
    auto v = f.variables();
    vars.insert(vars.end(), v.begin(), v.end());
  }
  std::sort(vars.begin(), vars.end());
  return static_cast<std::size_t>(std::unique(vars.begin(), vars.end()) - vars.begin());
}

}  // namespace

std::optional<OccurrenceModel> solve_occurrence(std::span<const Formula> conjunction,
                                                const SatOptions& opts) {
  if (count_variables(conjunction) > opts.max_variables)
    throw Error("occurrence formula exceeds the variable limit of " +
                std::to_string(opts.max_variables));
  CnfBuilder cnf;
  for (const auto& f : conjunction) {
    int lit = cnf.literal(f);
    cnf.clauses.push_back({lit});
  }
  Dpll solver(cnf.clauses, cnf.num_vars);
  if (!solver.solve()) return std::nullopt;
  OccurrenceModel model;
  for (auto [v, idx] : cnf.user_vars) model.emplace_back(v, solver.value(idx) > 0);
  return model;
}

bool sat_occurrence(std::span<const Formula> conjunction, const SatOptions& opts) {
  return solve_occurrence(conjunction, opts).has_value();
}

// ---------------------------------------------------------------------------
// Temporal: union-find + Kahn's algorithm.

std::optional<Timeline> solve_temporal(std::span<const TemporalConstraint> constraints) {
  std::map<VertexId, std::size_t> index;
  for (const auto& c : constraints) {
    index.emplace(c.a, 0);
    index.emplace(c.b, 0);
  }
  std::size_t n = 0;
  for (auto& [v, i] : index) i = n++;

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& c : constraints)
    if (c.kind == TemporalConstraint::Kind::Same) parent[find(index[c.a])] = find(index[c.b]);

  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& c : constraints) {
    if (c.kind != TemporalConstraint::Kind::Before) continue;
    auto a = find(index[c.a]);
    auto b = find(index[c.b]);
    if (a == b) return std::nullopt;
    succ[a].push_back(b);
    ++indegree[b];
  }

  std::vector<int> level(n, 0);
  std::queue<std::size_t> ready;
  std::size_t roots = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (find(i) == i) {
      ++roots;
      if (indegree[i] == 0) ready.push(i);
    }
  std::size_t processed = 0;
  while (!ready.empty()) {
    auto x = ready.front();
    ready.pop();
    ++processed;
    for (auto y : succ[x]) {
      level[y] = std::max(level[y], level[x] + 1);
      if (--indegree[y] == 0) ready.push(y);
    }
  }
  if (processed != roots) return std::nullopt;

  Timeline out;
  for (auto [v, i] : index) out.emplace_back(v, level[find(i)]);
  return out;
}

bool feasible_temporal(std::span<const TemporalConstraint> constraints) {
  return solve_temporal(constraints).has_value();
}

// ---------------------------------------------------------------------------
// Exhaustive oracles.

bool oracle_sat(std::span<const Formula> conjunction) {
  std::vector<VertexId> vars;
  for (const auto& f : conjunction) {
    auto v = f.variables();
    vars.insert(vars.end(), v.begin(), v.end());
  }
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
  if (vars.size() > 20) throw Error("oracle_sat limited to 20 variables");

  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << vars.size()); ++mask) {
    auto value = [&](VertexId v) {
      auto pos = std::lower_bound(vars.begin(), vars.end(), v) - vars.begin();
      return ((mask >> pos) & 1U) != 0;
    };
    if (std::all_of(conjunction.begin(), conjunction.end(),
                    [&](const Formula& f) { return f.evaluate(value); }))
      return true;
  }
  return false;
}

bool oracle_temporal(std::span<const TemporalConstraint> constraints) {
  std::vector<VertexId> events;
  for (const auto& c : constraints) {
    events.push_back(c.a);
    events.push_back(c.b);
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  if (events.size() > 6) throw Error("oracle_temporal limited to 6 events");

  // Every weak ordering is realised by some rank vector in [0, n)^n.
  const std::size_t n = events.size();
  std::vector<std::size_t> rank(n, 0);
  auto pos = [&](VertexId v) {
    return static_cast<std::size_t>(std::lower_bound(events.begin(), events.end(), v) - events.begin());
  };
  for (;;) {
    bool ok = true;
    for (const auto& c : constraints) {
      auto ra = rank[pos(c.a)];
      auto rb = rank[pos(c.b)];
      if (c.kind == TemporalConstraint::Kind::Before ? !(ra < rb) : ra != rb) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
    std::size_t i = 0;
    while (i < n && ++rank[i] == n) rank[i++] = 0;
    if (i == n) return false;
  }
}

// ---------------------------------------------------------------------------

std::string_view status_name(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::Valid: return "Valid";
    case VerdictStatus::OccurrenceContradiction: return "OccurrenceContradiction";
    case VerdictStatus::TemporalContradiction: return "TemporalContradiction";
  }
  return {};
}

Verdict check_answer(const KnowledgeGraph& g, const GroundedQuery& q,
                     std::span<const InformationalAtomic> info, VertexId answer,
                     const CheckOptions& opts) {
  auto groundings = enumerate_groundings(g, q, answer, opts.grounding_cap);
  bool occurrence_fails_all = true;
  bool temporal_fails_all = true;
  for (const auto& gr : groundings.groundings) {
    auto cs = derive_for_grounding(q, info, gr);
    auto model = solve_occurrence(cs.occurrence, opts.sat);
    auto timeline = solve_temporal(cs.temporal);
    if (model && timeline) {
      Verdict v;
      v.witness = gr;
      v.occurrence_model = std::move(model);
      v.timeline = std::move(timeline);
      return v;
    }
    occurrence_fails_all &= !model.has_value();
    temporal_fails_all &= !timeline.has_value();
  }
  Verdict v;
  v.possibly_incomplete = groundings.truncated;
  if (occurrence_fails_all) {
    v.status = VerdictStatus::OccurrenceContradiction;
  } else if (temporal_fails_all) {
    v.status = VerdictStatus::TemporalContradiction;
  } else {
    v.status = VerdictStatus::OccurrenceContradiction;
    v.mixed = true;
  }
  return v;
}

}  // namespace ceqa
