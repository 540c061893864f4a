#include "ceqa/query_lang.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include <json.hpp>

namespace ceqa {

namespace {

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  bool accept(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }
  // Raw token up to (not including) one of `stops`.
  std::string_view token(std::string_view stops) {
    skip_ws();
    auto start = pos_;
    while (pos_ < s_.size() && stops.find(s_[pos_]) == std::string_view::npos) ++pos_;
    return s_.substr(start, pos_ - start);
  }
  std::string quoted() {
    expect('"');
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') {
        ++pos_;
        if (pos_ >= s_.size()) break;
      }
      out.push_back(s_[pos_++]);
    }
    if (pos_ >= s_.size()) fail("unterminated quoted text");
    ++pos_;
    return out;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

QueryType parse_type_node(Cursor& c) {
  c.expect('(');
  auto head_pos = c.pos();
  auto head = c.token(",)");
  QueryType t;
  if (head == "e") {
    t.op = NodeOp::Anchor;
  } else if (head == "p") {
    c.expect(',');
    t = QueryType::projection(parse_type_node(c));
  } else if (head == "i") {
    t.op = NodeOp::Intersection;
    while (c.accept(',')) t.children.push_back(parse_type_node(c));
    if (t.children.size() < 2) throw ParseError("intersection arity < 2", head_pos);
  } else {
    throw ParseError("unknown head token '" + std::string(head) + "'", head_pos);
  }
  c.expect(')');
  return t;
}

bool needs_quotes(std::string_view text) {
  return text.empty() || text.find_first_of("(),\"\\") != std::string_view::npos ||
         text.front() == ' ' || text.back() == ' ';
}

void write_text(std::string& out, std::string_view text) {
  if (!needs_quotes(text)) {
    out += text;
    return;
  }
  out.push_back('"');
  for (char ch : text) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  out.push_back('"');
}

void write_grounded(std::string& out, const GroundedNode& n, const KnowledgeGraph& g) {
  switch (n.op) {
    case NodeOp::Anchor:
      out += "(e,";
      write_text(out, g.text(n.anchor));
      out += ')';
      return;
    case NodeOp::Projection:
      out += "(p,";
      out += relation_name(n.rel);
      out += ',';
      write_grounded(out, n.children.front(), g);
      out += ')';
      return;
    case NodeOp::Intersection:
      out += "(i";
      for (const auto& ch : n.children) {
        out += ',';
        write_grounded(out, ch, g);
      }
      out += ')';
      return;
  }
}

GroundedNode parse_grounded_node(Cursor& c, const KnowledgeGraph& g) {
  c.expect('(');
  auto head_pos = c.pos();
  auto head = c.token(",)");
  GroundedNode n;
  if (head == "e") {
    c.expect(',');
    auto text_pos = c.pos();
    std::string text = c.peek() == '"' ? c.quoted() : std::string(c.token(")"));
    auto id = g.find(normalize_text(text));
    if (!id) throw ParseError("unknown eventuality '" + text + "'", text_pos);
    n = make_anchor(*id);
  } else if (head == "p") {
    c.expect(',');
    auto rel_pos = c.pos();
    auto rel_token = c.token(",)");
    auto rel = parse_relation(normalize_text(rel_token));
    if (!rel) throw ParseError("unknown relation '" + std::string(rel_token) + "'", rel_pos);
    c.expect(',');
    n = make_projection(*rel, parse_grounded_node(c, g));
  } else if (head == "i") {
    n.op = NodeOp::Intersection;
    while (c.accept(',')) n.children.push_back(parse_grounded_node(c, g));
    if (n.children.size() < 2) throw ParseError("intersection arity < 2", head_pos);
  } else {
    throw ParseError("unknown head token '" + std::string(head) + "'", head_pos);
  }
  c.expect(')');
  return n;
}

QueryType erase_node(const GroundedNode& n) {
  QueryType t;
  t.op = n.op;
  for (const auto& ch : n.children) t.children.push_back(erase_node(ch));
  return t;
}

}  // namespace

QueryType QueryType::projection(QueryType child) {
  QueryType t;
  t.op = NodeOp::Projection;
  t.children.push_back(std::move(child));
  return t;
}

QueryType QueryType::intersection(std::vector<QueryType> children) {
  if (children.size() < 2) throw Error("intersection arity < 2");
  QueryType t;
  t.op = NodeOp::Intersection;
  t.children = std::move(children);
  return t;
}

QueryType parse_query_type(std::string_view s) {
  Cursor c(s);
  auto t = parse_type_node(c);
  if (!c.at_end()) c.fail("trailing input");
  return t;
}

std::string to_string(const QueryType& t) {
  switch (t.op) {
    case NodeOp::Anchor:
      return "(e)";
    case NodeOp::Projection:
      return "(p," + to_string(t.children.front()) + ")";
    case NodeOp::Intersection: {
      std::string out = "(i";
      for (const auto& ch : t.children) out += "," + to_string(ch);
      return out + ")";
    }
  }
  return {};
}

TypeStats stats(const QueryType& t) {
  switch (t.op) {
    case NodeOp::Anchor:
      return {1, 0};
    case NodeOp::Projection: {
      auto s = stats(t.children.front());
      return {s.anchors, s.depth + 1};
    }
    case NodeOp::Intersection: {
      TypeStats out;
      for (const auto& ch : t.children) {
        auto s = stats(ch);
        out.anchors += s.anchors;
        out.depth = std::max(out.depth, s.depth);
      }
      return out;
    }
  }
  return {};
}

std::size_t node_count(const QueryType& t) {
  std::size_t n = 1;
  for (const auto& ch : t.children) n += node_count(ch);
  return n;
}

GroundedNode make_anchor(VertexId v) {
  GroundedNode n;
  n.op = NodeOp::Anchor;
  n.anchor = v;
  return n;
}

GroundedNode make_projection(RelationType rel, GroundedNode child) {
  GroundedNode n;
  n.op = NodeOp::Projection;
  n.rel = rel;
  n.children.push_back(std::move(child));
  return n;
}

GroundedNode make_intersection(std::vector<GroundedNode> children) {
  if (children.size() < 2) throw Error("intersection arity < 2");
  GroundedNode n;
  n.op = NodeOp::Intersection;
  n.children = std::move(children);
  return n;
}

GroundedQuery::GroundedQuery(GroundedNode root) : root_(std::move(root)) {
  // Pass 1: provisional classes top-down (intersection children inherit).
  int next_class = 0;
  std::function<void(GroundedNode&, int)> assign = [&](GroundedNode& n, int inherited) {
    if (n.op == NodeOp::Anchor) {
      n.variable = -1;
    } else {
      n.variable = inherited >= 0 ? inherited : next_class++;
    }
    for (auto& ch : n.children)
      assign(ch, n.op == NodeOp::Intersection ? n.variable : -1);
  };
  assign(root_, -1);

  // Pass 2: renumber in post-order, the root class becoming V_?.
  std::map<int, int> final_id;
  if (root_.op != NodeOp::Anchor) final_id[root_.variable] = 0;
  int next = 1;
  std::function<void(GroundedNode&)> renumber = [&](GroundedNode& n) {
    for (auto& ch : n.children) renumber(ch);
    if (n.op == NodeOp::Anchor) return;
    auto [it, inserted] = final_id.emplace(n.variable, next);
    if (inserted) ++next;
    n.variable = it->second;
  };
  renumber(root_);
  num_variables_ = static_cast<int>(final_id.size());
}

std::string GroundedQuery::label(int variable) {
  return variable == 0 ? std::string("V_?") : "V_" + std::to_string(variable);
}

std::vector<VertexId> GroundedQuery::anchors() const {
  std::vector<VertexId> out;
  std::function<void(const GroundedNode&)> walk = [&](const GroundedNode& n) {
    if (n.op == NodeOp::Anchor) out.push_back(n.anchor);
    for (const auto& ch : n.children) walk(ch);
  };
  walk(root_);
  return out;
}

QueryType erase(const GroundedQuery& q) { return erase_node(q.root()); }

std::string to_string(const GroundedQuery& q, const KnowledgeGraph& g) {
  std::string out;
  write_grounded(out, q.root(), g);
  return out;
}

GroundedQuery parse_grounded(std::string_view s, const KnowledgeGraph& g) {
  Cursor c(s);
  auto n = parse_grounded_node(c, g);
  if (!c.at_end()) c.fail("trailing input");
  return GroundedQuery(std::move(n));
}

std::string_view family_name(ConstraintFamily f) {
  return f == ConstraintFamily::Occurrence ? "occurrence" : "temporal";
}

std::string_view split_name(SplitName s) {
  switch (s) {
    case SplitName::Train: return "train";
    case SplitName::Valid: return "valid";
    case SplitName::Test: return "test";
  }
  return {};
}

SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::Train;
  if (s == "valid") return SplitName::Valid;
  if (s == "test") return SplitName::Test;
  throw Error("unknown split '" + std::string(s) + "'");
}

std::string serialize_instance(const QueryInstance& q, const KnowledgeGraph& g) {
  nlohmann::ordered_json j;
  j["type"] = q.type_string();
  j["query"] = to_string(q.query, g);
  auto atomics = nlohmann::ordered_json::array();
  for (const auto& a : q.info_atomics)
    atomics.push_back({g.text(a.head), relation_name(a.rel), g.text(a.tail)});
  j["info_atomics"] = std::move(atomics);
  auto texts = [&](const std::vector<VertexId>& ids) {
    auto arr = nlohmann::ordered_json::array();
    for (auto v : ids) arr.push_back(g.text(v));
    return arr;
  };
  j["answers"] = texts(q.answers);
  j["contradictory_answers"] = texts(q.contradictory_answers);
  j["family"] = family_name(q.family);
  j["split"] = split_name(q.split);
  return j.dump();
}

QueryInstance parse_instance(std::string_view line, const KnowledgeGraph& g) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid JSON record: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("record");
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw SchemaError(name);
    return j.at(name);
  };
  auto string_field = [&](const char* name) {
    const auto& v = field(name);
    if (!v.is_string()) throw SchemaError(name);
    return v.get<std::string>();
  };
  auto vertex = [&](const nlohmann::json& v, const char* name) {
    if (!v.is_string()) throw SchemaError(name);
    auto id = g.find(normalize_text(v.get<std::string>()));
    if (!id) throw SchemaError(std::string(name) + ": unknown eventuality " + v.get<std::string>());
    return *id;
  };
  auto id_list = [&](const char* name) {
    const auto& v = field(name);
    if (!v.is_array()) throw SchemaError(name);
    std::vector<VertexId> ids;
    for (const auto& x : v) ids.push_back(vertex(x, name));
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw SchemaError(name);
    return ids;
  };

  QueryInstance q;
  auto type = string_field("type");
  try {
    q.query = parse_grounded(string_field("query"), g);
  } catch (const ParseError&) {
    throw SchemaError("query");
  }
  try {
    if (erase(q.query) != parse_query_type(type)) throw SchemaError("type");
  } catch (const ParseError&) {
    throw SchemaError("type");
  }

  const auto& atomics = field("info_atomics");
  if (!atomics.is_array()) throw SchemaError("info_atomics");
  for (const auto& a : atomics) {
    if (!a.is_array() || a.size() != 3 || !a[1].is_string()) throw SchemaError("info_atomics");
    auto rel = parse_relation(a[1].get<std::string>());
    if (!rel) throw SchemaError("info_atomics");
    q.info_atomics.push_back({vertex(a[0], "info_atomics"), *rel, vertex(a[2], "info_atomics")});
  }
  q.answers = id_list("answers");
  q.contradictory_answers = id_list("contradictory_answers");
  for (auto v : q.answers)
    if (std::binary_search(q.contradictory_answers.begin(), q.contradictory_answers.end(), v))
      throw SchemaError("contradictory_answers");

  auto family = string_field("family");
  if (family == "occurrence") q.family = ConstraintFamily::Occurrence;
  else if (family == "temporal") q.family = ConstraintFamily::Temporal;
  else throw SchemaError("family");
  try {
    q.split = parse_split_name(string_field("split"));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error&) {
    throw SchemaError("split");
  }
  return q;
}

}  // namespace ceqa
