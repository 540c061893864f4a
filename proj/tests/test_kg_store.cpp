#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace ceqa;
using ceqa::testing::figure_graph;

TEST_SUITE("kg_store") {

TEST_CASE("relation names parse totally and reject everything else") {
  for (auto r : kAllRelations) CHECK(parse_relation(relation_name(r)) == r);
  CHECK_FALSE(parse_relation("FooRel"));
  CHECK_FALSE(parse_relation("reason"));
  CHECK_FALSE(parse_relation(""));
}

TEST_CASE("fixture loads with 8 vertices and 8 edges") {
  const auto& g = figure_graph();
  CHECK(g.num_vertices() == 8);
  CHECK(g.num_edges() == 8);
  CHECK(g.num_self_loops() == 0);
}

TEST_CASE("empty input gives an empty graph") {
  std::istringstream in("");
  auto g = parse_graph(in);
  CHECK(g.num_vertices() == 0);
  CHECK(g.num_edges() == 0);
}

TEST_CASE("comments and blank lines are skipped") {
  std::istringstream in("# header\n\na\tReason\tb\n   \n");
  auto g = parse_graph(in);
  CHECK(g.num_edges() == 1);
}

TEST_CASE("unknown relation is named in the error") {
  std::istringstream in("a\tReason\tb\na\tFooRel\tb\n");
  CHECK_THROWS_WITH_AS(parse_graph(in), doctest::Contains("unknown relation FooRel"), Error);
}

TEST_CASE("malformed line reports its line number") {
  std::istringstream in("a\tReason\tb\njust two\tfields\n");
  CHECK_THROWS_WITH_AS(parse_graph(in), doctest::Contains("line 2"), Error);
}

TEST_CASE("ids follow first occurrence and whitespace is normalised") {
  std::istringstream in("  x   y \tResult\tz\nz\tReason\tx y\n");
  auto g = parse_graph(in);
  CHECK(g.num_vertices() == 2);
  CHECK(g.text(0) == "x y");
  CHECK(g.id_of("z") == 1);
  CHECK(normalize_text("  a \t b  ") == "a b");
}

TEST_CASE("duplicate edges collapse and self-loops are kept") {
  std::istringstream in("a\tReason\tb\na\tReason\tb\nc\tResult\tc\n");
  auto g = parse_graph(in);
  CHECK(g.num_edges() == 2);
  CHECK(g.num_self_loops() == 1);
  CHECK(g.has_edge(2, RelationType::Result, 2));
}

TEST_CASE("successors and predecessors on the fixture") {
  const auto& g = figure_graph();
  const auto food = g.id_of("Food is bad");
  auto succ = g.successors(food, RelationType::Reason);
  std::set<std::string> names;
  for (auto v : succ) names.insert(g.text(v));
  CHECK(names == std::set<std::string>{"Staff is new", "PersonY adds ketchup", "PersonY adds soy sauce",
                                       "PersonY adds vinegar"});
  auto pred = g.predecessors(g.id_of("PersonY adds soy sauce"), RelationType::Reason);
  REQUIRE(pred.size() == 1);
  CHECK(pred[0] == food);
  CHECK(g.successors(g.id_of("Staff is new"), RelationType::Reason).empty());
  CHECK(g.predecessors(g.id_of("PersonX complains"), RelationType::Succession).empty());
  CHECK_THROWS_AS(g.successors(99, RelationType::Reason), Error);
  CHECK_THROWS_AS(g.predecessors(99, RelationType::Reason), Error);
}

TEST_CASE("index is sorted, complete, and symmetric") {
  Rng rng(3);
  auto g = testing::random_graph(40, 300, 14, rng);
  std::size_t total = 0;
  for (VertexId v = 0; v < g.num_vertices(); ++v)
    for (auto r : kAllRelations) {
      auto s = g.successors(v, r);
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
      total += s.size();
      for (auto t : s) {
        auto p = g.predecessors(t, r);
        CHECK(std::binary_search(p.begin(), p.end(), v));
      }
    }
  CHECK(total == g.num_edges());
  for (const auto& e : g.edges()) {
    auto s = g.successors(e.head, e.rel);
    CHECK(std::binary_search(s.begin(), s.end(), e.tail));
  }
}

TEST_CASE("serialise then load reproduces the edge set") {
  const auto& g = figure_graph();
  std::ostringstream out;
  write_graph(out, g);
  std::istringstream in(out.str());
  auto h = parse_graph(in);
  REQUIRE(h.num_edges() == g.num_edges());
  std::set<std::tuple<std::string, RelationType, std::string>> a, b;
  for (const auto& e : g.edges()) a.insert({g.text(e.head), e.rel, g.text(e.tail)});
  for (const auto& e : h.edges()) b.insert({h.text(e.head), e.rel, h.text(e.tail)});
  CHECK(a == b);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(10, {}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(split_sizes(3, {}) == std::array<std::size_t, 3>{2, 0, 1});
  auto s = split_sizes(141252, {});
  CHECK(s[0] + s[1] + s[2] == 141252);
}

TEST_CASE("splits are cumulative and deterministic") {
  Rng rng(11);
  auto g = testing::random_graph(50, 400, 14, rng);
  auto a = split_edges(g, {}, 5);
  auto b = split_edges(g, {}, 5);
  auto c = split_edges(g, {}, 6);
  CHECK(std::equal(a.train.edges().begin(), a.train.edges().end(), b.train.edges().begin(), b.train.edges().end()));
  CHECK_FALSE(std::equal(a.train.edges().begin(), a.train.edges().end(), c.train.edges().begin(),
                         c.train.edges().end()));
  auto sizes = split_sizes(g.num_edges(), {});
  CHECK(a.train.num_edges() == sizes[0]);
  CHECK(a.valid.num_edges() == sizes[0] + sizes[1]);
  CHECK(a.test.num_edges() == g.num_edges());
  for (const auto& e : a.train.edges()) CHECK(a.valid.has_edge(e.head, e.rel, e.tail));
  for (const auto& e : a.valid.edges()) CHECK(a.test.has_edge(e.head, e.rel, e.tail));
  CHECK(a.train.vertices() == g.vertices());
  CHECK(a.valid.vertices() == g.vertices());
}

TEST_CASE("split rejects bad ratios and tiny graphs") {
  const auto& g = figure_graph();
  CHECK_THROWS_AS(split_edges(g, {0.8, 0.3, 0.1}, 0), Error);
  CHECK_THROWS_AS(split_edges(g, {1.0, 0.0, 0.0}, 0), Error);
  KnowledgeGraph tiny({"a", "b"}, {{0, RelationType::Reason, 1}, {1, RelationType::Reason, 0}});
  CHECK_THROWS_AS(split_edges(tiny, {}, 0), Error);
}

TEST_CASE("split directory round-trips with stable ids") {
  Rng rng(2);
  auto g = testing::random_graph(30, 120, 14, rng);
  auto split = split_edges(g, {}, 1);
  auto dir = std::filesystem::temp_directory_path() / "ceqa_split_roundtrip";
  std::filesystem::remove_all(dir);
  save_split(dir, split);
  auto back = load_split(dir);
  CHECK(back.test.vertices() == g.vertices());
  CHECK(std::equal(back.train.edges().begin(), back.train.edges().end(), split.train.edges().begin(),
                   split.train.edges().end()));
  CHECK(back.valid.num_edges() == split.valid.num_edges());
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic graph is deterministic and loop-free") {
  SyntheticGraphConfig cfg;
  cfg.seed = 4;
  auto a = make_synthetic_graph(cfg);
  auto b = make_synthetic_graph(cfg);
  CHECK(a.num_vertices() == 300);
  CHECK(a.num_edges() == 1800);
  CHECK(a.num_self_loops() == 0);
  CHECK(std::equal(a.edges().begin(), a.edges().end(), b.edges().begin(), b.edges().end()));
}

}  // TEST_SUITE
