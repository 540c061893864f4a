#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "ceqa/sampler.hpp"
#include "ceqa/train_eval.hpp"
#include "support.hpp"

using namespace ceqa;

namespace {

struct SmallData {
  GraphSplit split;
  Dataset data;
};

const SmallData& small_data() {
  static const SmallData d = [] {
    SyntheticGraphConfig g;
    g.num_vertices = 80;
    g.num_edges = 480;
    g.num_clusters = 4;
    g.seed = 2;
    auto split = split_edges(make_synthetic_graph(g), {}, 2);
    auto cfg = SamplerConfig::from_types(default_query_types(), 4);
    cfg.seed = 5;
    auto data = generate_dataset(split, cfg);
    return SmallData{std::move(split), std::move(data)};
  }();
  return d;
}

// Denser graph whose test split covers every evaluation type.
const SmallData& wide_data() {
  static const SmallData d = [] {
    SyntheticGraphConfig g;
    g.num_vertices = 500;
    g.num_edges = 10000;
    g.num_clusters = 50;
    g.tail_skew = 3;
    g.seed = 6;
    auto split = split_edges(make_synthetic_graph(g), {}, 6);
    auto cfg = SamplerConfig::from_types(default_query_types(), 10);
    cfg.plans[0].count_per_type = 1;
    cfg.plans[1].count_per_type = 1;
    cfg.seed = 6;
    auto data = generate_dataset(split, cfg);
    return SmallData{std::move(split), std::move(data)};
  }();
  return d;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.batch = 16;
  cfg.epochs = 3;
  cfg.lr = 0.01;
  cfg.seed = 4;
  return cfg;
}

bool same(const nn::ModelParams<double>& a, const nn::ModelParams<double>& b) {
  std::vector<nn::Matrix<double>> x, y;
  a.for_each_block([&](const std::string&, auto m) { x.emplace_back(m); });
  b.for_each_block([&](const std::string&, auto m) { y.emplace_back(m); });
  return x == y;
}

}  // namespace

TEST_SUITE("train_eval") {

TEST_CASE("Adam matches a scalar reference on a quadratic") {
  auto p = nn::ModelParams<double>::zeros(1, 1);
  p.for_each_block([](const std::string&, auto m) { m.setConstant(1.0); });
  Adam<double> adam(p, 0.1);
  double x = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 10; ++t) {
    auto g = nn::ModelParams<double>::zeros(1, 1);
    g.for_each_block([&](const std::string&, auto b) { b.setConstant(2 * (x - 3)); });
    adam.step(p, g);
    const double grad = 2 * (x - 3);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    p.for_each_block([&](const std::string&, auto b) { CHECK(std::abs(b(0, 0) - x) < 1e-12); });
  }
  CHECK(adam.steps() == 10);
}

TEST_CASE("rank examples") {
  nn::Vector<double> s(3);
  s << 0.9, 0.95, 0.5;
  CHECK(rank_targets<double>(s, {0}, {}) == std::vector<std::size_t>{2});
  CHECK(rank_targets<double>(s, {0}, {0, 1}) == std::vector<std::size_t>{1});
  CHECK(rank_targets<double>(s, {1}, {}) == std::vector<std::size_t>{1});
  nn::Vector<double> tie(2);
  tie << 0.5, 0.5;
  CHECK(rank_targets<double>(tie, {0}, {}) == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(rank_targets<double>(tie, {5}, {}), Error);
}

TEST_CASE("hits and reciprocal rank") {
  std::vector<std::size_t> ranks = {1, 3};
  CHECK(hits_at_k(ranks, 1) == doctest::Approx(0.5));
  CHECK(hits_at_k(ranks, 3) == doctest::Approx(1.0));
  CHECK(mrr(ranks) == doctest::Approx(2.0 / 3.0));
  std::vector<std::size_t> bad = {0};
  CHECK_THROWS_AS(mrr(bad), Error);
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> r(1 + rng.uniform_index(10));
    for (auto& x : r) x = 1 + rng.uniform_index(20);
    const double h1 = hits_at_k(r, 1), h3 = hits_at_k(r, 3), m = mrr(r);
    CHECK(h1 <= h3);
    CHECK(h1 <= m + 1e-12);
    CHECK(m <= 1.0);
    CHECK(m > 0.0);
  }
}

TEST_CASE("adding a lower-scoring vertex leaves ranks unchanged") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    nn::Vector<double> s(12);
    for (Eigen::Index i = 0; i < 12; ++i) s(i) = rng.uniform01();
    VertexSet targets = {1, 4};
    auto base = rank_targets<double>(s, targets, {1, 4, 7});
    nn::Vector<double> more(13);
    more << s, s.minCoeff() - 1.0;
    CHECK(rank_targets<double>(more, targets, {1, 4, 7}) == base);
  }
}

TEST_CASE("reciprocal rank under random scores matches its expectation") {
  const std::size_t n = 50, trials = 4000;
  double e = 0, e2 = 0;
  for (std::size_t r = 1; r <= n; ++r) {
    e += 1.0 / static_cast<double>(r * n);
    e2 += 1.0 / static_cast<double>(r * r * n);
  }
  const double sigma = std::sqrt((e2 - e * e) / static_cast<double>(trials));
  Rng rng(31);
  std::vector<std::size_t> ranks;
  for (std::size_t t = 0; t < trials; ++t) {
    nn::Vector<double> s(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform01();
    ranks.push_back(rank_targets<double>(s, {7}, {})[0]);
  }
  CHECK(std::abs(mrr(ranks) - e) < 3 * sigma);
}

TEST_CASE("untrained model ranks like a uniform shuffle") {
  const auto& d = wide_data();
  const auto& test = d.data.records[static_cast<std::size_t>(SplitName::Test)];
  auto queries = eval_targets(test, d.split.valid);
  const auto nv = d.split.test.num_vertices();
  // Per query: candidate pool |V| - |known| + 1, E[1/R] = H_N / N.
  double expected = 0, variance = 0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    if (q.targets.empty()) continue;
    const auto pool = nv - q.record->answers.size() + 1;
    double e = 0, e2 = 0;
    for (std::size_t r = 1; r <= pool; ++r) {
      e += 1.0 / static_cast<double>(r * pool);
      e2 += 1.0 / static_cast<double>(r * r * pool);
    }
    expected += e;
    variance += e2 - e * e;
    ++n;
  }
  REQUIRE(n > 50);
  expected /= static_cast<double>(n);
  const double sigma = std::sqrt(variance) / static_cast<double>(n);
  std::vector<double> observed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto params = nn::init_params<double>(static_cast<Eigen::Index>(nv), 16, 40 + seed);
    observed.push_back(evaluate<double>(queries, params).find("all", "all")->metrics.mrr);
  }
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / 3.0;
  CAPTURE(expected);
  CAPTURE(mean);
  CHECK(std::abs(mean - expected) < 3 * sigma);
}

TEST_CASE("targets drop answers already valid on the smaller graph") {
  const auto& g = testing::figure_graph();
  auto q = parse_grounded(testing::kFigureQuery, g);
  auto info = testing::figure_info(g);
  auto label = label_query(g, q, std::vector<InformationalAtomic>{info[0]});
  REQUIRE(label);
  QueryInstance rec{q, {info[0]}, label->answers, label->contradictory, label->family, SplitName::Test};
  auto staff = g.id_of("Staff is new");
  std::vector<std::string> texts;
  for (VertexId v = 0; v < g.num_vertices(); ++v) texts.push_back(g.text(v));
  std::vector<Edge> edges;
  for (const auto& e : g.edges())
    if (e.tail != staff) edges.push_back(e);
  KnowledgeGraph smaller(texts, edges);
  std::vector<QueryInstance> recs = {rec};
  auto eq = eval_targets(recs, smaller);
  REQUIRE(eq.size() == 1);
  CHECK(eq[0].targets == VertexSet{staff});
  CHECK(eq[0].record == &recs[0]);
  CHECK(eval_targets(recs, g)[0].targets.empty());
}

TEST_CASE("evaluation report layout") {
  const auto& d = wide_data();
  const auto& test = d.data.records[static_cast<std::size_t>(SplitName::Test)];
  REQUIRE_FALSE(test.empty());
  auto queries = eval_targets(test, d.split.valid);
  auto params = nn::init_params<double>(static_cast<Eigen::Index>(d.split.test.num_vertices()), 8, 3);
  auto res = evaluate<double>(queries, params);
  std::set<std::string> expected;
  std::size_t nonempty = 0;
  for (const auto& q : queries)
    if (!q.targets.empty()) {
      expected.insert(q.record->type_string());
      ++nonempty;
    }
  CHECK(res.skipped == queries.size() - nonempty);
  std::set<std::string> seen;
  std::size_t type_total = 0;
  bool in_type_rows = true;
  for (const auto& row : res.rows) {
    if (row.type == "all") {
      in_type_rows = false;
      continue;
    }
    CHECK(in_type_rows);
    seen.insert(row.type);
    type_total += row.n;
  }
  CHECK(seen == expected);
  CHECK(expected.size() == 15);
  REQUIRE(res.find("all", "all"));
  CHECK(res.rows.back().family == "all");
  CHECK(res.find("all", "all")->n == nonempty);
  CHECK(type_total == nonempty);
  CHECK(evaluate<double>(queries, params, {}, 3).rows.size() == res.rows.size());

  std::ostringstream out;
  write_report(out, res);
  CHECK(out.str().rfind("family\ttype\tn\thit1\thit3\tmrr\n", 0) == 0);
}

TEST_CASE("averaging results") {
  EvalResult a, b;
  a.rows = {{"all", "all", 4, {0.5, 1.0, 0.75}}};
  b.rows = {{"all", "all", 4, {0.0, 0.5, 0.25}}};
  std::vector<EvalResult> runs = {a, b};
  auto avg = average_results(runs);
  CHECK(avg.rows[0].metrics.hit1 == doctest::Approx(0.25));
  CHECK(avg.rows[0].metrics.hit3 == doctest::Approx(0.75));
  CHECK(avg.rows[0].metrics.mrr == doctest::Approx(0.5));
  b.rows[0].type = "other";
  runs = {a, b};
  CHECK_THROWS_AS(average_results(runs), Error);
  CHECK_THROWS_AS(average_results({}), Error);
}

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.grid_search = true;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.lr = 0.0005;
  cfg.batch = 256;
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto& d = small_data();
  const auto& train_recs = d.data.records[0];
  auto cfg = tiny_config();
  cfg.epochs = 12;
  auto a = train<double>(train_recs, d.split.train, cfg);
  REQUIRE(a.loss_curve.size() == 12);
  CHECK(a.loss_curve.back() < a.loss_curve.front());
  CHECK(a.params.all_finite());
  auto b = train<double>(train_recs, d.split.train, cfg);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(same(a.params, b.params));
  auto f = train<float>(train_recs, d.split.train, cfg);
  CHECK(f.params.all_finite());
  CHECK(std::abs(f.loss_curve.front() - a.loss_curve.front()) < 1e-3);
}

TEST_CASE("no_memory equals training on records without atomics") {
  const auto& d = small_data();
  auto recs = d.data.records[0];
  auto cfg = tiny_config();
  cfg.encoder.ablation = nn::Ablation::NoMemory;
  auto off = train<double>(recs, d.split.train, cfg);
  for (auto& r : recs) r.info_atomics.clear();
  cfg.encoder.ablation = nn::Ablation::None;
  auto bare = train<double>(recs, d.split.train, cfg);
  CHECK(off.loss_curve == bare.loss_curve);
  CHECK(same(off.params, bare.params));
}

TEST_CASE("random constraints keep counts and come from the graph") {
  const auto& d = small_data();
  const auto& recs = d.data.records[0];
  auto shuffled = randomize_constraints(recs, d.split.train, 9);
  REQUIRE(shuffled.size() == recs.size());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(shuffled[i].info_atomics.size() == recs[i].info_atomics.size());
    for (const auto& a : shuffled[i].info_atomics) CHECK(d.split.train.has_edge(a.head, a.rel, a.tail));
    changed += shuffled[i].info_atomics != recs[i].info_atomics;
    CHECK(shuffled[i].answers == recs[i].answers);
  }
  CHECK(changed > 0);

  auto cfg = tiny_config();
  cfg.encoder.ablation = nn::Ablation::RandomConstraints;
  auto ablated = train<double>(recs, d.split.train, cfg);
  cfg.encoder.ablation = nn::Ablation::None;
  auto manual = train<double>(randomize_constraints(recs, d.split.train, mix_seed(cfg.seed, 1)), d.split.train, cfg);
  CHECK(ablated.loss_curve == manual.loss_curve);
}

}  // TEST_SUITE
