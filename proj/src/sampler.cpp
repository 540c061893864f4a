#include "ceqa/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace ceqa {

const std::vector<QueryType>& default_query_types() {
  static const std::vector<QueryType> types = [] {
    std::vector<QueryType> out;
    for (const char* s : {
             "(p,(e))",
             "(p,(p,(e)))",
             "(p,(i,(p,(e)),(p,(e))))",
             "(i,(p,(e)),(p,(e)))",
             "(i,(p,(e)),(p,(p,(e))))",
             "(i,(p,(p,(e))),(p,(p,(e))))",
             "(p,(i,(i,(p,(e)),(p,(e))),(p,(e))))",
             "(i,(p,(e)),(p,(i,(p,(e)),(p,(e)))))",
             "(i,(i,(p,(e)),(p,(e))),(p,(e)))",
             "(i,(i,(p,(e)),(p,(p,(e)))),(p,(e)))",
             "(i,(i,(p,(p,(e))),(p,(p,(e)))),(p,(e)))",
             "(i,(p,(i,(p,(e)),(p,(e)))),(p,(p,(e))))",
             "(i,(i,(p,(e)),(p,(e))),(p,(p,(e))))",
             "(i,(i,(p,(e)),(p,(p,(e)))),(p,(p,(e))))",
             "(i,(i,(p,(p,(e))),(p,(p,(e)))),(p,(p,(e))))",
         })
      out.push_back(parse_query_type(s));
    return out;
  }();
  return types;
}

SamplerConfig SamplerConfig::from_types(const std::vector<QueryType>& types,
                                        std::size_t count_per_type, int max_train_anchors,
                                        int max_eval_anchors) {
  SamplerConfig cfg;
  for (const auto& t : types) {
    auto s = stats(t);
    if (s.anchors <= max_train_anchors) cfg.plans[0].types.push_back(t);
    if (s.anchors <= max_eval_anchors) {
      cfg.plans[1].types.push_back(t);
      cfg.plans[2].types.push_back(t);
    }
  }
  for (auto& p : cfg.plans) p.count_per_type = count_per_type;
  return cfg;
}

void SamplerConfig::validate() const {
  for (const auto& p : plans)
    if (p.types.empty() || p.count_per_type == 0)
      throw Error("sampler config: every split needs at least one type and a positive count");
  for (const auto& t : plans[0].types)
    for (std::size_t s = 1; s < 3; ++s)
      if (std::find(plans[s].types.begin(), plans[s].types.end(), t) == plans[s].types.end())
        throw Error("sampler config: train type " + to_string(t) + " missing from evaluation splits");
  if (max_retries == 0 || workers == 0) throw Error("sampler config: retries and workers must be positive");
}

namespace {

std::optional<GroundedNode> sample_node(const KnowledgeGraph& g, const QueryType& t, VertexId v,
                                        Rng& rng) {
  switch (t.op) {
    case NodeOp::Anchor:
      return make_anchor(v);
    case NodeOp::Projection: {
      auto incoming = g.in_edges(v);
      if (incoming.empty()) return std::nullopt;
      const auto& e = incoming[rng.uniform_index(incoming.size())];
      auto child = sample_node(g, t.children.front(), e.head, rng);
      if (!child) return std::nullopt;
      return make_projection(e.rel, std::move(*child));
    }
    case NodeOp::Intersection: {
      std::vector<GroundedNode> children;
      for (const auto& ct : t.children) {
        auto child = sample_node(g, ct, v, rng);
        if (!child) return std::nullopt;
        children.push_back(std::move(*child));
      }
      return make_intersection(std::move(children));
    }
  }
  return std::nullopt;
}

// Intersections whose branches coincide add nothing over a single branch.
bool has_duplicate_branches(const GroundedNode& n) {
  if (n.op == NodeOp::Intersection)
    for (std::size_t i = 0; i < n.children.size(); ++i)
      for (std::size_t j = i + 1; j < n.children.size(); ++j)
        if (erase(GroundedQuery(n.children[i])) == erase(GroundedQuery(n.children[j])) &&
            GroundedQuery(n.children[i]) == GroundedQuery(n.children[j]))
          return true;
  return std::any_of(n.children.begin(), n.children.end(), has_duplicate_branches);
}

bool subset(const VertexSet& a, const VertexSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

std::optional<GroundedQuery> sample_query(const KnowledgeGraph& g, const QueryType& t, VertexId v,
                                          Rng& rng) {
  if (v >= g.num_vertices()) throw Error("seed vertex out of range");
  auto root = sample_node(g, t, v, rng);
  if (!root) return std::nullopt;
  return GroundedQuery(std::move(*root));
}

std::vector<InformationalAtomic> info_candidates(const KnowledgeGraph& g, const GroundedQuery& q,
                                                 const Grounding& seed_grounding) {
  GroundingSet single{{seed_grounding}, false};
  auto chain = chain_vertices(single, q);
  auto own = computational_atomics(q, seed_grounding);
  std::sort(own.begin(), own.end());

  std::vector<Edge> out;
  for (auto v : chain) {
    auto outgoing = g.out_edges(v);
    auto incoming = g.in_edges(v);
    out.insert(out.end(), outgoing.begin(), outgoing.end());
    out.insert(out.end(), incoming.begin(), incoming.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  out.erase(std::remove_if(out.begin(), out.end(),
                           [&](const Edge& e) { return std::binary_search(own.begin(), own.end(), e); }),
            out.end());
  return out;
}

std::vector<InformationalAtomic> attach_info_atomics(const KnowledgeGraph& g,
                                                     const GroundedQuery& q, VertexId seed_answer,
                                                     std::size_t k, Rng& rng,
                                                     std::size_t grounding_cap) {
  if (k == 0) return {};
  auto groundings = enumerate_groundings(g, q, seed_answer, grounding_cap);
  const auto& seed = groundings.groundings[rng.uniform_index(groundings.groundings.size())];
  auto pool = info_candidates(g, q, seed);
  std::vector<InformationalAtomic> out;
  for (std::size_t i = 0; i < k && !pool.empty(); ++i) {
    auto j = rng.uniform_index(pool.size());
    out.push_back(pool[j]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
  }
  return out;
}

AnswerClassification classify_answers(const KnowledgeGraph& g, const GroundedQuery& q,
                                      std::span<const InformationalAtomic> info,
                                      const CheckOptions& opts) {
  AnswerClassification out;
  for (auto a : answer_set(g, q)) {
    auto verdict = check_answer(g, q, info, a, opts);
    if (verdict.status == VerdictStatus::Valid) {
      out.valid.push_back(a);
      continue;
    }
    out.incomplete |= verdict.possibly_incomplete;
    out.mixed |= verdict.mixed;
    if (verdict.status == VerdictStatus::OccurrenceContradiction)
      out.occurrence_contradictory.push_back(a);
    else
      out.temporal_contradictory.push_back(a);
  }
  return out;
}

std::optional<QueryLabel> label_query(const KnowledgeGraph& g, const GroundedQuery& q,
                                      std::span<const InformationalAtomic> info,
                                      const CheckOptions& opts) {
  auto c = classify_answers(g, q, info, opts);
  if (c.incomplete || c.mixed || c.valid.empty()) return std::nullopt;
  bool occ = !c.occurrence_contradictory.empty();
  bool temp = !c.temporal_contradictory.empty();
  if (occ == temp) return std::nullopt;  // none, or both families
  QueryLabel label;
  label.answers = std::move(c.valid);
  label.family = occ ? ConstraintFamily::Occurrence : ConstraintFamily::Temporal;
  label.contradictory = occ ? std::move(c.occurrence_contradictory) : std::move(c.temporal_contradictory);
  return label;
}

const KnowledgeGraph& graph_for(const GraphSplit& split, SplitName name) {
  switch (name) {
    case SplitName::Train: return split.train;
    case SplitName::Valid: return split.valid;
    case SplitName::Test: return split.test;
  }
  return split.test;
}

namespace {

struct Job {
  SplitName split;
  std::size_t type_index;
  std::size_t worker;
  std::size_t quota;
  std::vector<QueryInstance> out;
  std::size_t sampled = 0;
  std::size_t seed_hits = 0;
};

void run_job(Job& job, const GraphSplit& split, const SamplerConfig& cfg) {
  const auto& plan = cfg.plans[static_cast<std::size_t>(job.split)];
  const auto& type = plan.types[job.type_index];
  const auto& g = graph_for(split, job.split);
  const KnowledgeGraph* smaller = job.split == SplitName::Valid ? &split.train
                                  : job.split == SplitName::Test ? &split.valid
                                                                 : nullptr;
  Rng rng(mix_seed(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(job.split)), job.type_index),
                   job.worker));
  CheckOptions opts;
  opts.grounding_cap = cfg.grounding_cap;
  std::set<std::string> seen;

  const std::size_t budget = job.quota * cfg.max_retries;
  for (std::size_t attempt = 0; attempt < budget && job.out.size() < job.quota; ++attempt) {
    auto v = static_cast<VertexId>(rng.uniform_index(g.num_vertices()));
    auto q = sample_query(g, type, v, rng);
    if (!q) continue;
    ++job.sampled;
    auto answers = answer_set(g, *q);
    if (!std::binary_search(answers.begin(), answers.end(), v)) continue;
    ++job.seed_hits;
    if (has_duplicate_branches(q->root())) continue;

    auto k = 1 + rng.uniform_index(cfg.max_info);
    auto info = attach_info_atomics(g, *q, v, k, rng, cfg.grounding_cap);
    if (info.empty()) continue;
    auto label = label_query(g, *q, info, opts);
    if (!label) continue;

    if (smaller && cfg.require_new_answers) {
      auto prior = classify_answers(*smaller, *q, info, opts);
      if (subset(label->answers, prior.valid)) continue;
    }

    QueryInstance inst;
    inst.query = std::move(*q);
    inst.info_atomics = std::move(info);
    inst.answers = std::move(label->answers);
    inst.contradictory_answers = std::move(label->contradictory);
    inst.family = label->family;
    inst.split = job.split;
    auto key = serialize_instance(inst, g);
    if (!seen.insert(key).second) continue;
    job.out.push_back(std::move(inst));
  }
}

}  // namespace

Dataset generate_dataset(const GraphSplit& split, const SamplerConfig& cfg) {
  cfg.validate();
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& plan = cfg.plans[s];
    for (std::size_t t = 0; t < plan.types.size(); ++t)
      for (std::size_t w = 0; w < cfg.workers; ++w) {
        std::size_t quota = plan.count_per_type / cfg.workers + (w < plan.count_per_type % cfg.workers ? 1 : 0);
        if (quota) jobs.push_back({static_cast<SplitName>(s), t, w, quota, {}, 0, 0});
      }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) run_job(jobs[i], split, cfg);
  };
  if (cfg.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  Dataset data;
  // (split, type) -> family -> accumulated row
  std::map<std::tuple<std::size_t, std::size_t, int>, TypeStatsRow> rows;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> produced;
  for (auto& job : jobs) {
    auto s = static_cast<std::size_t>(job.split);
    data.stats.sampled += job.sampled;
    data.stats.seed_in_answer_set += job.seed_hits;
    produced[{s, job.type_index}] += job.out.size();
    for (auto& inst : job.out) {
      auto& row = rows[{s, job.type_index, static_cast<int>(inst.family)}];
      row.split = job.split;
      row.type = to_string(cfg.plans[s].types[job.type_index]);
      row.family = inst.family;
      ++row.queries;
      row.mean_answers += static_cast<double>(inst.answers.size());
      row.mean_contradictory += static_cast<double>(inst.contradictory_answers.size());
      data.records[s].push_back(std::move(inst));
    }
  }
  for (auto& [key, row] : rows) {
    row.mean_answers /= static_cast<double>(row.queries);
    row.mean_contradictory /= static_cast<double>(row.queries);
    data.stats.rows.push_back(row);
  }
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t t = 0; t < cfg.plans[s].types.size(); ++t) {
      auto got = produced[{s, t}];
      if (got < cfg.plans[s].count_per_type)
        data.stats.warnings.push_back(std::string(split_name(static_cast<SplitName>(s))) + " " +
                                      to_string(cfg.plans[s].types[t]) + ": " + std::to_string(got) +
                                      "/" + std::to_string(cfg.plans[s].count_per_type) +
                                      " queries after retries");
    }
  return data;
}

void write_stats(std::ostream& out, const DatasetStats& stats) {
  out << "split\ttype\tfamily\tqueries\tmean_answers\tmean_contradictory\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : stats.rows)
    out << split_name(r.split) << '\t' << r.type << '\t' << family_name(r.family) << '\t' << r.queries
        << '\t' << r.mean_answers << '\t' << r.mean_contradictory << '\n';
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data, const KnowledgeGraph& g) {
  std::filesystem::create_directories(dir);
  for (std::size_t s = 0; s < 3; ++s) {
    auto path = dir / (std::string(split_name(static_cast<SplitName>(s))) + ".jsonl");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& inst : data.records[s]) out << serialize_instance(inst, g) << '\n';
  }
  std::ofstream stats(dir / "stats.tsv");
  if (!stats) throw Error("cannot write stats.tsv");
  write_stats(stats, data.stats);
}

std::vector<QueryInstance> read_jsonl(const std::filesystem::path& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<QueryInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_instance(line, g));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ceqa
