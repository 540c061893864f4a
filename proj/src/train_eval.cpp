#include "ceqa/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "ceqa/sampler.hpp"

namespace ceqa {

void TrainConfig::validate() const {
  if (dim < 1) throw Error("dim must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw Error("learning rate must be positive");
  if (batch == 0) throw Error("batch size must be >= 1");
  if (grid_search) {
    if (std::find(kLearningRateGrid.begin(), kLearningRateGrid.end(), lr) == kLearningRateGrid.end())
      throw Error("learning rate outside the search grid");
    if (std::find(kBatchGrid.begin(), kBatchGrid.end(), batch) == kBatchGrid.end())
      throw Error("batch size outside the search grid");
  }
}

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<InformationalAtomic> random_atomics(std::size_t count, const KnowledgeGraph& g, Rng& rng) {
  if (g.num_edges() == 0) throw Error("cannot draw random constraints from an empty graph");
  std::vector<InformationalAtomic> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(g.edges()[rng.uniform_index(g.num_edges())]);
  return out;
}

}  // namespace

std::vector<QueryInstance> randomize_constraints(std::vector<QueryInstance> records, const KnowledgeGraph& g,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  for (auto& r : records) r.info_atomics = random_atomics(r.info_atomics.size(), g, rng);
  return records;
}

void randomize_constraints(std::span<EvalQuery> queries, const KnowledgeGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& q : queries) q.info = random_atomics(q.info.size(), g, rng);
}

template <typename Scalar>
TrainResult<Scalar> train(std::span<const QueryInstance> records, const KnowledgeGraph& train_graph,
                          const TrainConfig& cfg) {
  cfg.validate();
  std::vector<QueryInstance> randomized;
  if (cfg.encoder.ablation == nn::Ablation::RandomConstraints) {
    randomized = randomize_constraints({records.begin(), records.end()}, train_graph, mix_seed(cfg.seed, 1));
    records = randomized;
  }
  std::vector<nn::MemoryBank> banks;
  std::vector<std::pair<std::size_t, VertexId>> pairs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    banks.push_back({records[i].info_atomics});
    for (auto a : records[i].answers) pairs.emplace_back(i, a);
  }
  if (pairs.empty()) throw Error("no training pairs");

  TrainResult<Scalar> result;
  result.params = nn::init_params<Scalar>(static_cast<Eigen::Index>(train_graph.num_vertices()), cfg.dim,
                                          mix_seed(cfg.seed, 0));
  Adam<Scalar> adam(result.params, cfg.lr, cfg.adam);
  Rng rng(mix_seed(cfg.seed, 2));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(pairs);
    double total = 0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch) {
      const auto end = std::min(pairs.size(), start + cfg.batch);
      nn::Tape<Scalar> tape(result.params);
      std::map<std::size_t, nn::QueryState> encoded;
      std::vector<std::pair<nn::QueryState, VertexId>> batch;
      for (auto i = start; i < end; ++i) {
        auto [rec, answer] = pairs[i];
        auto it = encoded.find(rec);
        if (it == encoded.end())
          it = encoded.emplace(rec, nn::encode(tape, records[rec].query, banks[rec], cfg.encoder)).first;
        batch.emplace_back(it->second, answer);
      }
      const double loss = static_cast<double>(tape.cross_entropy(batch));
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << epoch << "; batch records:";
        for (const auto& [rec, state] : encoded) msg << ' ' << rec;
        throw Error(msg.str());
      }
      total += loss * static_cast<double>(end - start);
      adam.step(result.params, tape.backward());
    }
    result.loss_curve.push_back(total / static_cast<double>(pairs.size()));
  }
  return result;
}

template <typename Scalar>
std::vector<std::size_t> rank_targets(const nn::Vector<Scalar>& scores, const VertexSet& targets,
                                      const VertexSet& known) {
  std::vector<std::size_t> ranks;
  for (auto v : targets) {
    if (static_cast<Eigen::Index>(v) >= scores.size()) throw Error("target id out of range");
    const Scalar sv = scores(v);
    std::size_t rank = 1;
    for (Eigen::Index u = 0; u < scores.size(); ++u) {
      const auto uid = static_cast<VertexId>(u);
      if (uid == v || std::binary_search(known.begin(), known.end(), uid)) continue;
      if (scores(u) >= sv) ++rank;
    }
    ranks.push_back(rank);
  }
  return ranks;
}

double hits_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0;
  double hits = 0;
  for (auto r : ranks) {
    if (r < 1) throw Error("rank must be >= 1");
    hits += r <= k ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(ranks.size());
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) return 0;
  double sum = 0;
  for (auto r : ranks) {
    if (r < 1) throw Error("rank must be >= 1");
    sum += 1.0 / static_cast<double>(r);
  }
  return sum / static_cast<double>(ranks.size());
}

const EvalRow* EvalResult::find(std::string_view family, std::string_view type) const {
  for (const auto& r : rows)
    if (r.family == family && r.type == type) return &r;
  return nullptr;
}

void EvalResult::check_invariants() const {
  constexpr double tol = 1e-12;
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    bool ok = m.hit1 >= 0 && m.hit3 <= 1 + tol && m.mrr >= 0 && m.mrr <= 1 + tol && m.hit1 <= m.hit3 + tol &&
              m.hit1 <= m.mrr + tol;
    if (!ok) throw Error("metric bounds violated for " + r.family + "/" + r.type);
  }
}

std::vector<EvalQuery> eval_targets(std::span<const QueryInstance> records, const KnowledgeGraph& smaller,
                                    std::size_t grounding_cap, std::size_t workers) {
  std::vector<EvalQuery> out(records.size());
  CheckOptions opts;
  opts.grounding_cap = grounding_cap;
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    auto prior = classify_answers(smaller, r.query, r.info_atomics, opts);
    out[i].record = &r;
    out[i].info = r.info_atomics;
    std::set_difference(r.answers.begin(), r.answers.end(), prior.valid.begin(), prior.valid.end(),
                        std::back_inserter(out[i].targets));
  });
  return out;
}

namespace {

struct Accumulator {
  std::size_t n = 0;
  Metrics sum;
  void add(const Metrics& m) {
    ++n;
    sum.hit1 += m.hit1;
    sum.hit3 += m.hit3;
    sum.mrr += m.mrr;
  }
  EvalRow row(std::string family, std::string type) const {
    EvalRow r{std::move(family), std::move(type), n, {}};
    if (n > 0) {
      const auto d = static_cast<double>(n);
      r.metrics = {sum.hit1 / d, sum.hit3 / d, sum.mrr / d};
    }
    return r;
  }
};

}  // namespace

template <typename Scalar>
EvalResult evaluate(std::span<const EvalQuery> queries, const nn::ModelParams<Scalar>& params,
                    const nn::EncoderOptions& opts, std::size_t workers) {
  std::vector<std::optional<Metrics>> per_query(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto& q = queries[i];
    if (q.targets.empty()) return;
    auto state = nn::encode_value(params, q.record->query, nn::MemoryBank{q.info}, opts);
    auto ranks = rank_targets<Scalar>(nn::score_all(params, state), q.targets, q.record->answers);
    per_query[i] = Metrics{hits_at_k(ranks, 1), hits_at_k(ranks, 3), mrr(ranks)};
  });

  EvalResult result;
  std::map<std::pair<std::string, std::string>, Accumulator> by_type;
  std::map<std::string, Accumulator> by_family;
  Accumulator overall;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!per_query[i]) {
      ++result.skipped;
      continue;
    }
    const auto& r = *queries[i].record;
    const std::string family(family_name(r.family));
    by_type[{family, r.type_string()}].add(*per_query[i]);
    by_family[family].add(*per_query[i]);
    overall.add(*per_query[i]);
  }
  for (const auto& [key, acc] : by_type) result.rows.push_back(acc.row(key.first, key.second));
  for (const auto& [family, acc] : by_family) result.rows.push_back(acc.row(family, "all"));
  result.rows.push_back(overall.row("all", "all"));
  result.check_invariants();
  return result;
}

EvalResult average_results(std::span<const EvalResult> runs) {
  if (runs.empty()) throw Error("no results to average");
  EvalResult out = runs.front();
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (runs[k].rows.size() != out.rows.size()) throw Error("results have different row sets");
    out.skipped += runs[k].skipped;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      const auto& r = runs[k].rows[i];
      auto& o = out.rows[i];
      if (r.family != o.family || r.type != o.type) throw Error("results have different row sets");
      o.metrics.hit1 += r.metrics.hit1;
      o.metrics.hit3 += r.metrics.hit3;
      o.metrics.mrr += r.metrics.mrr;
    }
  }
  const auto n = static_cast<double>(runs.size());
  for (auto& o : out.rows) {
    o.metrics.hit1 /= n;
    o.metrics.hit3 /= n;
    o.metrics.mrr /= n;
  }
  out.skipped = static_cast<std::size_t>(std::llround(static_cast<double>(out.skipped) / n));
  return out;
}

void write_report(std::ostream& out, const EvalResult& result) {
  out << "family\ttype\tn\thit1\thit3\tmrr\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : result.rows)
    out << r.family << '\t' << r.type << '\t' << r.n << '\t' << r.metrics.hit1 << '\t' << r.metrics.hit3 << '\t'
        << r.metrics.mrr << '\n';
}

template TrainResult<double> train<double>(std::span<const QueryInstance>, const KnowledgeGraph&,
                                           const TrainConfig&);
template TrainResult<float> train<float>(std::span<const QueryInstance>, const KnowledgeGraph&,
                                         const TrainConfig&);
template std::vector<std::size_t> rank_targets<double>(const nn::Vector<double>&, const VertexSet&,
                                                       const VertexSet&);
template std::vector<std::size_t> rank_targets<float>(const nn::Vector<float>&, const VertexSet&,
                                                      const VertexSet&);
template EvalResult evaluate<double>(std::span<const EvalQuery>, const nn::ModelParams<double>&,
                                     const nn::EncoderOptions&, std::size_t);
template EvalResult evaluate<float>(std::span<const EvalQuery>, const nn::ModelParams<float>&,
                                    const nn::EncoderOptions&, std::size_t);

}  // namespace ceqa
