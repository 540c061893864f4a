#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ceqa/kg_store.hpp"
#include "ceqa/neural_meqe.hpp"
#include "ceqa/query_lang.hpp"
#include "ceqa/symbolic_exec.hpp"

namespace ceqa {

inline constexpr std::array<double, 5> kLearningRateGrid = {0.002, 0.001, 0.0005, 0.0002, 0.0001};
inline constexpr std::array<std::size_t, 3> kBatchGrid = {128, 256, 512};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Eigen::Index dim = 64;  // 300 at full scale
  double lr = 0.001;
  std::size_t batch = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  AdamOptions adam;
  nn::EncoderOptions encoder;
  bool grid_search = false;

  void validate() const;
};

// Adam with bias correction over every block of a ModelParams.
template <typename Scalar>
class Adam {
 public:
  Adam(const nn::ModelParams<Scalar>& shape, double lr, AdamOptions opts = {})
      : lr_(lr), opts_(opts), m_(nn::ModelParams<Scalar>::zeros(shape.num_vertices(), shape.dim())),
        v_(m_) {}

  void step(nn::ModelParams<Scalar>& params, const nn::ModelParams<Scalar>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    std::vector<Eigen::Map<const nn::Matrix<Scalar>>> g;
    grads.for_each_block([&](const std::string&, auto m) { g.push_back(m); });
    std::vector<Eigen::Map<nn::Matrix<Scalar>>> m, v;
    m_.for_each_block([&](const std::string&, auto b) { m.push_back(b); });
    v_.for_each_block([&](const std::string&, auto b) { v.push_back(b); });
    std::size_t i = 0;
    const auto b1 = static_cast<Scalar>(opts_.beta1), b2 = static_cast<Scalar>(opts_.beta2);
    params.for_each_block([&](const std::string&, auto p) {
      m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i].cwiseProduct(g[i]);
      p.array() -= static_cast<Scalar>(lr_) * (m[i].array() / static_cast<Scalar>(c1)) /
                   ((v[i].array() / static_cast<Scalar>(c2)).sqrt() + static_cast<Scalar>(opts_.eps));
      ++i;
    });
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_;
  AdamOptions opts_;
  nn::ModelParams<Scalar> m_;
  nn::ModelParams<Scalar> v_;
  std::size_t t_ = 0;
};

template <typename Scalar>
struct TrainResult {
  nn::ModelParams<Scalar> params;
  std::vector<double> loss_curve;  // mean batch loss per epoch
};

// Each info atomic swapped for a uniformly drawn edge of `g`.
std::vector<QueryInstance> randomize_constraints(std::vector<QueryInstance> records,
                                                 const KnowledgeGraph& g, std::uint64_t seed);

// One (record, answer) pair per non-contradictory answer; Adam over
// shuffled batches. Throws on a non-finite loss.
template <typename Scalar>
TrainResult<Scalar> train(std::span<const QueryInstance> records, const KnowledgeGraph& train_graph,
                          const TrainConfig& cfg);

// Pessimistic filtered rank of each target; `known` answers other than the
// target itself are removed from the candidate pool.
template <typename Scalar>
std::vector<std::size_t> rank_targets(const nn::Vector<Scalar>& scores, const VertexSet& targets,
                                      const VertexSet& known);

double hits_at_k(std::span<const std::size_t> ranks, std::size_t k);
double mrr(std::span<const std::size_t> ranks);

struct Metrics {
  double hit1 = 0;
  double hit3 = 0;
  double mrr = 0;
};

struct EvalRow {
  std::string family;  // occurrence, temporal, or "all"
  std::string type;    // query type, or "all"
  std::size_t n = 0;   // queries with a non-empty target set
  Metrics metrics;
};

struct EvalResult {
  std::vector<EvalRow> rows;  // per (family, type), then per family, then overall
  std::size_t skipped = 0;    // queries whose target set was empty

  const EvalRow* find(std::string_view family, std::string_view type) const;
  void check_invariants() const;
};

struct EvalQuery {
  const QueryInstance* record = nullptr;
  std::vector<InformationalAtomic> info;  // memory contents, normally the record's own
  VertexSet targets;
};

// Targets are the record's valid answers minus those already valid on the
// smaller graph under the same informational atomics.
std::vector<EvalQuery> eval_targets(std::span<const QueryInstance> records, const KnowledgeGraph& smaller,
                                    std::size_t grounding_cap = kDefaultGroundingCap,
                                    std::size_t workers = 1);

void randomize_constraints(std::span<EvalQuery> queries, const KnowledgeGraph& g, std::uint64_t seed);

template <typename Scalar>
EvalResult evaluate(std::span<const EvalQuery> queries, const nn::ModelParams<Scalar>& params,
                    const nn::EncoderOptions& opts = {}, std::size_t workers = 1);

// Row-wise mean across runs sharing the same row keys.
EvalResult average_results(std::span<const EvalResult> runs);

void write_report(std::ostream& out, const EvalResult& result);

}  // namespace ceqa
