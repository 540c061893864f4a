#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ceqa/constraint_engine.hpp"
#include "ceqa/kg_store.hpp"
#include "ceqa/query_lang.hpp"
#include "ceqa/symbolic_exec.hpp"

namespace ceqa {

// The fifteen conjunctive types with at most three anchors and depth two.
const std::vector<QueryType>& default_query_types();

struct SplitPlan {
  std::vector<QueryType> types;
  std::size_t count_per_type = 0;
};

struct SamplerConfig {
  std::array<SplitPlan, 3> plans;  // indexed by SplitName
  std::size_t max_info = 3;
  std::uint64_t seed = 0;
  std::size_t grounding_cap = kDefaultGroundingCap;
  std::size_t max_retries = 100;  // sampling attempts per requested record
  // Valid/test records must have an answer that the next smaller graph
  // does not already yield; otherwise they carry no evaluation target.
  bool require_new_answers = true;
  std::size_t workers = 1;

  // Train gets the types with <= max_train_anchors anchors, valid and test
  // those with <= max_eval_anchors; the same count for every type.
  static SamplerConfig from_types(const std::vector<QueryType>& types, std::size_t count_per_type,
                                  int max_train_anchors = 2, int max_eval_anchors = 3);
  void validate() const;
};

// Walks backwards from `v`. nullopt signals a dead end.
std::optional<GroundedQuery> sample_query(const KnowledgeGraph& g, const QueryType& t, VertexId v,
                                          Rng& rng);

// Graph edges incident to the grounding's chain, minus its own atomics.
std::vector<InformationalAtomic> info_candidates(const KnowledgeGraph& g, const GroundedQuery& q,
                                                 const Grounding& seed_grounding);

// Picks a seed grounding of `seed_answer` and up to k distinct candidates.
std::vector<InformationalAtomic> attach_info_atomics(const KnowledgeGraph& g,
                                                     const GroundedQuery& q, VertexId seed_answer,
                                                     std::size_t k, Rng& rng,
                                                     std::size_t grounding_cap = kDefaultGroundingCap);

struct AnswerClassification {
  VertexSet valid;
  VertexSet occurrence_contradictory;
  VertexSet temporal_contradictory;
  bool mixed = false;       // some answer contradicted only jointly by both families
  bool incomplete = false;  // some non-valid verdict rests on a truncated enumeration
};

AnswerClassification classify_answers(const KnowledgeGraph& g, const GroundedQuery& q,
                                      std::span<const InformationalAtomic> info,
                                      const CheckOptions& opts = {});

struct QueryLabel {
  VertexSet answers;
  VertexSet contradictory;
  ConstraintFamily family = ConstraintFamily::Occurrence;
};

// Discard (nullopt) unless there is at least one valid and one
// contradictory answer, all contradictions belong to one family, and no
// verdict is possibly incomplete.
std::optional<QueryLabel> label_query(const KnowledgeGraph& g, const GroundedQuery& q,
                                      std::span<const InformationalAtomic> info,
                                      const CheckOptions& opts = {});

struct TypeStatsRow {
  SplitName split = SplitName::Train;
  std::string type;
  ConstraintFamily family = ConstraintFamily::Occurrence;
  std::size_t queries = 0;
  double mean_answers = 0;
  double mean_contradictory = 0;
};

struct DatasetStats {
  std::vector<TypeStatsRow> rows;
  std::size_t sampled = 0;            // queries returned by sample_query
  std::size_t seed_in_answer_set = 0; // of those, seed vertex among the answers
  std::vector<std::string> warnings;  // unmet count targets
};

struct Dataset {
  std::array<std::vector<QueryInstance>, 3> records;  // indexed by SplitName
  DatasetStats stats;
};

Dataset generate_dataset(const GraphSplit& split, const SamplerConfig& cfg);

const KnowledgeGraph& graph_for(const GraphSplit& split, SplitName name);

// train.jsonl, valid.jsonl, test.jsonl, stats.tsv
void write_dataset(const std::filesystem::path& dir, const Dataset& data, const KnowledgeGraph& g);
void write_stats(std::ostream& out, const DatasetStats& stats);
std::vector<QueryInstance> read_jsonl(const std::filesystem::path& path, const KnowledgeGraph& g);

}  // namespace ceqa
