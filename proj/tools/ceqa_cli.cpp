#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ceqa/checkpoint.hpp"
#include "ceqa/constraint_engine.hpp"
#include "ceqa/kg_store.hpp"
#include "ceqa/sampler.hpp"
#include "ceqa/train_eval.hpp"
#include "manifest.hpp"

#ifndef CEQA_VERSION
#define CEQA_VERSION "0.0.0"
#endif
#ifndef CEQA_SOURCE_DIR
#define CEQA_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace ceqa;

namespace {

constexpr const char* kDemoQuery =
    "(p,Reason,(i,(p,Succession,(e,PersonX complains)),(p,Succession,(e,PersonX leaves the restaurant))))";
constexpr const char* kDemoInfo[][3] = {
    {"PersonY adds ketchup", "ChosenAlternative", "PersonY adds vinegar"},
    {"Food is bad", "Precedence", "PersonY adds soy sauce"},
};

SplitRatios parse_ratios(const std::string& s) {
  SplitRatios r;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> r.train >> c1 >> r.valid >> c2 >> r.test) || c1 != ',' || c2 != ',' || !in.eof())
    throw Error("ratios must look like 0.8,0.1,0.1");
  return r;
}

std::vector<QueryType> read_types(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open types file " + path.string());
  std::vector<QueryType> out;
  for (std::string line; std::getline(in, line);) {
    auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    auto end = line.find_last_not_of(" \t\r");
    out.push_back(parse_query_type(line.substr(start, end - start + 1)));
  }
  if (out.empty()) throw Error("types file lists no query types");
  return out;
}

// Every option of the subcommand with its effective value.
nlohmann::ordered_json echo_config(const CLI::App& sub) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const auto& name = opt->get_lnames().front();
    if (opt->count() > 0) {
      auto results = opt->results();
      if (opt->get_expected_max() > 1) {
        j[name] = results;
      } else {
        j[name] = results.empty() ? std::string() : results.back();
      }
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

cli::RunManifest manifest_for(const CLI::App& sub, std::vector<std::uint64_t> seeds, std::vector<fs::path> inputs) {
  cli::RunManifest m;
  m.subcommand = sub.get_name();
  m.config = echo_config(sub);
  m.seeds = std::move(seeds);
  m.inputs = std::move(inputs);
  m.version = CEQA_VERSION;
  return m;
}

std::vector<fs::path> split_files(const fs::path& dir) {
  return {dir / "vertices.txt", dir / "kg_train.tsv", dir / "kg_valid.tsv", dir / "kg_test.tsv"};
}

void print_verdicts(std::ostream& out, const KnowledgeGraph& g, const QueryInstance& rec, bool witness,
                    const CheckOptions& opts) {
  for (auto a : answer_set(g, rec.query)) {
    auto v = check_answer(g, rec.query, rec.info_atomics, a, opts);
    out << g.text(a) << ": " << status_name(v.status);
    if (v.possibly_incomplete) out << " (possibly incomplete)";
    if (v.mixed) out << " (mixed)";
    out << '\n';
    if (!witness || !v.witness) continue;
    for (std::size_t i = 0; i < v.witness->values.size(); ++i)
      out << "  " << GroundedQuery::label(static_cast<int>(i)) << " = " << g.text(v.witness->values[i]) << '\n';
    if (v.occurrence_model)
      for (const auto& [vertex, value] : *v.occurrence_model)
        out << "  eta(" << g.text(vertex) << ") = " << (value ? "true" : "false") << '\n';
    if (v.timeline)
      for (const auto& [vertex, t] : *v.timeline) out << "  tau(" << g.text(vertex) << ") = " << t << '\n';
  }
}

struct TrainArgs {
  fs::path data_dir;
  Eigen::Index dim = 64;
  double lr = 0.001;
  std::size_t batch = 128;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::string ablation = "none";
  fs::path out = "model.ckpt";
  bool single = false;
  bool softmax_scores = false;
  bool memory_on_anchors = false;
  bool grid = false;
  std::size_t workers = 1;
};

TrainConfig train_config(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.dim = a.dim;
  cfg.lr = a.lr;
  cfg.batch = a.batch;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.encoder.ablation = nn::parse_ablation(a.ablation);
  cfg.encoder.softmax_scores = a.softmax_scores;
  cfg.encoder.memory_on_anchors = a.memory_on_anchors;
  cfg.grid_search = a.grid;
  return cfg;
}

TrainResult<double> run_training(const std::vector<QueryInstance>& records, const KnowledgeGraph& g,
                                 const TrainConfig& cfg, bool single) {
  if (!single) return train<double>(records, g, cfg);
  auto r = train<float>(records, g, cfg);
  return {r.params.cast<double>(), r.loss_curve};
}

EvalResult evaluate_split(const GraphSplit& split, const std::vector<QueryInstance>& records, SplitName name,
                          const Checkpoint& ckpt, std::uint64_t seed, std::size_t workers) {
  const auto& smaller = name == SplitName::Test ? split.valid : split.train;
  auto queries = eval_targets(records, smaller, kDefaultGroundingCap, workers);
  if (ckpt.options.ablation == nn::Ablation::RandomConstraints)
    randomize_constraints(queries, graph_for(split, name), mix_seed(seed, 3));
  return evaluate<double>(queries, ckpt.params, ckpt.options, workers);
}

int cmd_split(const CLI::App& sub, const fs::path& kg, const std::string& ratios, std::uint64_t seed,
              const fs::path& out_dir) {
  auto r = parse_ratios(ratios);
  auto g = load_graph(kg);
  manifest_for(sub, {seed}, {kg}).write(out_dir);
  auto split = split_edges(g, r, seed);
  save_split(out_dir, split);
  auto sizes = split_sizes(g.num_edges(), r);
  std::cout << "train\t" << sizes[0] << "\nvalid\t" << sizes[1] << "\ntest\t" << sizes[2] << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complex eventuality query toolkit"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value file with option defaults (flags win)");
  app.set_version_flag("--version", CEQA_VERSION);
  app.require_subcommand(1);

  // split
  fs::path kg, out_dir;
  std::string ratios = "0.8,0.1,0.1";
  std::uint64_t seed = 0;
  auto* split_cmd = app.add_subcommand("split", "split a KG into cumulative train/valid/test graphs");
  split_cmd->add_option("--kg", kg, "edge list (head<TAB>relation<TAB>tail)")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--ratios", ratios, "train,valid,test fractions");
  split_cmd->add_option("--seed", seed);
  split_cmd->add_option("--out-dir", out_dir)->required();

  // sample
  fs::path types_file;
  std::size_t count_per_type = 100, max_info = 3, workers = 1, max_retries = 100;
  std::size_t grounding_cap = kDefaultGroundingCap;
  auto* sample_cmd = app.add_subcommand("sample", "sample and label a query dataset");
  sample_cmd->add_option("--kg", kg)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--ratios", ratios);
  sample_cmd->add_option("--types-file", types_file, "one query type per line (default: built-in 15)")
      ->check(CLI::ExistingFile);
  sample_cmd->add_option("--count-per-type", count_per_type);
  sample_cmd->add_option("--max-info", max_info);
  sample_cmd->add_option("--max-retries", max_retries);
  sample_cmd->add_option("--grounding-cap", grounding_cap);
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--workers", workers);
  sample_cmd->add_option("--out-dir", out_dir)->required();

  // prove
  fs::path record_file, data_dir;
  std::size_t line_no = 1;
  bool witness = false;
  auto* prove_cmd = app.add_subcommand("prove", "check every answer of one JSONL record");
  prove_cmd->add_option("--record", record_file, "JSONL file")->required()->check(CLI::ExistingFile);
  prove_cmd->add_option("--line", line_no, "1-based record line");
  auto* prove_kg = prove_cmd->add_option("--kg", kg, "graph to execute on")->check(CLI::ExistingFile);
  auto* prove_dir =
      prove_cmd->add_option("--data-dir", data_dir, "split directory; uses the record's split graph")
          ->check(CLI::ExistingDirectory);
  prove_kg->excludes(prove_dir);
  prove_cmd->add_option("--grounding-cap", grounding_cap);
  prove_cmd->add_flag("--witness", witness, "print grounding, occurrence model and timeline");

  // train
  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a query encoder");
  train_cmd->add_option("--data-dir", ta.data_dir)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--dim", ta.dim);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--batch", ta.batch);
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--ablation", ta.ablation)
      ->check(CLI::IsMember({"none", "no_ffn", "random_constraints", "no_memory"}));
  train_cmd->add_option("--out", ta.out);
  train_cmd->add_flag("--float", ta.single, "single precision");
  train_cmd->add_flag("--softmax-scores", ta.softmax_scores, "normalise memory relevance scores");
  train_cmd->add_flag("--memory-on-anchors", ta.memory_on_anchors, "also read memory after anchors");
  train_cmd->add_flag("--grid", ta.grid, "search the lr x batch grid, keep the best valid MRR");
  train_cmd->add_option("--workers", ta.workers, "eval workers during grid search");

  // eval
  std::vector<fs::path> models;
  std::string split_name_arg = "test";
  fs::path report;
  auto* eval_cmd = app.add_subcommand("eval", "rank answers and report Hit@1/Hit@3/MRR");
  eval_cmd->add_option("--model", models, "checkpoint; repeat to average over seeds")
      ->required()
      ->capture_default_str()
      ->default_str("")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data-dir", data_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", split_name_arg)->check(CLI::IsMember({"valid", "test"}));
  eval_cmd->add_option("--report", report);
  eval_cmd->add_option("--seed", seed, "seed for random_constraints eval banks");
  eval_cmd->add_option("--workers", workers);

  // demo
  fs::path demo_kg = fs::path(CEQA_SOURCE_DIR) / "fixtures" / "figure_example.tsv";
  auto* demo_cmd = app.add_subcommand("demo", "run the restaurant walkthrough fixture");
  demo_cmd->add_option("--kg", demo_kg)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (split_cmd->parsed()) return cmd_split(*split_cmd, kg, ratios, seed, out_dir);

    if (sample_cmd->parsed()) {
      auto r = parse_ratios(ratios);
      auto types = types_file.empty() ? default_query_types() : read_types(types_file);
      auto cfg = SamplerConfig::from_types(types, count_per_type);
      cfg.max_info = max_info;
      cfg.seed = seed;
      cfg.workers = workers;
      cfg.max_retries = max_retries;
      cfg.grounding_cap = grounding_cap;
      cfg.validate();
      auto g = load_graph(kg);
      std::vector<fs::path> inputs = {kg};
      if (!types_file.empty()) inputs.push_back(types_file);
      manifest_for(*sample_cmd, {seed}, inputs).write(out_dir);
      auto split = split_edges(g, r, seed);
      save_split(out_dir, split);
      auto data = generate_dataset(split, cfg);
      write_dataset(out_dir, data, split.test);
      for (const auto& w : data.stats.warnings) std::cerr << "warning: " << w << '\n';
      for (std::size_t s = 0; s < 3; ++s)
        std::cout << split_name(static_cast<SplitName>(s)) << '\t' << data.records[s].size() << '\n';
      return 0;
    }

    if (prove_cmd->parsed()) {
      std::optional<GraphSplit> split;
      std::optional<KnowledgeGraph> graph;
      if (!data_dir.empty()) {
        split = load_split(data_dir);
      } else if (!kg.empty()) {
        graph = load_graph(kg);
      } else {
        throw Error("prove needs --kg or --data-dir");
      }
      const KnowledgeGraph& vocab = split ? split->test : *graph;
      std::ifstream in(record_file);
      std::string line;
      for (std::size_t i = 0; i < line_no; ++i)
        if (!std::getline(in, line)) throw Error("record file has fewer than " + std::to_string(line_no) + " lines");
      auto rec = parse_instance(line, vocab);
      const KnowledgeGraph& g = split ? graph_for(*split, rec.split) : *graph;
      CheckOptions opts;
      opts.grounding_cap = grounding_cap;
      std::cout << "query: " << to_string(rec.query, g) << '\n';
      print_verdicts(std::cout, g, rec, witness, opts);
      return 0;
    }

    if (train_cmd->parsed()) {
      auto cfg = train_config(ta);
      cfg.validate();
      auto inputs = split_files(ta.data_dir);
      inputs.push_back(ta.data_dir / "train.jsonl");
      if (ta.grid) inputs.push_back(ta.data_dir / "valid.jsonl");
      auto out_parent = ta.out.has_parent_path() ? ta.out.parent_path() : fs::path(".");
      manifest_for(*train_cmd, {ta.seed}, inputs).write(out_parent);
      auto split = load_split(ta.data_dir);
      auto records = read_jsonl(ta.data_dir / "train.jsonl", split.test);

      Checkpoint ckpt;
      ckpt.options = cfg.encoder;
      std::vector<double> curve;
      if (!ta.grid) {
        auto result = run_training(records, split.train, cfg, ta.single);
        ckpt.params = std::move(result.params);
        curve = std::move(result.loss_curve);
      } else {
        auto valid = read_jsonl(ta.data_dir / "valid.jsonl", split.test);
        double best = -1;
        std::ofstream grid(out_parent / "grid.tsv");
        grid << "lr\tbatch\tvalid_mrr\n";
        for (double lr : kLearningRateGrid)
          for (auto batch : kBatchGrid) {
            auto c = cfg;
            c.lr = lr;
            c.batch = batch;
            auto result = run_training(records, split.train, c, ta.single);
            Checkpoint cand{result.params, c.encoder, "gqe"};
            auto eval = evaluate_split(split, valid, SplitName::Valid, cand, ta.seed, ta.workers);
            double score = eval.find("all", "all")->metrics.mrr;
            grid << lr << '\t' << batch << '\t' << score << '\n';
            if (score > best) {
              best = score;
              ckpt.params = std::move(result.params);
              curve = std::move(result.loss_curve);
            }
          }
      }
      save_checkpoint(ta.out, ckpt);
      std::ofstream loss(ta.out.string() + ".loss.tsv");
      loss << "epoch\tloss\n" << std::setprecision(10);
      for (std::size_t e = 0; e < curve.size(); ++e) loss << e + 1 << '\t' << curve[e] << '\n';
      if (!curve.empty()) std::cout << "final loss " << curve.back() << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      auto name = parse_split_name(split_name_arg);
      auto inputs = split_files(data_dir);
      inputs.push_back(data_dir / (split_name_arg + ".jsonl"));
      inputs.insert(inputs.end(), models.begin(), models.end());
      if (!report.empty()) manifest_for(*eval_cmd, {seed}, inputs).write(report.has_parent_path() ? report.parent_path() : ".");
      auto split = load_split(data_dir);
      auto records = read_jsonl(data_dir / (split_name_arg + ".jsonl"), split.test);
      std::vector<EvalResult> runs;
      for (const auto& m : models) {
        auto ckpt = load_checkpoint(m);
        if (static_cast<std::size_t>(ckpt.params.num_vertices()) != split.test.num_vertices())
          throw Error("checkpoint " + m.string() + " does not match the dataset vocabulary");
        runs.push_back(evaluate_split(split, records, name, ckpt, seed, workers));
      }
      auto result = average_results(runs);
      if (!report.empty()) {
        std::ofstream out(report);
        if (!out) throw Error("cannot write " + report.string());
        write_report(out, result);
      }
      write_report(std::cout, result);
      if (result.skipped > 0) std::cerr << "skipped " << result.skipped << " queries with no targets\n";
      return 0;
    }

    if (demo_cmd->parsed()) {
      auto g = load_graph(demo_kg);
      QueryInstance rec{parse_grounded(kDemoQuery, g), {}, {}, {}, ConstraintFamily::Occurrence, SplitName::Test};
      for (const auto& [h, rel, t] : kDemoInfo) {
        auto head = g.find(h), tail = g.find(t);
        if (!head || !tail) throw Error("fixture is missing a walkthrough vertex");
        rec.info_atomics.push_back({*head, *parse_relation(rel), *tail});
      }
      std::cout << "query: " << to_string(rec.query, g) << '\n';
      for (const auto& a : rec.info_atomics)
        std::cout << "info: " << relation_name(a.rel) << '(' << g.text(a.head) << ", " << g.text(a.tail) << ")\n";
      print_verdicts(std::cout, g, rec, false, {});
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
