#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args, bool merge_stderr = false) {
  std::string cmd = std::string("\"") + CEQA_CLI_PATH + "\" " + args + (merge_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Shared workspace: a synthetic KG and one sampled dataset.
const fs::path& workspace() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "ceqa_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    std::string synth = std::string("\"") + CEQA_SYNTH_PATH + "\" --vertices 120 --edges 900 --clusters 12 --seed 3 --out \"" +
                        (d / "kg.tsv").string() + "\" > /dev/null";
    REQUIRE(std::system(synth.c_str()) == 0);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string sample_args(const fs::path& out, const std::string& extra = "") {
  return "sample --kg " + q(workspace() / "kg.tsv") + " --count-per-type 3 --seed 1 --out-dir " + q(out) + " " + extra;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").status == 2);
  CHECK(run("frobnicate").status == 2);
  CHECK(run("demo --no-such-flag").status == 2);
  CHECK(run("sample").status == 2);
  auto help = run("--help");
  CHECK(help.status == 0);
  CHECK(help.out.find("sample") != std::string::npos);
  CHECK(run("--version").status == 0);
}

TEST_CASE("demo prints the four verdicts") {
  auto r = run("demo");
  REQUIRE(r.status == 0);
  for (const char* line : {"Staff is new: Valid\n", "PersonY adds ketchup: Valid\n",
                           "PersonY adds vinegar: OccurrenceContradiction\n",
                           "PersonY adds soy sauce: TemporalContradiction\n"})
    CHECK(r.out.find(line) != std::string::npos);
}

TEST_CASE("pipeline errors exit with 1") {
  auto bad = workspace() / "bad.tsv";
  std::ofstream(bad) << "a\tNotARelation\tb\n";
  CHECK(run("split --kg " + q(bad) + " --out-dir " + q(workspace() / "bad_split")).status == 1);
  CHECK(run("demo --kg " + q(bad)).status == 1);
}

TEST_CASE("sampling is reproducible and writes a manifest") {
  auto a = workspace() / "a", b = workspace() / "b";
  REQUIRE(run(sample_args(a)).status == 0);
  REQUIRE(run(sample_args(b)).status == 0);
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "stats.tsv", "vertices.txt", "kg_train.tsv",
                        "kg_valid.tsv", "kg_test.tsv"}) {
    CAPTURE(f);
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  REQUIRE(fs::exists(a / "manifest.sample.json"));
  auto ma = nlohmann::json::parse(slurp(a / "manifest.sample.json"));
  auto mb = nlohmann::json::parse(slurp(b / "manifest.sample.json"));
  CHECK(ma["subcommand"] == "sample");
  CHECK(ma["seeds"] == nlohmann::json::array({1}));
  CHECK(ma["inputs"] == mb["inputs"]);
  CHECK(ma["inputs"][0]["sha256"].get<std::string>().size() == 64);
  CHECK(ma["config"]["count-per-type"] == "3");
}

TEST_CASE("config file supplies defaults and flags win") {
  auto cfg = workspace() / "sample.ini";
  std::ofstream(cfg) << "[sample]\ncount-per-type=2\nseed=7\n";
  auto c = workspace() / "c";
  REQUIRE(run("--config " + q(cfg) + " " + sample_args(c)).status == 0);
  auto m = nlohmann::json::parse(slurp(c / "manifest.sample.json"));
  CHECK(m["config"]["count-per-type"] == "3");
  CHECK(m["config"]["seed"] == "1");
  auto d = workspace() / "d";
  REQUIRE(run("--config " + q(cfg) + " sample --kg " + q(workspace() / "kg.tsv") + " --out-dir " + q(d)).status == 0);
  auto md = nlohmann::json::parse(slurp(d / "manifest.sample.json"));
  CHECK(md["config"]["count-per-type"] == "2");
  CHECK(md["seeds"] == nlohmann::json::array({7}));
}

TEST_CASE("prove reports every answer of a record") {
  auto a = workspace() / "a";
  if (!fs::exists(a / "test.jsonl")) REQUIRE(run(sample_args(a)).status == 0);
  auto r = run("prove --record " + q(a / "test.jsonl") + " --data-dir " + q(a));
  REQUIRE(r.status == 0);
  CHECK(r.out.rfind("query: ", 0) == 0);
  CHECK(r.out.find(": Valid") != std::string::npos);
  CHECK(r.out.find("Contradiction") != std::string::npos);
  CHECK(run("prove --record " + q(a / "test.jsonl") + " --data-dir " + q(a) + " --line 100000").status == 1);
}

TEST_CASE("train then eval") {
  auto a = workspace() / "a";
  if (!fs::exists(a / "train.jsonl")) REQUIRE(run(sample_args(a)).status == 0);
  auto model = workspace() / "m.ckpt";
  auto t = run("train --data-dir " + q(a) + " --dim 8 --epochs 4 --batch 16 --lr 0.01 --seed 2 --out " + q(model));
  REQUIRE(t.status == 0);
  CHECK(fs::exists(model));
  CHECK(fs::exists(workspace() / "manifest.train.json"));
  auto curve = slurp(workspace() / "m.ckpt.loss.tsv");
  CHECK(curve.rfind("epoch\tloss\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 5);

  auto report = workspace() / "report.tsv";
  auto e = run("eval --model " + q(model) + " --model " + q(model) + " --data-dir " + q(a) + " --report " + q(report));
  REQUIRE(e.status == 0);
  auto text = slurp(report);
  CHECK(text.rfind("family\ttype\tn\thit1\thit3\tmrr\n", 0) == 0);
  CHECK(text.find("\nall\tall\t") != std::string::npos);
  CHECK(fs::exists(workspace() / "manifest.eval.json"));

  auto preset = run("--config " + q(fs::path(CEQA_SOURCE_DIR) / "configs" / "desk.ini") + " train --data-dir " + q(a) +
                    " --epochs 1 --batch 32 --out " + q(workspace() / "p.ckpt"));
  CHECK(preset.status == 0);
  auto pm = nlohmann::json::parse(slurp(workspace() / "manifest.train.json"));
  CHECK(pm["config"]["dim"] == "64");
  CHECK(pm["config"]["epochs"] == "1");

  CHECK(run("train --data-dir " + q(a) + " --ablation everything").status == 2);
  CHECK(run("train --data-dir " + q(a) + " --grid --lr 0.3 --out " + q(workspace() / "g.ckpt")).status == 1);
}

}  // TEST_SUITE
