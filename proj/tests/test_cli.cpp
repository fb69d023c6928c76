#include <doctest.h>

#include <nlohmann/json.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "deixis/cli.hpp"
#include "deixis/dataset.hpp"
#include "deixis/synthetic.hpp"

using namespace deixis;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("deixis_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter() {
    static int n = 0;
    return n++;
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace

TEST_CASE("usage errors exit nonzero with diagnostics on the error stream") {
  CHECK(run({}).code != 0);
  CHECK(run({"generate"}).code != 0);  // missing --out
  const CliResult bad_objects =
      run({"generate", "--objects", "0", "--out", "x.jsonl"});
  CHECK(bad_objects.code != 0);
  CHECK_FALSE(bad_objects.err.empty());
  CHECK(run({"train", "--out", "m.ckpt"}).code != 0);  // missing --data
  CHECK(run({"definitely-not-a-command"}).code != 0);
}

TEST_CASE("generate is deterministic byte for byte") {
  TempDir dir;
  const std::string a = dir.file("a.jsonl");
  const std::string b = dir.file("b.jsonl");
  const std::vector<std::string> base_args{"generate", "--scenes", "3",
                                           "--objects", "5",  "--seed", "42"};
  auto with_out = [&](const std::string& path) {
    std::vector<std::string> args = base_args;
    args.push_back("--out");
    args.push_back(path);
    return args;
  };
  CHECK(run(with_out(a)).code == 0);
  CHECK(run(with_out(b)).code == 0);
  const std::string bytes_a = slurp(a);
  CHECK_FALSE(bytes_a.empty());
  CHECK(bytes_a == slurp(b));

  // a different seed must change the corpus
  std::vector<std::string> different = with_out(dir.file("c.jsonl"));
  different[6] = "43";
  CHECK(run(different).code == 0);
  CHECK(slurp(dir.file("c.jsonl")) != bytes_a);
}

TEST_CASE("augment expands one sample into 4096 lines") {
  TempDir dir;
  const std::string base = dir.file("base.jsonl");
  CHECK(run({"generate", "--scenes", "1", "--objects", "4", "--singles", "1",
             "--bimanual", "0", "--resting", "0", "--seed", "7", "--out",
             base})
            .code == 0);
  REQUIRE(load_jsonl(base).size() == 1);

  const std::string expanded = dir.file("aug.jsonl");
  const CliResult result =
      run({"augment", "--in", base, "--out", expanded, "--seed", "9"});
  CHECK(result.code == 0);
  CHECK(result.err.find("\"multiplicity\":4096") != std::string::npos);
  CHECK(load_jsonl(expanded).size() == 4096);
}

TEST_CASE("augment reports corrupt input with its line number") {
  TempDir dir;
  const std::string bad = dir.file("bad.jsonl");
  {
    std::ofstream out(bad);
    out << "{\"dims\": oops\n";
  }
  const CliResult result = run(
      {"augment", "--in", bad, "--out", dir.file("out.jsonl"), "--seed", "1"});
  CHECK(result.code != 0);
  CHECK(result.err.find("line 1") != std::string::npos);
}

TEST_CASE("train, eval, predict and baseline run end to end") {
  TempDir dir;
  const std::string corpus = dir.file("corpus.jsonl");
  CHECK(run({"generate", "--scenes", "4", "--objects", "4", "--singles", "3",
             "--bimanual", "1", "--resting", "3", "--seed", "11", "--out",
             corpus})
            .code == 0);

  // tiny config so the smoke pass stays fast
  const std::string config = dir.file("config.json");
  {
    std::ofstream out(config);
    out << R"({"model": {"d_t": 8, "n_enc_layers": 1, "n_dec_layers": 1,
                "n_heads": 2, "ffn_hidden": 8},
               "train": {"epochs": 2, "batch_size": 16,
                          "augment": false, "holdout_scenes": 1}})";
  }
  const std::string ckpt = dir.file("model.ckpt");
  const CliResult trained =
      run({"train", "--data", corpus, "--mode", "three", "--config", config,
           "--seed", "3", "--out", ckpt});
  CHECK(trained.code == 0);
  CHECK(trained.err.find("\"event\":\"epoch\"") != std::string::npos);
  CHECK(fs::exists(ckpt));

  const std::string report = dir.file("report");
  const CliResult evaluated = run({"eval", "--data", corpus, "--ckpt", ckpt,
                                   "--grid", "4x8", "--report", report});
  CHECK(evaluated.code == 0);
  CHECK(fs::exists(report + "/metrics.json"));
  CHECK(fs::exists(report + "/pcm.csv"));
  CHECK(fs::exists(report + "/pcm.svg"));
  const nlohmann::json metrics =
      nlohmann::json::parse(slurp(report + "/metrics.json"));
  CHECK(metrics.contains("accuracy"));
  CHECK(metrics["top2"].get<double>() >= metrics["accuracy"].get<double>());

  // eval twice: metrics must be bit-identical
  const std::string report2 = dir.file("report2");
  CHECK(run({"eval", "--data", corpus, "--ckpt", ckpt, "--grid", "4x8",
             "--report", report2})
            .code == 0);
  CHECK(slurp(report + "/metrics.json") == slurp(report2 + "/metrics.json"));

  // predict on one resting sample: the sentinel is reported separately
  const std::vector<Sample> samples = load_jsonl(corpus);
  std::string resting_path = dir.file("resting.json");
  for (const Sample& s : samples) {
    if (s.resting()) {
      std::ofstream out(resting_path);
      out << sample_to_json(s).dump() << '\n';
      break;
    }
  }
  const CliResult predicted =
      run({"predict", "--sample", resting_path, "--ckpt", ckpt});
  CHECK(predicted.code == 0);
  CHECK(predicted.out.find("non-pointing probability") != std::string::npos);

  // baseline fits its gate and emits the same report schema
  const std::string base_ckpt = dir.file("baseline.ckpt");
  const std::string base_report = dir.file("base_report");
  const CliResult baseline_run =
      run({"baseline", "--data", corpus, "--fit-data", corpus, "--ckpt",
           base_ckpt, "--grid", "4x8", "--report", base_report, "--seed",
           "5"});
  CHECK(baseline_run.code == 0);
  const nlohmann::json base_metrics =
      nlohmann::json::parse(slurp(base_report + "/metrics.json"));
  for (const char* key : {"accuracy", "precision", "recall", "f1", "top2"})
    CHECK(base_metrics.contains(key));

  // incompatible checkpoint types are rejected
  const CliResult wrong =
      run({"eval", "--data", corpus, "--ckpt", base_ckpt, "--grid", "4x8",
           "--report", dir.file("r3")});
  CHECK(wrong.code != 0);
  CHECK(wrong.err.find("error") != std::string::npos);
}
