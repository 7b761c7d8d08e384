#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <sstream>

#include "agd/experiment.hpp"
#include "doctest.h"

using namespace agd;
using namespace agd::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig minimal_config(const fs::path& out) {
  ExperimentConfig c;
  c.problem = {"welsch_sum", 4, {}, "", 0};
  c.noise = {"exact", 0.0, std::nullopt, 1};
  c.preset = {"adagrad", "none", 1e-2, 0.1};
  c.horizons = {100};
  c.seeds = {0};
  c.output_dir = out.string();
  c.workers = 1;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config json round trip") {
  ExperimentConfig c;
  c.problem = {"quadratic", 3, {0.5, 1.0, 2.0}, "", 0};
  c.noise = {"truncated_gaussian", 0.7, 3.5, 1};
  c.preset = {"rsag", "weighted", 0.05, 0.1};
  c.horizons = {100, 1000, 10000};
  c.seeds = {3, 1, 7};
  c.metric = "min_grad_sq";
  c.delta = 1e-4;
  c.output_dir = "somewhere";
  c.workers = 3;
  c.master_seed = 99;
  c.check_bounds = false;
  c.sweep_axis = "sigma";
  c.sigma_values = {0.0, 0.1, 1.0};
  const ExperimentConfig parsed =
      ExperimentConfig::from_json_text(c.to_json_text());
  CHECK(parsed == c);
  CHECK(config_hash(parsed) == config_hash(c));

  // seed count form expands to 0..n-1
  const ExperimentConfig counted = ExperimentConfig::from_json_text(
      R"({"seeds": 4, "horizons": [10]})");
  CHECK(counted.seeds == std::vector<std::uint64_t>{0, 1, 2, 3});

  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{nonsense"), ConfigError);
}

TEST_CASE("config validation") {
  ExperimentConfig c = minimal_config("unused");
  c.horizons = {100, 100};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = minimal_config("unused");
  c.seeds = {1, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = minimal_config("unused");
  c.delta = 0.5;  // >= 1/e with high-probability checks enabled
  CHECK(c.check_bounds);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.check_bounds = false;
  CHECK_NOTHROW(c.validate());
  c = minimal_config("unused");
  c.metric = "nope";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("cmd_run writes one trace per cell and is byte deterministic") {
  TempDir dir("agd_run_test");
  const ExperimentConfig c = minimal_config(dir.path / "a");
  std::ostringstream out;
  CHECK(cmd_run(c, out) == kExitOk);

  const fs::path trace_path =
      dir.path / "a" / "adagrad" / "welsch_sum_d4" / "sigma0" /
      "T100_seed0.csv";
  REQUIRE(fs::exists(trace_path));
  const std::string csv = slurp(trace_path);
  // header + 100 rows
  long lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 101);
  REQUIRE(fs::exists(dir.path / "a" / "summary.json"));
  REQUIRE(fs::exists(dir.path / "a" / "config.json"));

  const ExperimentConfig c2 = minimal_config(dir.path / "b");
  std::ostringstream out2;
  CHECK(cmd_run(c2, out2) == kExitOk);
  CHECK(slurp(dir.path / "b" / "adagrad" / "welsch_sum_d4" / "sigma0" /
              "T100_seed0.csv") == csv);
  CHECK(slurp(dir.path / "b" / "adagrad" / "welsch_sum_d4" / "sigma0" /
              "T100_seed0.meta.json") ==
        slurp(dir.path / "a" / "adagrad" / "welsch_sum_d4" / "sigma0" /
              "T100_seed0.meta.json"));
}

TEST_CASE("sweep preconditions") {
  TempDir dir("agd_sweep_pre");
  ExperimentConfig c = minimal_config(dir.path / "s");
  c.sweep_axis = "sigma";
  c.sigma_values = {0.0, 0.1};  // too few axis values
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_sweep(c, out), ConfigError);

  c.sigma_values = {0.0, 0.1, 1.0};
  // stochastic sweep with a single seed is rejected
  CHECK_THROWS_AS(cmd_sweep(c, out), ConfigError);
}

TEST_CASE("horizon sweep with exact oracle produces a rate fit") {
  TempDir dir("agd_sweep_run");
  ExperimentConfig c = minimal_config(dir.path / "s");
  c.horizons = {100, 300, 1000};
  c.sweep_axis = "horizon";
  std::ostringstream out;
  CHECK(cmd_sweep(c, out) == kExitOk);
  REQUIRE(fs::exists(dir.path / "s" / "report.json"));
  const std::string report = slurp(dir.path / "s" / "report.json");
  CHECK(report.find("rate_fits") != std::string::npos);
  CHECK(report.find("slope") != std::string::npos);

  // regeneration is byte-identical
  const ExperimentConfig c2 = [&] {
    ExperimentConfig cc = c;
    cc.output_dir = (dir.path / "s2").string();
    return cc;
  }();
  std::ostringstream out2;
  CHECK(cmd_sweep(c2, out2) == kExitOk);
  std::string report2 = slurp(dir.path / "s2" / "report.json");
  // config embeds the output dir, so hashes differ; the rest must match
  const auto strip = [](std::string text, const std::string& needle) {
    const std::size_t at = text.find(needle);
    if (at != std::string::npos) text.erase(at, needle.size() + 24);
    return text;
  };
  CHECK(strip(report, "config_hash") == strip(report2, "config_hash"));
}

TEST_CASE("report on stored traces") {
  TempDir dir("agd_report_test");
  std::ostringstream sink;

  // empty directory: exit code 2
  CHECK(cmd_report((dir.path / "nothing").string(), sink) == kExitConfigError);
  fs::create_directories(dir.path / "empty");
  CHECK(cmd_report((dir.path / "empty").string(), sink) == kExitConfigError);

  // one run, then a second preset into the same directory
  ExperimentConfig c = minimal_config(dir.path / "t");
  std::ostringstream out;
  REQUIRE(cmd_run(c, out) == kExitOk);
  c.preset = {"rsag", "weighted", 1e-2, 0.1};
  REQUIRE(cmd_run(c, out) == kExitOk);

  std::ostringstream table;
  CHECK(cmd_report((dir.path / "t").string(), table) == kExitOk);
  const std::string text = table.str();
  CHECK(text.find("adagrad") != std::string::npos);
  CHECK(text.find("rsag") != std::string::npos);  // grouped by preset
  REQUIRE(fs::exists(dir.path / "t" / "report_summary.csv"));

  // regeneration from the same stored traces is byte-identical
  const std::string summary_csv = slurp(dir.path / "t" / "report_summary.csv");
  std::ostringstream table2;
  CHECK(cmd_report((dir.path / "t").string(), table2) == kExitOk);
  CHECK(table2.str() == text);
  CHECK(slurp(dir.path / "t" / "report_summary.csv") == summary_csv);

  // malformed trace file raises a named parse error
  {
    std::ofstream bad(dir.path / "t" / "adagrad" / "welsch_sum_d4" / "sigma0" /
                      "T100_seed0.csv");
    bad << "garbage\n";
  }
  std::ostringstream sink2;
  try {
    cmd_report((dir.path / "t").string(), sink2);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("T100_seed0.csv") != std::string::npos);
  }
}

TEST_CASE("verify lemmas suite passes and is deterministic") {
  std::ostringstream a, b;
  CHECK(cmd_verify("lemmas", 42, a) == kExitOk);
  CHECK(cmd_verify("lemmas", 42, b) == kExitOk);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("\"verdict\":\"pass\"") != std::string::npos);
  CHECK_THROWS_AS(cmd_verify("bogus", 0, a), ConfigError);
}

TEST_CASE("finite-sum problem from csv runs through the harness") {
  TempDir dir("agd_csv_run");
  const fs::path csv = dir.path / "data.csv";
  {
    std::ofstream f(csv);
    f << "f1,f2,f3,label\n";
    rng::Stream stream(3);
    for (int i = 0; i < 12; ++i)
      f << stream.normal() << "," << stream.normal() << "," << stream.normal()
        << "," << stream.uniform01() << "\n";
  }
  ExperimentConfig c = minimal_config(dir.path / "o");
  c.problem = {"sigmoid_least_squares", 3, {}, csv.string(), 0};
  c.noise = {"minibatch", 1.0, std::nullopt, 4};
  c.horizons = {60};
  std::ostringstream out;
  CHECK(cmd_run(c, out) == kExitOk);
  const fs::path trace = dir.path / "o" / "adagrad" /
                         "sigmoid_least_squares_n12_d3" / "sigma1" /
                         "T60_seed0.csv";
  CHECK(fs::exists(trace));
  const std::string meta = slurp(
      fs::path(trace).replace_extension(".meta.json"));
  CHECK(meta.find("\"f_star_known\": false") != std::string::npos);
}

TEST_CASE("traces do not depend on the worker count") {
  TempDir dir("agd_workers");
  ExperimentConfig c = minimal_config(dir.path / "w1");
  c.noise = {"bounded_sphere", 0.5, std::nullopt, 1};
  c.horizons = {50, 200};
  c.seeds = {0, 1, 2, 3, 4};
  c.workers = 1;
  std::ostringstream out;
  REQUIRE(cmd_run(c, out) == kExitOk);
  c.output_dir = (dir.path / "w4").string();
  c.workers = 4;
  REQUIRE(cmd_run(c, out) == kExitOk);
  for (const char* name : {"T50_seed3.csv", "T200_seed0.csv"}) {
    const fs::path rel =
        fs::path("adagrad") / "welsch_sum_d4" / "sigma0.5" / name;
    CHECK(slurp(dir.path / "w1" / rel) == slurp(dir.path / "w4" / rel));
  }
}

TEST_CASE("divergent run returns the numeric exit code") {
  TempDir dir("agd_diverge");
  ExperimentConfig c = minimal_config(dir.path / "d");
  c.problem = {"quadratic", 1, {4.0}, "", 0};
  c.preset = {"sgd_fixed", "none", 0.0, 50.0};
  std::ostringstream out;
  CHECK(cmd_run(c, out) == kExitNumericError);
  CHECK(out.str().find("failed") != std::string::npos);
}
