// agdlab: experiment harness for adaptive-step-size gradient methods.
//
// Subcommands:
//   run     execute one experiment config, write traces + summary
//   sweep   aggregate a horizon or sigma sweep into a report
//   verify  run the statistical verification suites, emit JSON verdicts
//   report  summarize a directory of stored traces
//
// Exit codes: 0 ok, 1 verification failure, 2 usage/config, 3 numeric.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "agd/experiment.hpp"

namespace {

agd::harness::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw agd::ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return agd::harness::ExperimentConfig::from_json_text(ss.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive gradient experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string suite = "all";
  std::string report_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed, "master seed override")
        ->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--workers", workers, "worker count override");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common(run_cmd, true);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run an axis sweep");
  add_common(sweep_cmd, true);
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "statistical verification suites");
  verify_cmd->add_option("--suite", suite,
                         "lemmas | concentration | pathwise | bounds | all");
  verify_cmd->add_option("--seed", seed, "master seed");
  CLI::App* report_cmd =
      app.add_subcommand("report", "summarize stored traces");
  report_cmd->add_option("dir", report_dir, "traces directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : agd::kExitConfigError;
  }

  try {
    if (run_cmd->parsed() || sweep_cmd->parsed()) {
      agd::harness::ExperimentConfig config = load_config(config_path);
      if (seed_set) config.master_seed = seed;
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (workers >= 0) config.workers = workers;
      return run_cmd->parsed() ? agd::harness::cmd_run(config, std::cout)
                               : agd::harness::cmd_sweep(config, std::cout);
    }
    if (verify_cmd->parsed())
      return agd::harness::cmd_verify(suite == "all" ? "" : suite, seed,
                                      std::cout);
    if (report_cmd->parsed())
      return agd::harness::cmd_report(report_dir, std::cout);
  } catch (const agd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return agd::kExitConfigError;
  } catch (const agd::InvalidParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return agd::kExitConfigError;
  } catch (const agd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return agd::kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return agd::kExitNumericError;
  }
  return agd::kExitConfigError;
}
