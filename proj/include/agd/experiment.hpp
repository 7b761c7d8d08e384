#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agd/analysis.hpp"
#include "agd/errors.hpp"
#include "agd/optimizer.hpp"
#include "agd/oracle.hpp"
#include "agd/problems.hpp"
#include "agd/schedules.hpp"

namespace agd::harness {

inline constexpr const char* kCodeVersion = "agdlab 0.1.0";
inline constexpr const char* kWorkersEnvVar = "AGDLAB_WORKERS";

struct ProblemSpec {
  std::string name = "welsch_sum";
  int dim = 4;
  Vec eigenvalues;           // quadratic
  std::string csv_path;      // sigmoid_least_squares from file
  int synthetic_n = 0;       // sigmoid_least_squares synthetic

  bool operator==(const ProblemSpec&) const = default;
};

struct NoiseSpec {
  std::string kind = "exact";
  double sigma = 0.0;
  std::optional<double> clip;
  int batch_size = 1;

  bool operator==(const NoiseSpec&) const = default;
};

struct PresetSpec {
  std::string kind = "adagrad";
  std::string averaging = "none";
  double g0 = 1e-2;
  double fixed_step = 0.1;

  bool operator==(const PresetSpec&) const = default;
};

struct ExperimentConfig {
  ProblemSpec problem;
  NoiseSpec noise;
  PresetSpec preset;
  std::vector<long> horizons{100};
  std::vector<std::uint64_t> seeds{0};
  std::string metric = "avg_grad_sq";
  double delta = 1e-3;
  std::string output_dir = "out";
  int workers = 0;  // 0 -> environment default
  std::uint64_t master_seed = 0;
  bool check_bounds = true;  // high-probability checks enabled
  std::string sweep_axis = "horizon";  // "horizon" | "sigma"
  std::vector<double> sigma_values;

  bool operator==(const ExperimentConfig&) const = default;

  void validate() const;
  std::string to_json_text() const;
  static ExperimentConfig from_json_text(const std::string& text);
};

std::uint64_t config_hash(const ExperimentConfig& config);

problems::Problem build_problem(const ProblemSpec& spec,
                                std::uint64_t master_seed);
oracle::NoiseModel build_noise(const NoiseSpec& spec);
schedules::Preset build_preset(const PresetSpec& spec);

int default_worker_count();

// One (seed, horizon, sigma) experiment cell.
struct CellResult {
  std::uint64_t seed = 0;
  long horizon = 0;
  double sigma = 0.0;
  bool failed = false;
  std::string error;
  optimizer::RunTrace trace;
};

// Runs all cells of the config (optionally overriding sigma) on a worker
// pool; results come back in deterministic (sigma, horizon, seed) order.
std::vector<CellResult> run_cells(const ExperimentConfig& config,
                                  const std::vector<double>& sigma_axis,
                                  int workers);

// Directory layout: <out>/<preset>/<problem>/<sigma>/T<T>_seed<seed>.csv
std::string cell_relative_path(const ExperimentConfig& config,
                               const CellResult& cell);

// CLI entry points; each returns a process exit code.
int cmd_run(const ExperimentConfig& config, std::ostream& out);
int cmd_sweep(const ExperimentConfig& config, std::ostream& out);
int cmd_verify(const std::string& suite, std::uint64_t master_seed,
               std::ostream& out);
int cmd_report(const std::string& traces_dir, std::ostream& out);

}  // namespace agd::harness
