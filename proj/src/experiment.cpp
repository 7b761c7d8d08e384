#include "agd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace agd::harness {

namespace {

constexpr std::uint64_t kProblemSalt = 0x50524f424c454dull;
constexpr std::uint64_t kSeedSalt = 0x5345454453ull;
constexpr std::uint64_t kVerifySalt = 0x56455249ull;

using optimizer::format_double;

std::string hash_hex(std::uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

json clip_to_json(const std::optional<double>& clip) {
  if (!clip) return nullptr;
  return *clip;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (horizons.empty()) throw ConfigError("config needs at least one horizon");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    if (horizons[i] < 1) throw ConfigError("horizons must be >= 1");
    if (i > 0 && horizons[i] <= horizons[i - 1])
      throw ConfigError("horizons must be strictly increasing");
  }
  if (seeds.empty()) throw ConfigError("config needs at least one seed");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size())
    throw ConfigError("seeds must be distinct");
  optimizer::metric_from_string(metric);
  if (check_bounds && !(delta > 0.0 && delta < 1.0 / 2.718281828459045))
    throw ConfigError(
        "delta must lie in (0, 1/e) when high-probability checks are enabled");
  if (workers < 0) throw ConfigError("workers must be >= 0");
  if (sweep_axis != "horizon" && sweep_axis != "sigma")
    throw ConfigError("sweep axis must be 'horizon' or 'sigma'");
  build_noise(noise);   // validates kind/sigma coupling
  build_preset(preset); // validates preset invariants
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["problem"] = {{"name", problem.name},
                  {"dim", problem.dim},
                  {"eigenvalues", problem.eigenvalues},
                  {"csv", problem.csv_path},
                  {"synthetic_n", problem.synthetic_n}};
  j["noise"] = {{"kind", noise.kind},
                {"sigma", noise.sigma},
                {"clip", clip_to_json(noise.clip)},
                {"batch_size", noise.batch_size}};
  j["preset"] = {{"kind", preset.kind},
                 {"averaging", preset.averaging},
                 {"g0", preset.g0},
                 {"fixed_step", preset.fixed_step}};
  j["horizons"] = horizons;
  j["seeds"] = seeds;
  j["metric"] = metric;
  j["delta"] = delta;
  j["output_dir"] = output_dir;
  j["workers"] = workers;
  j["master_seed"] = master_seed;
  j["check_bounds"] = check_bounds;
  j["sweep"] = {{"axis", sweep_axis}, {"values", sigma_values}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    if (j.contains("problem")) {
      const json& p = j["problem"];
      c.problem.name = p.value("name", c.problem.name);
      c.problem.dim = p.value("dim", c.problem.dim);
      c.problem.eigenvalues = p.value("eigenvalues", c.problem.eigenvalues);
      c.problem.csv_path = p.value("csv", c.problem.csv_path);
      c.problem.synthetic_n = p.value("synthetic_n", c.problem.synthetic_n);
    }
    if (j.contains("noise")) {
      const json& n = j["noise"];
      c.noise.kind = n.value("kind", c.noise.kind);
      c.noise.sigma = n.value("sigma", c.noise.sigma);
      if (n.contains("clip") && !n["clip"].is_null())
        c.noise.clip = n["clip"].get<double>();
      c.noise.batch_size = n.value("batch_size", c.noise.batch_size);
    }
    if (j.contains("preset")) {
      const json& p = j["preset"];
      c.preset.kind = p.value("kind", c.preset.kind);
      c.preset.averaging = p.value("averaging", c.preset.averaging);
      c.preset.g0 = p.value("g0", c.preset.g0);
      c.preset.fixed_step = p.value("fixed_step", c.preset.fixed_step);
    }
    c.horizons = j.value("horizons", c.horizons);
    if (j.contains("seeds")) {
      if (j["seeds"].is_number()) {
        const long n = j["seeds"].get<long>();
        if (n < 1) throw ConfigError("seed count must be >= 1");
        c.seeds.clear();
        for (long i = 0; i < n; ++i)
          c.seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      }
    }
    c.metric = j.value("metric", c.metric);
    c.delta = j.value("delta", c.delta);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
    c.master_seed = j.value("master_seed", c.master_seed);
    c.check_bounds = j.value("check_bounds", c.check_bounds);
    if (j.contains("sweep")) {
      c.sweep_axis = j["sweep"].value("axis", c.sweep_axis);
      c.sigma_values = j["sweep"].value("values", c.sigma_values);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  const std::string text = config.to_json_text();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

problems::Problem build_problem(const ProblemSpec& spec,
                                std::uint64_t master_seed) {
  if (spec.name == "quadratic") {
    Vec eig = spec.eigenvalues;
    if (eig.empty()) eig.assign(static_cast<std::size_t>(spec.dim), 1.0);
    return problems::make_quadratic(spec.dim, eig);
  }
  if (spec.name == "welsch_sum") return problems::make_welsch_sum(spec.dim);
  if (spec.name == "cosine_valley")
    return problems::make_cosine_valley(spec.dim);
  if (spec.name == "sigmoid_least_squares") {
    if (!spec.csv_path.empty())
      return problems::load_sigmoid_least_squares_csv(spec.csv_path);
    const int n = spec.synthetic_n > 0 ? spec.synthetic_n : 32;
    rng::Stream stream(rng::derive(master_seed, kProblemSalt));
    return problems::make_synthetic_sigmoid(n, spec.dim, stream);
  }
  throw ConfigError("unknown problem: " + spec.name);
}

oracle::NoiseModel build_noise(const NoiseSpec& spec) {
  oracle::NoiseModel m;
  m.kind = oracle::noise_kind_from_string(spec.kind);
  m.sigma = spec.sigma;
  m.clip = spec.clip;
  m.batch_size = spec.batch_size;
  m.validate();
  return m;
}

schedules::Preset build_preset(const PresetSpec& spec) {
  schedules::Preset p;
  p.kind = schedules::preset_kind_from_string(spec.kind);
  p.averaging = schedules::averaging_from_string(spec.averaging);
  p.g0 = spec.g0;
  p.fixed_step = spec.fixed_step;
  p.validate();
  return p;
}

int default_worker_count() {
  if (const char* env = std::getenv(kWorkersEnvVar)) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// sigma = 0 collapses any noise kind to the exact oracle
oracle::NoiseModel noise_with_sigma(const NoiseSpec& spec, double sigma) {
  if (sigma == 0.0) return oracle::NoiseModel::exact();
  NoiseSpec s = spec;
  s.sigma = sigma;
  if (s.kind == "exact") s.kind = "subgaussian_gaussian";
  return build_noise(s);
}

}  // namespace

std::vector<CellResult> run_cells(const ExperimentConfig& config,
                                  const std::vector<double>& sigma_axis,
                                  int workers) {
  const problems::Problem problem =
      build_problem(config.problem, config.master_seed);
  const schedules::Preset preset = build_preset(config.preset);

  struct Cell {
    double sigma;
    long horizon;
    std::uint64_t seed_label;
  };
  std::vector<Cell> cells;
  for (double sigma : sigma_axis)
    for (long horizon : config.horizons)
      for (std::uint64_t seed : config.seeds)
        cells.push_back({sigma, horizon, seed});

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker_loop = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) break;
      const Cell& cell = cells[i];
      CellResult& r = results[i];
      r.seed = cell.seed_label;
      r.horizon = cell.horizon;
      r.sigma = cell.sigma;
      try {
        const oracle::NoiseModel model = noise_with_sigma(config.noise, cell.sigma);
        const std::uint64_t run_seed = rng::derive(
            rng::derive(config.master_seed, kSeedSalt), cell.seed_label);
        const Vec x1 = optimizer::default_start(problem, run_seed);
        r.trace = optimizer::run(problem, model, preset, cell.horizon,
                                 run_seed, x1);
      } catch (const optimizer::DivergenceError& e) {
        r.failed = true;
        r.error = e.what();
        r.trace = e.partial;
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  };

  const int n_workers = std::max(
      1, std::min<int>(workers > 0 ? workers : default_worker_count(),
                       static_cast<int>(cells.size())));
  if (n_workers == 1) {
    worker_loop();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker_loop);
    for (std::thread& th : pool) th.join();
  }
  return results;
}

std::string cell_relative_path(const ExperimentConfig& config,
                               const CellResult& cell) {
  std::string preset_dir = config.preset.kind;
  if (config.preset.averaging == "uniform") preset_dir += "-uniform";
  const std::string problem_dir =
      build_problem(config.problem, config.master_seed).name;
  return preset_dir + "/" + problem_dir + "/sigma" + format_double(cell.sigma) +
         "/T" + std::to_string(cell.horizon) + "_seed" +
         std::to_string(cell.seed) + ".csv";
}

namespace {

void write_cell(const ExperimentConfig& config, const CellResult& cell) {
  const fs::path rel = cell_relative_path(config, cell);
  const fs::path csv_path = fs::path(config.output_dir) / rel;
  fs::create_directories(csv_path.parent_path());
  write_text_file(csv_path, optimizer::to_csv(cell.trace));
  fs::path meta_path = csv_path;
  meta_path.replace_extension(".meta.json");
  write_text_file(meta_path, optimizer::meta_to_json_text(cell.trace.meta));
}

json cell_summary_json(const ExperimentConfig& config, const CellResult& cell) {
  json j;
  j["seed"] = cell.seed;
  j["horizon"] = cell.horizon;
  j["sigma"] = cell.sigma;
  j["failed"] = cell.failed;
  if (cell.failed) {
    j["error"] = cell.error;
  } else {
    j["path"] = cell_relative_path(config, cell);
    j["metrics"] = {
        {"avg_grad_sq", cell.trace.meta.avg_grad_sq},
        {"min_grad_sq", cell.trace.meta.min_grad_sq},
        {"final_sub", cell.trace.meta.final_f_sub},
        {"delta_max", cell.trace.meta.delta_max},
    };
  }
  return j;
}

}  // namespace

int cmd_run(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  fs::create_directories(config.output_dir);
  write_text_file(fs::path(config.output_dir) / "config.json",
                  config.to_json_text());

  const std::vector<CellResult> cells =
      run_cells(config, {config.noise.sigma}, config.workers);

  json summary;
  summary["code_version"] = kCodeVersion;
  summary["config_hash"] = hash_hex(config_hash(config));
  summary["cells"] = json::array();
  long n_failed = 0;
  for (const CellResult& cell : cells) {
    if (cell.failed) {
      ++n_failed;
      out << "run failed (seed " << cell.seed << ", T " << cell.horizon
          << "): " << cell.error << "\n";
    } else {
      write_cell(config, cell);
    }
    summary["cells"].push_back(cell_summary_json(config, cell));
  }
  summary["n_failed"] = n_failed;
  write_text_file(fs::path(config.output_dir) / "summary.json",
                  summary.dump(2) + "\n");

  out << "wrote " << (cells.size() - static_cast<std::size_t>(n_failed))
      << " trace(s) under " << config.output_dir << "\n";
  return n_failed == 0 ? kExitOk : kExitNumericError;
}

namespace {

struct GroupStats {
  long horizon;
  std::size_t n;
  double mean;
  double median;
  double q90;
  double hp_q_level;  // 1 - 8 log(T) delta; <= 0 when vacuous
  double hp_quantile; // NaN when vacuous
};

GroupStats group_stats(long horizon, std::vector<double> values, double delta) {
  GroupStats s{};
  s.horizon = horizon;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = analysis::quantile(values, 0.5);
  s.q90 = analysis::quantile(values, 0.9);
  s.hp_q_level = 1.0 - 8.0 * std::log(static_cast<double>(horizon)) * delta;
  s.hp_quantile = (s.hp_q_level > 0.0 && s.hp_q_level < 1.0)
                      ? analysis::quantile(values, s.hp_q_level)
                      : std::numeric_limits<double>::quiet_NaN();
  return s;
}

// The almost-sure bound on |g| implied by a model, when one exists.
std::optional<double> stoch_grad_bound(const oracle::NoiseModel& model,
                                       const problems::Problem& problem) {
  switch (model.kind) {
    case oracle::NoiseKind::exact:
      return problem.gradient_bound_finite()
                 ? std::optional<double>(problem.gradient_bound)
                 : std::nullopt;
    case oracle::NoiseKind::bounded_sphere:
      return problem.gradient_bound_finite()
                 ? std::optional<double>(problem.gradient_bound + model.sigma)
                 : std::nullopt;
    case oracle::NoiseKind::truncated_gaussian:
      return model.resolve_clip(problem);
    default:
      return std::nullopt;
  }
}

// Quantile-dominance bound reports for one (sigma, preset) group. The
// objective-gap symbol is sourced two ways per horizon: the logarithmic
// function bound and the empirical trajectory maximum; each report names
// its source in the inputs map.
std::vector<analysis::BoundReport> group_bound_reports(
    const ExperimentConfig& config, const problems::Problem& problem,
    const oracle::NoiseModel& model, double delta1_max,
    const std::map<long, GroupStats>& stats,
    const std::map<long, double>& empirical_delta_max) {
  std::vector<analysis::BoundReport> reports;
  const schedules::Preset preset = build_preset(config.preset);
  const bool averaged =
      preset.kind == schedules::PresetKind::adagrad_averaging ||
      preset.kind == schedules::PresetKind::rsag;
  if (preset.kind == schedules::PresetKind::sgd_fixed) return reports;
  if (!problem.gradient_bound_finite()) return reports;
  const std::optional<double> g_hat = stoch_grad_bound(model, problem);

  for (const auto& [horizon, s] : stats) {
    if (std::isnan(s.hp_quantile)) continue;  // vacuous failure budget
    const double t = static_cast<double>(horizon);
    if (g_hat) {
      const auto rate_bound = [&](double dmax) {
        return averaged ? analysis::bound_rsag(dmax, problem.smoothness,
                                               problem.gradient_bound, *g_hat,
                                               model.sigma, preset.g0,
                                               config.delta, t)
                        : analysis::bound_highprob_adagrad(
                              dmax, problem.smoothness, problem.gradient_bound,
                              *g_hat, model.sigma, preset.g0, config.delta, t);
      };
      const std::string name =
          averaged ? "rsag_averaging_highprob" : "adagrad_highprob";
      std::map<std::string, double> inputs{{"delta_1", delta1_max},
                                           {"L", problem.smoothness},
                                           {"G", problem.gradient_bound},
                                           {"G_hat", *g_hat},
                                           {"sigma", model.sigma},
                                           {"G0", preset.g0},
                                           {"delta", config.delta},
                                           {"T", t}};
      const double dmax_fb = analysis::function_bound_delta_max(
          delta1_max, problem.smoothness, problem.gradient_bound, *g_hat,
          model.sigma, preset.g0, config.delta, t);
      auto fb_inputs = inputs;
      fb_inputs["delta_max_source_function_bound"] = dmax_fb;
      reports.push_back(analysis::make_bound_report(
          name, rate_bound(dmax_fb), s.hp_quantile, fb_inputs));
      const auto emp = empirical_delta_max.find(horizon);
      if (emp != empirical_delta_max.end()) {
        auto emp_inputs = inputs;
        emp_inputs["delta_max_source_empirical"] = emp->second;
        reports.push_back(analysis::make_bound_report(
            name + "_empirical_dmax", rate_bound(emp->second), s.hp_quantile,
            emp_inputs));
      }
    }
    if (!averaged && model.satisfies_subgaussian() && model.sigma > 0.0) {
      const double dmax = analysis::subgaussian_delta_max(
          delta1_max, problem.smoothness, problem.gradient_bound, model.sigma,
          preset.g0, config.delta, t);
      const double bound = analysis::bound_subgaussian(
          dmax, problem.smoothness, model.sigma, preset.g0, config.delta, t);
      reports.push_back(analysis::make_bound_report(
          "adagrad_subgaussian", bound, s.hp_quantile,
          {{"delta_max_source_subgaussian_bound", dmax},
           {"delta_1", delta1_max},
           {"L", problem.smoothness},
           {"sigma", model.sigma},
           {"G0", preset.g0},
           {"delta", config.delta},
           {"T", t}}));
    }
  }
  return reports;
}

json stats_json(double sigma, const GroupStats& s) {
  json j;
  j["sigma"] = sigma;
  j["T"] = s.horizon;
  j["n_seeds"] = s.n;
  j["mean"] = s.mean;
  j["median"] = s.median;
  j["q90"] = s.q90;
  j["hp_q_level"] = s.hp_q_level;
  if (std::isnan(s.hp_quantile))
    j["hp_quantile"] = "vacuous failure-budget";
  else
    j["hp_quantile"] = s.hp_quantile;
  return j;
}

json verdict_json(const analysis::McVerdict& v) {
  json j;
  j["check"] = v.check;
  j["params"] = json::parse(v.params);
  j["estimate"] = v.estimate;
  j["stderr"] = v.stderr_;
  j["bound"] = v.bound;
  j["verdict"] = v.pass ? "pass" : "fail";
  return j;
}

json bound_json(const analysis::BoundReport& b) {
  json j;
  j["bound_name"] = b.bound_name;
  j["theoretical"] = b.theoretical;
  j["empirical"] = b.empirical;
  j["holds"] = b.holds;
  j["inputs"] = b.inputs;
  return j;
}

// Deterministic property-style verdicts reuse the MC verdict record with a
// zero probability budget.
analysis::McVerdict property_verdict(const std::string& check,
                                     const json& params, long violations,
                                     long trials) {
  analysis::McVerdict v;
  v.check = check;
  v.params = params.dump();
  v.estimate =
      trials > 0 ? static_cast<double>(violations) / static_cast<double>(trials)
                 : 0.0;
  v.stderr_ = 0.0;
  v.bound = 0.0;
  v.pass = violations == 0;
  return v;
}

}  // namespace

int cmd_sweep(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  const bool sigma_axis = config.sweep_axis == "sigma";
  if (sigma_axis) {
    if (config.sigma_values.size() < 3)
      throw ConfigError("sigma sweep needs at least 3 axis values");
  } else if (config.horizons.size() < 3) {
    throw ConfigError("horizon sweep needs at least 3 horizons");
  }
  const std::vector<double> axis =
      sigma_axis ? config.sigma_values : std::vector<double>{config.noise.sigma};
  const bool stochastic =
      std::any_of(axis.begin(), axis.end(), [](double s) { return s > 0.0; });
  if (stochastic && config.seeds.size() < 20)
    throw ConfigError("stochastic sweeps need at least 20 seeds");

  fs::create_directories(config.output_dir);
  write_text_file(fs::path(config.output_dir) / "config.json",
                  config.to_json_text());

  const problems::Problem problem =
      build_problem(config.problem, config.master_seed);
  const optimizer::Metric metric = optimizer::metric_from_string(config.metric);
  const std::vector<CellResult> cells =
      run_cells(config, axis, config.workers);

  long n_failed = 0;
  for (const CellResult& cell : cells) {
    if (cell.failed) {
      ++n_failed;
      out << "run failed (sigma " << format_double(cell.sigma) << ", seed "
          << cell.seed << ", T " << cell.horizon << "): " << cell.error << "\n";
    } else {
      write_cell(config, cell);
    }
  }
  if (n_failed > 0) return kExitNumericError;

  json report;
  report["provenance"] = {{"config_hash", hash_hex(config_hash(config))},
                          {"code_version", kCodeVersion}};
  report["metric"] = config.metric;
  report["quantile_table"] = json::array();
  report["rate_fits"] = json::array();
  report["bounds"] = json::array();
  report["sigma_slopes"] = json::array();

  std::vector<std::pair<double, double>> sigma_slopes;
  for (double sigma : axis) {
    std::map<long, std::vector<double>> by_horizon;
    std::map<long, double> delta1_max;
    std::map<long, double> empirical_dmax;
    for (const CellResult& cell : cells) {
      if (cell.sigma != sigma) continue;
      by_horizon[cell.horizon].push_back(
          optimizer::report_metric(cell.trace, metric));
      double& d1 = delta1_max[cell.horizon];
      d1 = std::max(d1, cell.trace.records.front().f_sub);
      double& dm = empirical_dmax[cell.horizon];
      dm = std::max(dm, cell.trace.meta.delta_max);
    }
    std::map<long, GroupStats> stats;
    std::vector<std::pair<double, double>> fit_points;
    double delta1 = 0.0;
    for (auto& [horizon, values] : by_horizon) {
      stats[horizon] = group_stats(horizon, values, config.delta);
      fit_points.emplace_back(static_cast<double>(horizon),
                              stats[horizon].q90);
      delta1 = std::max(delta1, delta1_max[horizon]);
      report["quantile_table"].push_back(stats_json(sigma, stats[horizon]));
    }
    if (fit_points.size() >= 3) {
      const analysis::RateFit fit = analysis::fit_rate(fit_points);
      sigma_slopes.emplace_back(sigma, fit.slope);
      json fj;
      fj["sigma"] = sigma;
      fj["metric"] = config.metric;
      fj["quantile"] = 0.9;
      fj["slope"] = fit.slope;
      fj["intercept"] = fit.intercept;
      fj["r_squared"] = fit.r_squared;
      fj["points"] = fit.points;
      report["rate_fits"].push_back(fj);
    }
    if (config.check_bounds) {
      const oracle::NoiseModel model = noise_with_sigma(config.noise, sigma);
      for (const analysis::BoundReport& b : group_bound_reports(
               config, problem, model, delta1, stats, empirical_dmax))
        report["bounds"].push_back(bound_json(b));
    }
  }

  for (const auto& [sigma, slope] : sigma_slopes)
    report["sigma_slopes"].push_back({sigma, slope});
  if (sigma_axis && sigma_slopes.size() >= 2) {
    bool monotone = true;
    for (std::size_t i = 1; i < sigma_slopes.size(); ++i)
      if (-sigma_slopes[i].second > -sigma_slopes[i - 1].second)
        monotone = false;
    report["decay_rates_non_increasing"] = monotone;
  }

  // fast lemma / concentration verdicts accompany every sweep report
  {
    rng::Stream stream(rng::derive(config.master_seed, kVerifySalt));
    report["lemma_verdicts"] = json::array();
    long viol = 0;
    const long n_seq = 200;
    for (long s = 0; s < n_seq; ++s) {
      const long len = 1 + static_cast<long>(stream.uniform_index(200));
      double total = 0.0, lhs = 0.0;
      for (long i = 0; i < len; ++i) {
        const double a = stream.uniform01() < 0.1 ? 0.0 : 10.0 * stream.uniform01();
        total += a;
        if (total > 0.0) lhs += a / std::sqrt(total);
      }
      const double root = std::sqrt(total);
      if (lhs < root * (1.0 - 1e-9) || lhs > 2.0 * root * (1.0 + 1e-9)) ++viol;
    }
    report["lemma_verdicts"].push_back(
        verdict_json(property_verdict("lemma_sqrt_sums", {{"sequences", n_seq}},
                                      viol, n_seq)));
    rng::Stream mc(rng::derive(config.master_seed, kVerifySalt + 1));
    report["concentration_verdicts"] = json::array();
    report["concentration_verdicts"].push_back(verdict_json(
        analysis::freedman_check(analysis::BoundedMds::rademacher(1.0), 50,
                                 0.05, 20000, mc)));
  }

  write_text_file(fs::path(config.output_dir) / "report.json",
                  report.dump(2) + "\n");
  out << report.dump(2) << "\n";
  return kExitOk;
}

// ---- verify suites ----

namespace {

void emit(std::ostream& out, const json& j, bool pass, bool& all_pass) {
  out << j.dump() << "\n";
  if (!pass) all_pass = false;
}

void verify_lemmas(std::uint64_t master_seed, std::ostream& out,
                   bool& all_pass) {
  rng::Stream stream(rng::derive(master_seed, 0x4c454d4dull));

  // Lemma corpus: 1000 random non-negative sequences of length <= 200.
  const long n_seq = 1000;
  long sqrt_viol = 0, log_viol = 0;
  for (long s = 0; s < n_seq; ++s) {
    const long len = 1 + static_cast<long>(stream.uniform_index(200));
    Vec a(static_cast<std::size_t>(len));
    for (double& v : a) {
      const double u = stream.uniform01();
      if (u < 0.15) v = 0.0;  // zero prefixes are part of the corpus
      else if (u < 0.9) v = 10.0 * stream.uniform01();
      else v = 1000.0 * stream.uniform01();
    }
    double total = 0.0, sqrt_sum = 0.0, log_sum = 0.0;
    for (double v : a) {
      total += v;
      if (total > 0.0) {  // skip terms with zero prefix sum
        sqrt_sum += v / std::sqrt(total);
        log_sum += v / total;
      }
    }
    const double root = std::sqrt(total);
    if (sqrt_sum < root * (1.0 - 1e-9) ||
        sqrt_sum > 2.0 * root * (1.0 + 1e-9))
      ++sqrt_viol;
    if (log_sum > (1.0 + std::log(1.0 + total)) * (1.0 + 1e-9)) ++log_viol;
  }
  emit(out,
       verdict_json(property_verdict("lemma_sqrt_sums",
                                     {{"sequences", n_seq}, {"max_len", 200}},
                                     sqrt_viol, n_seq)),
       sqrt_viol == 0, all_pass);
  emit(out,
       verdict_json(property_verdict("lemma_log_sums",
                                     {{"sequences", n_seq}, {"max_len", 200}},
                                     log_viol, n_seq)),
       log_viol == 0, all_pass);

  // Gamma recursion vs closed forms up to 1e4.
  long gamma_viol = 0;
  for (schedules::Averaging avg :
       {schedules::Averaging::weighted, schedules::Averaging::uniform}) {
    const std::vector<double> g = schedules::gamma_seq(avg, 10000);
    for (long t = 1; t <= 10000; ++t) {
      const double closed = schedules::gamma_closed_form(avg, t);
      if (std::fabs(g[static_cast<std::size_t>(t - 1)] - closed) >
          1e-12 * closed)
        ++gamma_viol;
    }
  }
  emit(out,
       verdict_json(property_verdict("gamma_closed_form", {{"T", 10000}},
                                     gamma_viol, 20000)),
       gamma_viol == 0, all_pass);

  // Summation-weight grid. The uniform logarithmic bound is stated for
  // t >= 2 (at t = 1 the weight is the full harmonic sum, which exceeds
  // log(T+1)); the weighted bound covers the whole grid.
  const long grid_horizon = 500;
  long star_viol = 0, star_trials = 0;
  {
    const schedules::TermStarTable weighted(schedules::Averaging::weighted,
                                            grid_horizon);
    const schedules::TermStarTable uniform(schedules::Averaging::uniform,
                                           grid_horizon);
    for (long horizon = 1; horizon <= grid_horizon; ++horizon) {
      for (long t = 1; t <= horizon; ++t) {
        ++star_trials;
        if (weighted.value(t, horizon) > 2.0 * (1.0 + 1e-12)) ++star_viol;
        if (t >= 2) {
          ++star_trials;
          if (uniform.value(t, horizon) >
              std::log(static_cast<double>(horizon) + 1.0) * (1.0 + 1e-12))
            ++star_viol;
        }
      }
    }
  }
  emit(out,
       verdict_json(property_verdict(
           "term_star_grid",
           {{"T_max", grid_horizon}, {"uniform_from_t", 2}}, star_viol,
           star_trials)),
       star_viol == 0, all_pass);

  // |gamma_t - eta_t| = alpha_t * eta_tilde_t for the weighted presets.
  long id_viol = 0;
  for (long trial = 0; trial < 200; ++trial) {
    schedules::Accumulator acc = schedules::make_accumulator(0.01);
    const long t = 1 + static_cast<long>(stream.uniform_index(1000));
    for (long k = 0; k < t; ++k) acc.add(stream.uniform01() * 5.0);
    const double e = schedules::eta_tilde(acc);
    const double a = schedules::alpha(schedules::Averaging::weighted, t);
    const auto avg_pair = schedules::step_pair(
        schedules::Preset::adagrad_averaging(0.01), t, acc);
    const auto rsag_pair =
        schedules::step_pair(schedules::Preset::rsag(0.01), t, acc);
    if (std::fabs(std::fabs(avg_pair.gamma - avg_pair.eta) - a * e) > 1e-15)
      ++id_viol;
    if (std::fabs(std::fabs(rsag_pair.gamma - rsag_pair.eta) - a * e) > 1e-15)
      ++id_viol;
  }
  emit(out,
       verdict_json(property_verdict("step_gap_identity", {{"trials", 200}},
                                     id_viol, 400)),
       id_viol == 0, all_pass);
}

void verify_concentration(std::uint64_t master_seed, std::ostream& out,
                          bool& all_pass) {
  rng::Stream stream(rng::derive(master_seed, 0x434f4e43ull));
  for (double delta : {0.01, 0.05}) {
    const analysis::McVerdict v = analysis::freedman_check(
        analysis::BoundedMds::rademacher(1.0), 100, delta, 100000, stream);
    emit(out, verdict_json(v), v.pass, all_pass);
  }
  {
    const analysis::McVerdict v = analysis::freedman_check(
        analysis::BoundedMds::rademacher(0.5), 100, 0.05, 100000, stream);
    emit(out, verdict_json(v), v.pass, all_pass);
  }
  {
    Vec v(4, 0.5);
    const analysis::McVerdict m = analysis::mgf_mds_check(
        analysis::MgfMds::noise_inner_product(4, 1.0, v), 50, 1.0, 0.05,
        100000, stream);
    emit(out, verdict_json(m), m.pass, all_pass);
    const analysis::McVerdict m2 = analysis::mgf_mds_modified_check(
        4, 1.0, 50, 0.05, 100000, stream);
    emit(out, verdict_json(m2), m2.pass, all_pass);
  }
  {
    const analysis::McVerdict v = analysis::max_noise_check(
        oracle::NoiseModel::subgaussian_gaussian(1.0), 4, 100, 0.05, 10000,
        stream);
    emit(out, verdict_json(v), v.pass, all_pass);
  }
}

void verify_pathwise(std::uint64_t master_seed, std::ostream& out,
                     bool& all_pass) {
  rng::Stream stream(rng::derive(master_seed, 0x50415448ull));

  // problem catalogue invariants
  std::vector<problems::Problem> catalogue;
  catalogue.push_back(problems::make_quadratic(2, {1.0, 4.0}));
  catalogue.push_back(problems::make_welsch_sum(4));
  catalogue.push_back(problems::make_cosine_valley(3));
  catalogue.push_back(problems::make_synthetic_sigmoid(24, 4, stream));
  for (const problems::Problem& p : catalogue) {
    const problems::PropertyCheck fd =
        problems::check_gradient_finite_difference(p, 100, 1e-5, stream);
    emit(out,
         verdict_json(property_verdict(fd.name, {{"points", fd.trials}},
                                       fd.violations, fd.trials)),
         fd.pass, all_pass);
    const problems::PropertyCheck dl =
        problems::check_descent_lemma(p, p.smoothness, 1000, 1e-10, stream);
    emit(out,
         verdict_json(property_verdict(dl.name, {{"pairs", dl.trials}},
                                       dl.violations, dl.trials)),
         dl.pass, all_pass);
    if (p.gradient_bound_finite() && !p.is_finite_sum()) {
      const problems::PropertyCheck gb =
          problems::check_gradient_bound(p, 10000, 100.0, stream);
      emit(out,
           verdict_json(property_verdict(gb.name, {{"points", gb.trials}},
                                         gb.violations, gb.trials)),
           gb.pass, all_pass);
    }
    if (p.is_finite_sum()) {
      const problems::PropertyCheck cm =
          problems::check_component_mean(p, 20, 1e-12, stream);
      emit(out,
           verdict_json(property_verdict(cm.name, {{"points", cm.trials}},
                                         cm.violations, cm.trials)),
           cm.pass, all_pass);
    }
  }

  // pathwise trajectory inequalities on random configurations
  long path_viol = 0;
  const long n_runs = 10;
  for (long r = 0; r < n_runs; ++r) {
    const problems::Problem& p =
        catalogue[stream.uniform_index(catalogue.size())];
    std::vector<oracle::NoiseModel> models{oracle::NoiseModel::exact(),
                                           oracle::NoiseModel::bounded_sphere(0.5)};
    if (p.gradient_bound_finite())
      models.push_back(oracle::NoiseModel::truncated_gaussian(0.5));
    models.push_back(oracle::NoiseModel::subgaussian_gaussian(0.7));
    if (p.is_finite_sum())
      models.push_back(oracle::NoiseModel::minibatch(4, 1.0));
    const oracle::NoiseModel model = models[stream.uniform_index(models.size())];
    std::vector<schedules::Preset> presets{
        schedules::Preset::adagrad(0.01),
        schedules::Preset::adagrad_averaging(0.01),
        schedules::Preset::rsag(0.01), schedules::Preset::sgd_fixed(0.2)};
    const schedules::Preset preset = presets[stream.uniform_index(presets.size())];
    const long horizon = 50 + static_cast<long>(stream.uniform_index(200));
    const std::uint64_t seed = stream.next_u64();
    const optimizer::RunTrace trace = optimizer::run(
        p, model, preset, horizon, seed, optimizer::default_start(p, seed));
    if (!analysis::check_pathwise(trace).holds) ++path_viol;
  }
  emit(out,
       verdict_json(property_verdict("pathwise_inequalities",
                                     {{"runs", n_runs}}, path_viol, n_runs)),
       path_viol == 0, all_pass);

  // negative control: a halved smoothness constant must be caught
  const problems::Problem q = problems::make_quadratic(2, {1.0, 4.0});
  const problems::PropertyCheck corrupted = problems::check_descent_lemma(
      q, 0.5 * q.smoothness, 1000, 1e-10, stream);
  emit(out,
       verdict_json(property_verdict("negative_control_corrupted_smoothness",
                                     {{"pairs", corrupted.trials},
                                      {"violations", corrupted.violations}},
                                     corrupted.violations > 0 ? 0 : 1, 1)),
       !corrupted.pass, all_pass);
}

void verify_bounds(std::uint64_t master_seed, std::ostream& out,
                   bool& all_pass) {
  // deterministic rate dominance
  const problems::Problem welsch = problems::make_welsch_sum(6);
  const Vec x1(6, 2.0);
  for (long horizon : {100L, 1000L}) {
    const optimizer::RunTrace trace =
        optimizer::run(welsch, oracle::NoiseModel::exact(),
                       schedules::Preset::adagrad(0.0), horizon, 1, x1);
    const double delta1 = trace.records.front().f_sub;
    const double bound =
        analysis::bound_deterministic_adagrad(delta1, welsch.smoothness) /
        static_cast<double>(horizon);
    const double avg =
        optimizer::report_metric(trace, optimizer::Metric::avg_grad_sq);
    const analysis::BoundReport rep = analysis::make_bound_report(
        "deterministic_adagrad", bound, avg,
        {{"delta_1", delta1}, {"L", welsch.smoothness},
         {"T", static_cast<double>(horizon)}});
    emit(out, bound_json(rep), rep.holds, all_pass);
  }

  // stochastic quantile dominance at desk scale
  ExperimentConfig cfg;
  cfg.problem = {"welsch_sum", 4, {}, "", 0};
  cfg.noise = {"truncated_gaussian", 0.5, std::nullopt, 1};
  cfg.preset = {"adagrad", "none", 0.01, 0.1};
  cfg.horizons = {200, 1000};
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < 24; ++s) cfg.seeds.push_back(s);
  cfg.master_seed = master_seed;
  for (const char* kind : {"adagrad", "rsag", "adagrad_averaging"}) {
    cfg.preset.kind = kind;
    cfg.preset.averaging =
        std::string(kind) == "adagrad" ? "none" : "weighted";
    const problems::Problem problem = build_problem(cfg.problem, cfg.master_seed);
    const oracle::NoiseModel model = build_noise(cfg.noise);
    const std::vector<CellResult> cells =
        run_cells(cfg, {cfg.noise.sigma}, cfg.workers);
    std::map<long, std::vector<double>> by_horizon;
    std::map<long, double> empirical_dmax;
    double delta1 = 0.0;
    for (const CellResult& c : cells) {
      if (c.failed) throw NumericError("verify bounds run failed: " + c.error);
      by_horizon[c.horizon].push_back(
          optimizer::report_metric(c.trace, optimizer::Metric::avg_grad_sq));
      delta1 = std::max(delta1, c.trace.records.front().f_sub);
      double& dm = empirical_dmax[c.horizon];
      dm = std::max(dm, c.trace.meta.delta_max);
    }
    std::map<long, GroupStats> stats;
    for (auto& [horizon, values] : by_horizon)
      stats[horizon] = group_stats(horizon, values, cfg.delta);
    for (const analysis::BoundReport& rep : group_bound_reports(
             cfg, problem, model, delta1, stats, empirical_dmax))
      emit(out, bound_json(rep), rep.holds, all_pass);
  }
}

}  // namespace

int cmd_verify(const std::string& suite, std::uint64_t master_seed,
               std::ostream& out) {
  bool all_pass = true;
  const bool all = suite.empty() || suite == "all";
  if (!all && suite != "lemmas" && suite != "concentration" &&
      suite != "pathwise" && suite != "bounds")
    throw ConfigError("unknown verify suite: " + suite);
  if (all || suite == "lemmas") verify_lemmas(master_seed, out, all_pass);
  if (all || suite == "concentration")
    verify_concentration(master_seed, out, all_pass);
  if (all || suite == "pathwise") verify_pathwise(master_seed, out, all_pass);
  if (all || suite == "bounds") verify_bounds(master_seed, out, all_pass);
  return all_pass ? kExitOk : kExitVerificationFailed;
}

// ---- report over stored traces ----

namespace {

struct LoadedTrace {
  std::string preset_dir;
  std::string problem_dir;
  std::string sigma_dir;
  optimizer::RunTrace trace;
};

}  // namespace

int cmd_report(const std::string& traces_dir, std::ostream& out) {
  const fs::path root(traces_dir);
  if (!fs::exists(root)) {
    out << "no traces found\n";
    return kExitConfigError;
  }

  double delta = 1e-3;
  std::string metric_name = "avg_grad_sq";
  const fs::path config_path = root / "config.json";
  if (fs::exists(config_path)) {
    const ExperimentConfig cfg =
        ExperimentConfig::from_json_text(read_text_file(config_path));
    delta = cfg.delta;
    metric_name = cfg.metric;
  }
  const optimizer::Metric metric = optimizer::metric_from_string(metric_name);

  std::vector<LoadedTrace> traces;
  std::vector<fs::path> csv_files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& path = entry.path();
    if (path.extension() != ".csv") continue;
    if (path.filename().string().rfind("T", 0) != 0) continue;
    csv_files.push_back(path);
  }
  std::sort(csv_files.begin(), csv_files.end());
  for (const fs::path& path : csv_files) {
    fs::path meta_path = path;
    meta_path.replace_extension(".meta.json");
    if (!fs::exists(meta_path)) continue;
    LoadedTrace lt;
    try {
      lt.trace.records = optimizer::records_from_csv(read_text_file(path));
      lt.trace.meta = optimizer::meta_from_json_text(read_text_file(meta_path));
    } catch (const std::exception& e) {
      throw ConfigError("malformed trace file " + path.string() + ": " +
                        e.what());
    }
    const fs::path rel = fs::relative(path, root);
    auto it = rel.begin();
    std::vector<std::string> parts;
    for (; it != rel.end(); ++it) parts.push_back(it->string());
    lt.preset_dir = parts.size() > 3 ? parts[parts.size() - 4] : lt.trace.meta.preset;
    lt.problem_dir =
        parts.size() > 2 ? parts[parts.size() - 3] : lt.trace.meta.problem;
    lt.sigma_dir = parts.size() > 1 ? parts[parts.size() - 2]
                                    : format_double(lt.trace.meta.sigma);
    traces.push_back(std::move(lt));
  }
  if (traces.empty()) {
    out << "no traces found\n";
    return kExitConfigError;
  }

  // group by (preset, problem, sigma, T)
  std::map<std::tuple<std::string, std::string, std::string, long>,
           std::vector<const LoadedTrace*>>
      groups;
  for (const LoadedTrace& lt : traces)
    groups[{lt.preset_dir, lt.problem_dir, lt.sigma_dir,
            lt.trace.meta.horizon}]
        .push_back(&lt);

  std::string csv = "preset,problem,sigma,T,n,metric,mean,median,hp_quantile,"
                    "bound,holds\n";
  out << "preset | problem | sigma | T | n | mean | median | hp-quantile | "
         "bound | holds\n";
  for (const auto& [key, members] : groups) {
    const auto& [preset_dir, problem_dir, sigma_dir, horizon] = key;
    std::vector<double> values;
    double delta1 = 0.0;
    for (const LoadedTrace* lt : members) {
      optimizer::RunTrace t = lt->trace;
      values.push_back(optimizer::report_metric(t, metric));
      delta1 = std::max(delta1, t.records.front().f_sub);
    }
    const GroupStats stats = group_stats(horizon, values, delta);
    const optimizer::RunMeta& meta = members.front()->trace.meta;

    std::string bound_text = "n/a";
    std::string holds_text = "n/a";
    const bool averaged =
        meta.preset == "rsag" || meta.preset == "adagrad_averaging";
    const bool bounded = std::isfinite(meta.gradient_bound);
    const bool has_clip = !std::isnan(meta.clip);
    if (!std::isnan(stats.hp_quantile) && bounded &&
        meta.preset != "sgd_fixed") {
      const double t = static_cast<double>(horizon);
      double g_hat = std::numeric_limits<double>::quiet_NaN();
      if (has_clip) g_hat = meta.clip;
      else if (meta.noise_kind == "exact") g_hat = meta.gradient_bound;
      else if (meta.noise_kind == "bounded_sphere")
        g_hat = meta.gradient_bound + meta.sigma;
      double bound = std::numeric_limits<double>::quiet_NaN();
      if (!std::isnan(g_hat)) {
        const double dmax = analysis::function_bound_delta_max(
            delta1, meta.smoothness, meta.gradient_bound, g_hat, meta.sigma,
            meta.g0, delta, t);
        bound = averaged ? analysis::bound_rsag(dmax, meta.smoothness,
                                                meta.gradient_bound, g_hat,
                                                meta.sigma, meta.g0, delta, t)
                         : analysis::bound_highprob_adagrad(
                               dmax, meta.smoothness, meta.gradient_bound,
                               g_hat, meta.sigma, meta.g0, delta, t);
      } else if (!averaged && meta.noise_kind == "subgaussian_gaussian") {
        const double dmax = analysis::subgaussian_delta_max(
            delta1, meta.smoothness, meta.gradient_bound, meta.sigma, meta.g0,
            delta, t);
        bound = analysis::bound_subgaussian(dmax, meta.smoothness, meta.sigma,
                                            meta.g0, delta, t);
      }
      if (!std::isnan(bound)) {
        bound_text = format_double(bound);
        holds_text = stats.hp_quantile <= bound ? "yes" : "no";
      }
    }
    const std::string hp_text = std::isnan(stats.hp_quantile)
                                    ? "vacuous"
                                    : format_double(stats.hp_quantile);
    out << preset_dir << " | " << problem_dir << " | " << sigma_dir << " | "
        << horizon << " | " << stats.n << " | " << format_double(stats.mean)
        << " | " << format_double(stats.median) << " | " << hp_text << " | "
        << bound_text << " | " << holds_text << "\n";
    csv += preset_dir + "," + problem_dir + "," + sigma_dir + "," +
           std::to_string(horizon) + "," + std::to_string(stats.n) + "," +
           metric_name + "," + format_double(stats.mean) + "," +
           format_double(stats.median) + "," + hp_text + "," + bound_text +
           "," + holds_text + "\n";
  }
  write_text_file(root / "report_summary.csv", csv);
  return kExitOk;
}

}  // namespace agd::harness
