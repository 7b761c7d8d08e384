#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "agd/errors.hpp"
#include "agd/oracle.hpp"
#include "agd/problems.hpp"
#include "agd/rng.hpp"
#include "agd/schedules.hpp"
#include "agd/vec.hpp"

namespace agd::optimizer {

inline constexpr double kDivergenceLimit = 1e12;
inline constexpr const char* kRngScheme = "splitmix-counter-v1";

// One row of a run trace. noise_dot is kept in memory for the pathwise
// inequality checks; it is not part of the CSV schema.
struct TraceRecord {
  long t = 0;
  double f_sub = 0.0;         // Delta_t = f(x_t) - reference
  double grad_sq_bar = 0.0;   // |grad f(xbar_t)|^2
  double grad_sq_stoch = 0.0; // |g_t|^2
  double eta = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double acc = 0.0;           // G0^2 + sum_{k<=t} |g_k|^2
  double delta_max = 0.0;     // running max of f_sub
  double noise_dot = 0.0;     // <grad f(xbar_t), xi_t>
};

struct RunMeta {
  std::string problem;
  int dim = 0;
  double smoothness = 0.0;
  double gradient_bound = 0.0;  // infinity when unbounded
  double f_star_ref = 0.0;      // reference used for f_sub
  bool f_star_known = true;

  std::string preset;
  std::string averaging;
  double g0 = 0.0;
  double fixed_step = 0.0;
  bool baseline = false;

  std::string noise_kind;
  double sigma = 0.0;
  double clip = 0.0;  // resolved clip; NaN when not applicable
  int batch_size = 1;

  long horizon = 0;
  std::uint64_t seed = 0;
  Vec x1;

  double final_f_sub = 0.0;  // Delta_{T+1}
  double delta_max = 0.0;
  double avg_grad_sq = 0.0;
  double min_grad_sq = 0.0;

  bool assume_unbiased = true;
  bool assume_bounded_variance = true;
  bool assume_as_bounded = false;
  bool assume_subgaussian = false;

  std::string rng_scheme = kRngScheme;
};

struct RunTrace {
  std::vector<TraceRecord> records;
  RunMeta meta;
};

struct AgdState {
  Vec x;        // mirror-descent iterate x_t
  Vec x_tilde;  // gradient-descent iterate
  Vec x_bar;    // query point of the last completed step
  schedules::Accumulator acc;
  long t = 1;
};

AgdState make_initial_state(const Vec& x1, double g0);

// One iteration of the three-sequence template:
//   xbar_t   = alpha_t x_t + (1 - alpha_t) xtilde_t
//   g_t      ~ oracle at xbar_t
//   x_{t+1}  = x_t - eta_t g_t
//   xtilde_{t+1} = xbar_t - gamma_t g_t
// For problems with unknown f*, f_sub holds raw f(x_t); run() re-bases it.
TraceRecord agd_step(AgdState& state, const schedules::Preset& preset,
                     const problems::Problem& problem,
                     const oracle::NoiseModel& model, rng::Stream& stream);

// Carries the partial trace up to the offending iteration.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& msg, long iteration, RunTrace partial)
      : NumericError(msg), iteration(iteration), partial(std::move(partial)) {}
  long iteration;
  RunTrace partial;
};

using StateObserver = std::function<void(const AgdState&)>;

// Runs T iterations with per-iteration counter-based substreams derived from
// the seed, so traces are bit-reproducible and share prefixes across
// horizons. The observer, when set, sees the state after every step.
RunTrace run(const problems::Problem& problem, const oracle::NoiseModel& model,
             const schedules::Preset& preset, long horizon, std::uint64_t seed,
             const Vec& x1, const StateObserver& observer = {});

// All-coordinates 2 for the bounded nonconvex objectives (away from their
// minimizers), a standard normal draw otherwise.
Vec default_start(const problems::Problem& problem, std::uint64_t seed);

enum class Metric { avg_grad_sq, min_grad_sq, final_sub, delta_max };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

double report_metric(const RunTrace& trace, Metric metric);

// ---- serialization ----

// Pinned CSV schema, one row per iteration.
std::string trace_csv_header();
std::string to_csv(const RunTrace& trace);
std::vector<TraceRecord> records_from_csv(const std::string& text);

std::string meta_to_json_text(const RunMeta& meta);
RunMeta meta_from_json_text(const std::string& text);

// Shortest round-trip decimal form; all trace and report files use it.
std::string format_double(double v);
std::string format_uint(std::uint64_t v);

}  // namespace agd::optimizer
