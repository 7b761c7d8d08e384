#include "agd/optimizer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <string_view>

#include "json.hpp"

namespace agd::optimizer {

namespace {

constexpr std::uint64_t kRunSalt = 0x52554e5f53414c54ull;
constexpr std::uint64_t kStartSalt = 0x535441525453ull;

double reference_value(const problems::Problem& p) {
  return p.f_star_known ? p.f_star : 0.0;  // raw values; re-based later
}

void guard_finite(const Vec& v, long t, const char* label) {
  for (double c : v) {
    if (!std::isfinite(c) || std::fabs(c) > kDivergenceLimit)
      throw NumericError(std::string("numeric divergence in ") + label +
                         " at iteration " + std::to_string(t));
  }
}

}  // namespace

AgdState make_initial_state(const Vec& x1, double g0) {
  if (x1.empty() || !all_finite(x1))
    throw InvalidParameterError("start point must be finite and non-empty");
  AgdState s;
  s.x = x1;
  s.x_tilde = x1;
  s.x_bar = x1;
  s.acc = schedules::make_accumulator(g0);
  s.t = 1;
  return s;
}

TraceRecord agd_step(AgdState& state, const schedules::Preset& preset,
                     const problems::Problem& problem,
                     const oracle::NoiseModel& model, rng::Stream& stream) {
  const long t = state.t;
  const double a = schedules::alpha(preset.averaging, t);

  Vec x_bar(state.x.size());
  for (std::size_t i = 0; i < x_bar.size(); ++i)
    x_bar[i] = a * state.x[i] + (1.0 - a) * state.x_tilde[i];
  guard_finite(x_bar, t, "query point");
  state.x_bar = x_bar;

  const oracle::GradientSample gs = oracle::sample(problem, x_bar, model, stream);
  state.acc.add(norm_sq(gs.g));
  const schedules::StepPair step = schedules::step_pair(preset, t, state.acc);

  TraceRecord rec;
  rec.t = t;
  rec.f_sub = problem.value(state.x) - reference_value(problem);
  rec.grad_sq_bar = norm_sq(gs.g_bar);
  rec.grad_sq_stoch = norm_sq(gs.g);
  rec.eta = step.eta;
  rec.gamma = step.gamma;
  rec.alpha = a;
  rec.acc = state.acc.total_sq();
  rec.delta_max = rec.f_sub;  // running max is maintained by run()
  rec.noise_dot = dot(gs.g_bar, gs.xi);
  if (!std::isfinite(rec.f_sub) || !std::isfinite(rec.eta))
    throw NumericError("numeric divergence in objective or step at iteration " +
                       std::to_string(t));

  for (std::size_t i = 0; i < state.x.size(); ++i) {
    state.x[i] -= step.eta * gs.g[i];
    state.x_tilde[i] = x_bar[i] - step.gamma * gs.g[i];
  }
  guard_finite(state.x, t, "iterate");
  guard_finite(state.x_tilde, t, "auxiliary iterate");
  state.t = t + 1;
  return rec;
}

RunTrace run(const problems::Problem& problem, const oracle::NoiseModel& model,
             const schedules::Preset& preset, long horizon, std::uint64_t seed,
             const Vec& x1, const StateObserver& observer) {
  if (horizon < 1) throw InvalidParameterError("run needs horizon >= 1");
  preset.validate();
  model.validate_for(problem);
  if (static_cast<int>(x1.size()) != problem.dim)
    throw InvalidParameterError("start point dimension mismatch");

  RunTrace trace;
  trace.records.reserve(static_cast<std::size_t>(horizon));
  AgdState state = make_initial_state(x1, preset.g0);
  const std::uint64_t run_key = rng::derive(seed, kRunSalt);

  double running_max = -std::numeric_limits<double>::infinity();
  try {
    for (long t = 1; t <= horizon; ++t) {
      rng::Stream iteration_stream(rng::derive(run_key, static_cast<std::uint64_t>(t)));
      TraceRecord rec = agd_step(state, preset, problem, model, iteration_stream);
      running_max = std::max(running_max, rec.f_sub);
      rec.delta_max = running_max;
      trace.records.push_back(rec);
      if (observer) observer(state);
    }
  } catch (const NumericError& e) {
    throw DivergenceError(e.what(), state.t, std::move(trace));
  }

  RunMeta& m = trace.meta;
  const double final_raw = problem.value(state.x);
  double ref = reference_value(problem);
  if (!problem.f_star_known) {
    // best observed value, including the final iterate, keeps all Delta >= 0
    ref = final_raw;
    for (const TraceRecord& r : trace.records) ref = std::min(ref, r.f_sub);
    running_max = -std::numeric_limits<double>::infinity();
    for (TraceRecord& r : trace.records) {
      r.f_sub -= ref;
      running_max = std::max(running_max, r.f_sub);
      r.delta_max = running_max;
    }
  }

  m.problem = problem.name;
  m.dim = problem.dim;
  m.smoothness = problem.smoothness;
  m.gradient_bound = problem.gradient_bound;
  m.f_star_ref = ref;
  m.f_star_known = problem.f_star_known;
  m.preset = schedules::to_string(preset.kind);
  m.averaging = schedules::to_string(preset.averaging);
  m.g0 = preset.g0;
  m.fixed_step = preset.kind == schedules::PresetKind::sgd_fixed
                     ? preset.fixed_step
                     : std::numeric_limits<double>::quiet_NaN();
  m.baseline = preset.is_baseline();
  m.noise_kind = oracle::to_string(model.kind);
  m.sigma = model.sigma;
  m.clip = model.kind == oracle::NoiseKind::truncated_gaussian
               ? model.resolve_clip(problem)
               : std::numeric_limits<double>::quiet_NaN();
  m.batch_size = model.batch_size;
  m.horizon = horizon;
  m.seed = seed;
  m.x1 = x1;
  m.final_f_sub = final_raw - ref;
  m.delta_max = trace.records.back().delta_max;
  m.avg_grad_sq = report_metric(trace, Metric::avg_grad_sq);
  m.min_grad_sq = report_metric(trace, Metric::min_grad_sq);
  m.assume_as_bounded = model.satisfies_as_bounded(problem);
  m.assume_subgaussian = model.satisfies_subgaussian();
  return trace;
}

Vec default_start(const problems::Problem& problem, std::uint64_t seed) {
  const std::string& n = problem.name;
  if (n.rfind("welsch_sum", 0) == 0 || n.rfind("cosine_valley", 0) == 0)
    return Vec(static_cast<std::size_t>(problem.dim), 2.0);
  rng::Stream stream(rng::derive(seed, kStartSalt));
  return stream.normal_vec(static_cast<std::size_t>(problem.dim));
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::avg_grad_sq: return "avg_grad_sq";
    case Metric::min_grad_sq: return "min_grad_sq";
    case Metric::final_sub: return "final_sub";
    case Metric::delta_max: return "delta_max";
  }
  throw InvalidParameterError("unknown metric");
}

Metric metric_from_string(const std::string& s) {
  if (s == "avg_grad_sq") return Metric::avg_grad_sq;
  if (s == "min_grad_sq") return Metric::min_grad_sq;
  if (s == "final_sub") return Metric::final_sub;
  if (s == "delta_max") return Metric::delta_max;
  throw ConfigError("unknown metric: " + s);
}

double report_metric(const RunTrace& trace, Metric metric) {
  if (trace.records.empty())
    throw InvalidParameterError("report_metric needs a non-empty trace");
  switch (metric) {
    case Metric::avg_grad_sq: {
      double s = 0.0;
      for (const TraceRecord& r : trace.records) s += r.grad_sq_bar;
      return s / static_cast<double>(trace.records.size());
    }
    case Metric::min_grad_sq: {
      double m = trace.records.front().grad_sq_bar;
      for (const TraceRecord& r : trace.records)
        m = std::min(m, r.grad_sq_bar);
      return m;
    }
    case Metric::final_sub:
      return trace.meta.final_f_sub;
    case Metric::delta_max:
      return trace.records.back().delta_max;
  }
  throw InvalidParameterError("unknown metric");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_uint(std::uint64_t v) { return std::to_string(v); }

namespace {

double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("malformed number in trace: " + std::string(s));
  return v;
}

nlohmann::json double_or_tag(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return "unbounded";
  return v;
}

double double_from_tag(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

std::string trace_csv_header() {
  return "t,f_sub,grad_sq_bar,grad_sq_stoch,eta,gamma,alpha,acc,delta_max";
}

std::string to_csv(const RunTrace& trace) {
  std::string out = trace_csv_header();
  out += '\n';
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.t);
    out += ',';
    out += format_double(r.f_sub);
    out += ',';
    out += format_double(r.grad_sq_bar);
    out += ',';
    out += format_double(r.grad_sq_stoch);
    out += ',';
    out += format_double(r.eta);
    out += ',';
    out += format_double(r.gamma);
    out += ',';
    out += format_double(r.alpha);
    out += ',';
    out += format_double(r.acc);
    out += ',';
    out += format_double(r.delta_max);
    out += '\n';
  }
  return out;
}

std::vector<TraceRecord> records_from_csv(const std::string& text) {
  std::vector<TraceRecord> records;
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != trace_csv_header())
    throw ConfigError("trace CSV has an unexpected header");
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::array<std::string_view, 9> f;
    std::string_view rest = line;
    for (std::size_t i = 0; i < 9; ++i) {
      const std::size_t pos = rest.find(',');
      if (i < 8) {
        if (pos == std::string_view::npos)
          throw ConfigError("trace CSV row has too few fields: " + line);
        f[i] = rest.substr(0, pos);
        rest = rest.substr(pos + 1);
      } else {
        if (pos != std::string_view::npos)
          throw ConfigError("trace CSV row has too many fields: " + line);
        f[i] = rest;
      }
    }
    TraceRecord r;
    r.t = static_cast<long>(parse_double(f[0]));
    r.f_sub = parse_double(f[1]);
    r.grad_sq_bar = parse_double(f[2]);
    r.grad_sq_stoch = parse_double(f[3]);
    r.eta = parse_double(f[4]);
    r.gamma = parse_double(f[5]);
    r.alpha = parse_double(f[6]);
    r.acc = parse_double(f[7]);
    r.delta_max = parse_double(f[8]);
    r.noise_dot = std::numeric_limits<double>::quiet_NaN();
    records.push_back(r);
  }
  return records;
}

std::string meta_to_json_text(const RunMeta& m) {
  nlohmann::json j;
  j["problem"] = {{"name", m.problem},
                  {"dim", m.dim},
                  {"smoothness", m.smoothness},
                  {"gradient_bound", double_or_tag(m.gradient_bound)},
                  {"f_star_ref", m.f_star_ref},
                  {"f_star_known", m.f_star_known}};
  j["preset"] = {{"kind", m.preset},
                 {"averaging", m.averaging},
                 {"g0", m.g0},
                 {"fixed_step", double_or_tag(m.fixed_step)},
                 {"baseline", m.baseline}};
  j["noise"] = {{"kind", m.noise_kind},
                {"sigma", m.sigma},
                {"clip", double_or_tag(m.clip)},
                {"batch_size", m.batch_size}};
  j["horizon"] = m.horizon;
  j["seed"] = m.seed;
  j["x1"] = m.x1;
  j["summary"] = {{"final_f_sub", m.final_f_sub},
                  {"delta_max", m.delta_max},
                  {"avg_grad_sq", m.avg_grad_sq},
                  {"min_grad_sq", m.min_grad_sq}};
  j["assumptions"] = {{"unbiased", m.assume_unbiased},
                      {"bounded_variance", m.assume_bounded_variance},
                      {"as_bounded", m.assume_as_bounded},
                      {"subgaussian", m.assume_subgaussian}};
  j["rng_scheme"] = m.rng_scheme;
  return j.dump(2) + "\n";
}

RunMeta meta_from_json_text(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  RunMeta m;
  m.problem = j.at("problem").at("name").get<std::string>();
  m.dim = j.at("problem").at("dim").get<int>();
  m.smoothness = j.at("problem").at("smoothness").get<double>();
  m.gradient_bound = double_from_tag(j.at("problem").at("gradient_bound"));
  m.f_star_ref = j.at("problem").at("f_star_ref").get<double>();
  m.f_star_known = j.at("problem").at("f_star_known").get<bool>();
  m.preset = j.at("preset").at("kind").get<std::string>();
  m.averaging = j.at("preset").at("averaging").get<std::string>();
  m.g0 = j.at("preset").at("g0").get<double>();
  m.fixed_step = double_from_tag(j.at("preset").at("fixed_step"));
  m.baseline = j.at("preset").at("baseline").get<bool>();
  m.noise_kind = j.at("noise").at("kind").get<std::string>();
  m.sigma = j.at("noise").at("sigma").get<double>();
  m.clip = double_from_tag(j.at("noise").at("clip"));
  m.batch_size = j.at("noise").at("batch_size").get<int>();
  m.horizon = j.at("horizon").get<long>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.x1 = j.at("x1").get<Vec>();
  m.final_f_sub = j.at("summary").at("final_f_sub").get<double>();
  m.delta_max = j.at("summary").at("delta_max").get<double>();
  m.avg_grad_sq = j.at("summary").at("avg_grad_sq").get<double>();
  m.min_grad_sq = j.at("summary").at("min_grad_sq").get<double>();
  m.assume_unbiased = j.at("assumptions").at("unbiased").get<bool>();
  m.assume_bounded_variance =
      j.at("assumptions").at("bounded_variance").get<bool>();
  m.assume_as_bounded = j.at("assumptions").at("as_bounded").get<bool>();
  m.assume_subgaussian = j.at("assumptions").at("subgaussian").get<bool>();
  m.rng_scheme = j.at("rng_scheme").get<std::string>();
  return m;
}

}  // namespace agd::optimizer
