#include "agd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "agd/errors.hpp"
#include "agd/schedules.hpp"
#include "json.hpp"

namespace agd::analysis {

namespace {

constexpr double kE = 2.718281828459045235360287471353;

double binomial_stderr(double p_hat, long n) {
  return std::sqrt(std::max(0.0, p_hat * (1.0 - p_hat)) /
                   static_cast<double>(n));
}

McVerdict tail_verdict(std::string check, nlohmann::json params, long hits,
                       long n_trials, double bound) {
  McVerdict v;
  v.check = std::move(check);
  v.params = params.dump();
  v.estimate = static_cast<double>(hits) / static_cast<double>(n_trials);
  v.stderr_ = binomial_stderr(v.estimate, n_trials);
  v.bound = bound;
  v.pass = v.estimate <= bound + 3.0 * v.stderr_;
  return v;
}

}  // namespace

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw InvalidParameterError("fit_rate needs at least 3 points");
  for (const auto& [horizon, value] : points) {
    if (!(horizon > 0.0) || !(value > 0.0) || !std::isfinite(value))
      throw InvalidParameterError("fit_rate needs positive finite values");
  }
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i].first == points[j].first)
        throw InvalidParameterError("fit_rate needs distinct horizons");

  const double n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [horizon, value] : points) {
    const double x = std::log(horizon);
    const double y = std::log(value);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  RateFit fit;
  fit.points = points;
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;

  double ss_res = 0.0, ss_tot = 0.0;
  const double y_mean = sy / n;
  for (const auto& [horizon, value] : points) {
    const double y = std::log(value);
    const double y_hat = fit.intercept + fit.slope * std::log(horizon);
    ss_res += (y - y_hat) * (y - y_hat);
    ss_tot += (y - y_mean) * (y - y_mean);
  }
  fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  return fit;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidParameterError("quantile of empty sample");
  if (!(q > 0.0) || !(q < 1.0))
    throw InvalidParameterError("quantile level must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<std::pair<double, double>> quantile_over_seeds(
    const std::map<long, std::vector<double>>& by_horizon, double q) {
  std::vector<std::pair<double, double>> out;
  for (const auto& [horizon, values] : by_horizon) {
    if (values.empty())
      throw InvalidParameterError("quantile_over_seeds: empty group");
    out.emplace_back(static_cast<double>(horizon), quantile(values, q));
  }
  return out;
}

std::vector<std::pair<double, double>> quantile_over_seeds(
    const std::vector<optimizer::RunTrace>& traces, optimizer::Metric metric,
    double q) {
  if (traces.empty())
    throw InvalidParameterError("quantile_over_seeds: empty group");
  std::map<long, std::vector<double>> by_horizon;
  for (const optimizer::RunTrace& t : traces)
    by_horizon[t.meta.horizon].push_back(optimizer::report_metric(t, metric));
  return quantile_over_seeds(by_horizon, q);
}

BoundedMds BoundedMds::rademacher(double scale) {
  BoundedMds m;
  m.name = "rademacher";
  m.bound_b = scale;
  m.draw = [scale](rng::Stream& s, long) {
    return s.fair_coin() ? scale : -scale;
  };
  m.cond_var = [scale](long) { return scale * scale; };
  return m;
}

BoundedMds BoundedMds::zero() {
  BoundedMds m;
  m.name = "zero";
  m.bound_b = 0.0;
  m.draw = [](rng::Stream&, long) { return 0.0; };
  m.cond_var = [](long) { return 0.0; };
  return m;
}

McVerdict freedman_check(const BoundedMds& mds, long horizon, double delta,
                         long n_trials, rng::Stream& stream) {
  if (!(delta > 0.0) || !(delta < 1.0 / kE))
    throw InvalidParameterError("freedman_check needs delta < 1/e");
  if (horizon < 3) throw InvalidParameterError("freedman_check needs T >= 3");
  if (n_trials < 1) throw InvalidParameterError("n_trials must be positive");

  const double log_term = std::log(1.0 / delta);
  double variance_sum = 0.0;
  for (long t = 1; t <= horizon; ++t) variance_sum += mds.cond_var(t);
  const double threshold =
      std::max(2.0 * std::sqrt(variance_sum),
               3.0 * mds.bound_b * std::sqrt(log_term)) *
      std::sqrt(log_term);

  long hits = 0;
  for (long trial = 0; trial < n_trials; ++trial) {
    rng::Stream s(rng::derive(stream.next_u64(), 0xF7EEDull));
    double sum = 0.0;
    for (long t = 1; t <= horizon; ++t) sum += mds.draw(s, t);
    if (sum > threshold) ++hits;
  }
  return tail_verdict(
      "freedman:" + mds.name,
      {{"T", horizon}, {"delta", delta}, {"b", mds.bound_b},
       {"V_T", variance_sum}, {"n_trials", n_trials}, {"threshold", threshold}},
      hits, n_trials, 4.0 * std::log(static_cast<double>(horizon)) * delta);
}

MgfMds MgfMds::noise_inner_product(int dim, double sigma, Vec v) {
  MgfMds m;
  m.name = "noise_inner_product";
  const double y_value = norm(v) * sigma;
  const double coord_sd =
      std::sqrt(oracle::subgaussian_coordinate_variance(sigma, dim));
  auto dir = std::make_shared<const Vec>(std::move(v));
  m.draw = [dir, coord_sd, dim](rng::Stream& s, long) {
    double z = 0.0;
    for (int i = 0; i < dim; ++i) z += (*dir)[static_cast<std::size_t>(i)] *
                                      (coord_sd * s.normal());
    return z;
  };
  m.y = [y_value](long) { return y_value; };
  return m;
}

MgfMds MgfMds::zero() {
  MgfMds m;
  m.name = "zero";
  m.draw = [](rng::Stream&, long) { return 0.0; };
  m.y = [](long) { return 1.0; };
  return m;
}

McVerdict mgf_mds_check(const MgfMds& mds, long horizon, double lambda,
                        double delta, long n_trials, rng::Stream& stream) {
  if (!(lambda > 0.0)) throw InvalidParameterError("lambda must be positive");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw InvalidParameterError("delta must lie in (0, 1)");
  double y_sq_sum = 0.0;
  for (long t = 1; t <= horizon; ++t) {
    const double y = mds.y(t);
    y_sq_sum += y * y;
  }
  const double threshold =
      0.75 * lambda * y_sq_sum + std::log(1.0 / delta) / lambda;

  long hits = 0;
  for (long trial = 0; trial < n_trials; ++trial) {
    rng::Stream s(rng::derive(stream.next_u64(), 0x36D5ull));
    double sum = 0.0;
    for (long t = 1; t <= horizon; ++t) sum += mds.draw(s, t);
    if (sum > threshold) ++hits;
  }
  return tail_verdict("mgf_mds:" + mds.name,
                      {{"T", horizon}, {"lambda", lambda}, {"delta", delta},
                       {"n_trials", n_trials}, {"threshold", threshold}},
                      hits, n_trials, delta);
}

McVerdict mgf_mds_modified_check(int dim, double sigma, long horizon,
                                 double delta, long n_trials,
                                 rng::Stream& stream) {
  if (!(sigma > 0.0)) throw InvalidParameterError("sigma must be positive");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw InvalidParameterError("delta must lie in (0, 1)");
  const double sigma_sq = sigma * sigma;
  const double coord_sd =
      std::sqrt(oracle::subgaussian_coordinate_variance(sigma, dim));
  const double threshold = sigma_sq * std::log(1.0 / delta);

  long hits = 0;
  for (long trial = 0; trial < n_trials; ++trial) {
    rng::Stream s(rng::derive(stream.next_u64(), 0x36D6ull));
    double sum = 0.0;
    for (long t = 1; t <= horizon; ++t) {
      double xi_sq = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double c = coord_sd * s.normal();
        xi_sq += c * c;
      }
      sum += xi_sq - sigma_sq;
    }
    if (sum > threshold) ++hits;
  }
  return tail_verdict("mgf_mds_modified:centered_norm_sq",
                      {{"T", horizon}, {"sigma", sigma}, {"delta", delta},
                       {"n_trials", n_trials}, {"threshold", threshold}},
                      hits, n_trials, delta);
}

McVerdict max_noise_check(const oracle::NoiseModel& model, int dim,
                          long horizon, double delta, long n_trials,
                          rng::Stream& stream) {
  if (horizon < 1) throw InvalidParameterError("max_noise_check needs T >= 1");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw InvalidParameterError("delta must lie in (0, 1)");
  if (!model.satisfies_subgaussian())
    throw InvalidParameterError(
        "max_noise_check needs a sub-Gaussian noise model");

  nlohmann::json params = {{"T", horizon}, {"delta", delta},
                           {"sigma", model.sigma}, {"n_trials", n_trials},
                           {"kind", oracle::to_string(model.kind)}};
  if (model.kind == oracle::NoiseKind::exact || model.sigma == 0.0)
    return tail_verdict("max_noise:trivial", params, 0, std::max(1L, n_trials),
                        delta);

  const double sigma_sq = model.sigma * model.sigma;
  const double threshold =
      sigma_sq * std::log(kE * static_cast<double>(horizon) / delta);
  const bool sphere = model.kind == oracle::NoiseKind::bounded_sphere;
  const double coord_sd =
      sphere ? 0.0
             : std::sqrt(oracle::subgaussian_coordinate_variance(model.sigma,
                                                                 dim));
  long hits = 0;
  for (long trial = 0; trial < n_trials; ++trial) {
    rng::Stream s(rng::derive(stream.next_u64(), 0x3A1Cull));
    double worst = 0.0;
    for (long t = 1; t <= horizon; ++t) {
      double xi_sq = 0.0;
      if (sphere) {
        xi_sq = sigma_sq;  // |xi| = sigma by construction
      } else {
        for (int i = 0; i < dim; ++i) {
          const double c = coord_sd * s.normal();
          xi_sq += c * c;
        }
      }
      worst = std::max(worst, xi_sq);
    }
    if (worst > threshold) ++hits;
  }
  params["threshold"] = threshold;
  return tail_verdict("max_noise", params, hits, n_trials, delta);
}

BoundReport make_bound_report(std::string name, double theoretical,
                              double empirical,
                              std::map<std::string, double> inputs) {
  BoundReport r;
  r.bound_name = std::move(name);
  r.theoretical = theoretical;
  r.empirical = empirical;
  r.holds = empirical <= theoretical;
  r.inputs = std::move(inputs);
  return r;
}

double bound_deterministic_adagrad(double delta1, double smoothness) {
  if (!(smoothness > 0.0))
    throw InvalidParameterError("smoothness must be positive");
  const double base =
      delta1 +
      0.5 * smoothness *
          (3.0 + std::log(1.0 + smoothness * smoothness / 4.0));
  return base * base;
}

double bound_highprob_adagrad(double delta_max, double smoothness,
                              double grad_bound, double stoch_grad_bound,
                              double sigma, double g0, double delta,
                              double horizon) {
  const double log_term = std::log(1.0 / delta);
  const double one_over_t =
      ((delta_max + smoothness) * g0 +
       3.0 * (grad_bound * grad_bound + grad_bound * stoch_grad_bound) *
           log_term) /
      horizon;
  const double one_over_sqrt_t =
      ((delta_max + smoothness) * stoch_grad_bound +
       2.0 * grad_bound * sigma * std::sqrt(log_term)) /
      std::sqrt(horizon);
  return one_over_t + one_over_sqrt_t;
}

double function_bound_delta_max(double delta1, double smoothness,
                                double grad_bound, double stoch_grad_bound,
                                double sigma, double g0, double delta,
                                double horizon) {
  if (!(g0 > 0.0))
    throw InvalidParameterError("function bound needs G0 > 0");
  const double log_term = std::log(1.0 / delta);
  const double m1 =
      3.0 * (grad_bound * grad_bound + grad_bound * stoch_grad_bound);
  const double m2 =
      (2.0 * grad_bound * grad_bound + grad_bound * stoch_grad_bound) / g0;
  return delta1 +
         2.0 * smoothness *
             (1.0 + std::log(std::max(1.0, g0 * g0) +
                             stoch_grad_bound * stoch_grad_bound * horizon)) +
         (m1 + sigma * sigma) * log_term / g0 + m2;
}

double bound_rsag(double delta_max, double smoothness, double grad_bound,
                  double stoch_grad_bound, double sigma, double g0,
                  double delta, double horizon) {
  const double log_term = std::log(1.0 / delta);
  const double kappa =
      delta_max + 3.0 * smoothness +
      smoothness * std::log(std::max(1.0, 1.0 / (g0 * g0)) +
                            stoch_grad_bound * stoch_grad_bound * horizon);
  const double grad_cross =
      3.0 * (grad_bound * grad_bound + grad_bound * stoch_grad_bound) *
      log_term;
  const double one_over_t = (g0 * kappa + grad_cross) / horizon;
  const double one_over_sqrt_t =
      (stoch_grad_bound * kappa +
       2.0 * grad_bound * sigma * std::sqrt(log_term)) /
      std::sqrt(horizon);
  return one_over_t + one_over_sqrt_t;
}

double bound_subgaussian(double delta_max, double smoothness, double sigma,
                         double g0, double delta, double horizon) {
  const double log_term = std::log(1.0 / delta);
  const double dl = delta_max + smoothness;
  const double one_over_t =
      (32.0 * dl * dl +
       8.0 * dl * (g0 + sigma * std::sqrt(2.0 * log_term)) +
       8.0 * sigma * sigma * log_term) /
      horizon;
  const double one_over_sqrt_t =
      8.0 * std::sqrt(2.0) * dl * sigma / std::sqrt(horizon);
  return one_over_t + one_over_sqrt_t;
}

double subgaussian_delta_max(double delta1, double smoothness,
                             double grad_bound, double sigma, double g0,
                             double delta, double horizon) {
  if (!(g0 > 0.0))
    throw InvalidParameterError("sub-Gaussian objective bound needs G0 > 0");
  const double log_term = std::log(1.0 / delta);
  const double log_et =
      std::log(kE * horizon / delta);
  const double sigma_sq = sigma * sigma;
  return delta1 + 3.0 * grad_bound * grad_bound / g0 +
         2.0 * sigma_sq * log_et / g0 + 0.75 * sigma_sq * log_term / g0 +
         0.5 * smoothness *
             (1.0 + std::log(std::max(1.0, g0 * g0) +
                             2.0 * grad_bound * grad_bound * horizon +
                             2.0 * sigma_sq * horizon * log_et));
}

namespace {

void require_noise_dots(const optimizer::RunTrace& trace) {
  for (const auto& r : trace.records)
    if (std::isnan(r.noise_dot))
      throw InvalidParameterError(
          "pathwise checks need in-memory traces with noise inner products");
}

bool holds_with_slack(double lhs, double rhs) {
  return lhs <= rhs + 1e-8 * std::max(1.0, std::fabs(rhs));
}

}  // namespace

PathwiseReport check_intuition_pathwise(const optimizer::RunTrace& trace,
                                        double smoothness) {
  if (trace.records.empty())
    throw InvalidParameterError("pathwise check needs a non-empty trace");
  require_noise_dots(trace);
  double lhs = 0.0, noise_sum = 0.0, curvature_sum = 0.0;
  for (const auto& r : trace.records) {
    lhs += r.grad_sq_bar;
    noise_sum += -r.noise_dot;
    curvature_sum += r.eta * r.grad_sq_stoch;
  }
  const auto& last = trace.records.back();
  const double rhs =
      last.delta_max / last.eta + noise_sum + 0.5 * smoothness * curvature_sum;
  PathwiseReport rep{"intuition_pathwise", lhs, rhs, holds_with_slack(lhs, rhs)};
  return rep;
}

PathwiseReport check_main_bound_pathwise(const optimizer::RunTrace& trace,
                                         double smoothness) {
  if (trace.records.empty())
    throw InvalidParameterError("pathwise check needs a non-empty trace");
  require_noise_dots(trace);
  const schedules::Averaging avg =
      schedules::averaging_from_string(trace.meta.averaging);
  const long horizon = static_cast<long>(trace.records.size());
  const schedules::TermStarTable table(avg, horizon);

  double lhs = 0.0, noise_sum = 0.0, weighted_curvature = 0.0;
  for (const auto& r : trace.records) {
    lhs += r.grad_sq_bar;
    noise_sum += -r.noise_dot;
    const double diff = (r.eta - r.gamma) / r.alpha;
    weighted_curvature += table.value(r.t, horizon) * diff * diff *
                          r.grad_sq_stoch;
  }
  const auto& last = trace.records.back();
  const double rhs = (last.delta_max + 2.0 * smoothness) / last.eta +
                     0.5 * smoothness / last.eta * weighted_curvature +
                     noise_sum;
  PathwiseReport rep{"main_bound_pathwise", lhs, rhs,
                     holds_with_slack(lhs, rhs)};
  return rep;
}

PathwiseReport check_pathwise(const optimizer::RunTrace& trace) {
  const schedules::PresetKind kind =
      schedules::preset_kind_from_string(trace.meta.preset);
  if (kind == schedules::PresetKind::adagrad_averaging ||
      kind == schedules::PresetKind::rsag)
    return check_main_bound_pathwise(trace, trace.meta.smoothness);
  return check_intuition_pathwise(trace, trace.meta.smoothness);
}

}  // namespace agd::analysis
