#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "agd/optimizer.hpp"
#include "agd/oracle.hpp"
#include "agd/rng.hpp"
#include "agd/vec.hpp"

namespace agd::analysis {

// ---- empirical rate fitting ----

struct RateFit {
  double slope = 0.0;      // log-log least-squares exponent
  double intercept = 0.0;  // in log space
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (T, value)
};

// Least squares of log(value) on log(T); needs >= 3 points with positive
// values and distinct horizons.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

// ---- quantiles across seeds ----

// Linear interpolation between the closest order statistics
// (h = (n-1) q, frozen convention).
double quantile(std::vector<double> values, double q);

std::vector<std::pair<double, double>> quantile_over_seeds(
    const std::map<long, std::vector<double>>& by_horizon, double q);

// Groups traces by their horizon and takes the quantile of a report metric.
std::vector<std::pair<double, double>> quantile_over_seeds(
    const std::vector<optimizer::RunTrace>& traces, optimizer::Metric metric,
    double q);

// ---- Monte-Carlo concentration checks ----

struct McVerdict {
  std::string check;
  std::string params;       // JSON text
  double estimate = 0.0;    // empirical violation frequency
  double stderr_ = 0.0;     // binomial standard error
  double bound = 0.0;       // theoretical probability budget
  bool pass = false;        // estimate <= bound + 3 * stderr
};

// Bounded martingale difference sequence with computable conditional
// variances.
struct BoundedMds {
  std::string name;
  double bound_b = 0.0;                             // |X_t| <= b
  std::function<double(rng::Stream&, long)> draw;   // X_t
  std::function<double(long)> cond_var;             // Var_{t-1}(X_t)

  static BoundedMds rademacher(double scale);
  static BoundedMds zero();
};

// Freedman-type tail: P( sum X_t > max{2 sqrt(V_T), 3 b sqrt(log(1/delta))}
// * sqrt(log(1/delta)) ) <= 4 log(T) delta, for delta < 1/e and T >= 3.
McVerdict freedman_check(const BoundedMds& mds, long horizon, double delta,
                         long n_trials, rng::Stream& stream);

// MDS whose increments satisfy E[exp(Z_t^2 / Y_t^2) | past] <= e.
struct MgfMds {
  std::string name;
  std::function<double(rng::Stream&, long)> draw;  // Z_t
  std::function<double(long)> y;                   // Y_t (deterministic here)

  // Z_t = <v, xi_t> with calibrated sub-Gaussian xi; Y_t = |v| sigma.
  static MgfMds noise_inner_product(int dim, double sigma, Vec v);
  static MgfMds zero();
};

// P( sum Z_t > (3/4) lambda sum Y_t^2 + log(1/delta)/lambda ) <= delta.
McVerdict mgf_mds_check(const MgfMds& mds, long horizon, double lambda,
                        double delta, long n_trials, rng::Stream& stream);

// Modified variant: Z_t with E[exp(Z_t / sigma^2) | past] <= 1 satisfies
// P( sum Z_t > sigma^2 log(1/delta) ) <= delta. The canonical instance is
// Z_t = |xi_t|^2 - sigma^2 under the calibrated sub-Gaussian model.
McVerdict mgf_mds_modified_check(int dim, double sigma, long horizon,
                                 double delta, long n_trials,
                                 rng::Stream& stream);

// P( max_t |xi_t|^2 > sigma^2 log(e T / delta) ) <= delta.
McVerdict max_noise_check(const oracle::NoiseModel& model, int dim,
                          long horizon, double delta, long n_trials,
                          rng::Stream& stream);

// ---- theoretical bound evaluators (exact arithmetic transcriptions) ----

struct BoundReport {
  std::string bound_name;
  double theoretical = 0.0;
  double empirical = 0.0;
  bool holds = false;  // empirical <= theoretical
  std::map<std::string, double> inputs;
};

BoundReport make_bound_report(std::string name, double theoretical,
                              double empirical,
                              std::map<std::string, double> inputs);

// Numerator of the deterministic rate: (Delta_1 + (L/2)(3 + log(1 + L^2/4)))^2.
double bound_deterministic_adagrad(double delta1, double smoothness);

// High-probability rate with almost-surely bounded stochastic gradients.
double bound_highprob_adagrad(double delta_max, double smoothness, double grad_bound,
                              double stoch_grad_bound, double sigma, double g0,
                              double delta, double horizon);

// Logarithmic objective-gap bound:
// Delta_1 + 2L(1 + log(max{1, G0^2} + Ghat^2 t)) + (M1 + sigma^2) log(1/delta)/G0
// + M2, with M1 = 3(G^2 + G Ghat), M2 = (2 G^2 + G Ghat)/G0.
double function_bound_delta_max(double delta1, double smoothness, double grad_bound,
                                double stoch_grad_bound, double sigma, double g0,
                                double delta, double horizon);

// Averaging / momentum variants of the high-probability rate.
double bound_rsag(double delta_max, double smoothness, double grad_bound,
                  double stoch_grad_bound, double sigma, double g0,
                  double delta, double horizon);

// Noise-adaptive rate under the sub-Gaussian model.
double bound_subgaussian(double delta_max, double smoothness, double sigma,
                         double g0, double delta, double horizon);

// Objective-gap bound under the sub-Gaussian model.
double subgaussian_delta_max(double delta1, double smoothness, double grad_bound,
                             double sigma, double g0, double delta,
                             double horizon);

// ---- pathwise trajectory inequalities ----

struct PathwiseReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// sum |gbar_t|^2 <= Delta_max / eta_T + sum -<gbar_t, xi_t>
//                   + (L/2) sum eta_t |g_t|^2
PathwiseReport check_intuition_pathwise(const optimizer::RunTrace& trace,
                                        double smoothness);

// sum |gbar_t|^2 <= (Delta_max + 2L)/eta_T
//   + (L / (2 eta_T)) sum term_star(t,T) ((eta_t - gamma_t)^2 / alpha_t^2) |g_t|^2
//   + sum -<gbar_t, xi_t>
PathwiseReport check_main_bound_pathwise(const optimizer::RunTrace& trace,
                                         double smoothness);

// Dispatches on the trace's preset.
PathwiseReport check_pathwise(const optimizer::RunTrace& trace);

}  // namespace agd::analysis
