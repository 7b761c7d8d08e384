#pragma once

#include <functional>
#include <optional>
#include <string>

#include "agd/problems.hpp"
#include "agd/rng.hpp"
#include "agd/vec.hpp"

namespace agd::oracle {

enum class NoiseKind {
  exact,
  bounded_sphere,
  truncated_gaussian,
  subgaussian_gaussian,
  minibatch,
};

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

// Per-coordinate variance of the calibrated sub-Gaussian model: chosen so
// that E[exp(|xi|^2 / sigma^2)] = (1 - 2 s^2/sigma^2)^{-d/2} equals e exactly,
// i.e. the moment condition holds with equality.
double subgaussian_coordinate_variance(double sigma, int dim);

struct NoiseModel {
  NoiseKind kind = NoiseKind::exact;
  double sigma = 0.0;
  std::optional<double> clip;  // a.s. bound on |g|; truncated_gaussian only
  int batch_size = 1;          // minibatch only

  static NoiseModel exact();
  static NoiseModel bounded_sphere(double sigma);
  static NoiseModel truncated_gaussian(double sigma,
                                       std::optional<double> clip = {});
  static NoiseModel subgaussian_gaussian(double sigma);
  static NoiseModel minibatch(int batch_size, double sigma_bound);

  void validate() const;
  void validate_for(const problems::Problem& p) const;

  // Effective clip: explicit value, else G + 4 sigma.
  double resolve_clip(const problems::Problem& p) const;

  // Which oracle assumptions hold for this model on this problem; recorded
  // in run metadata so experiments state what they actually satisfy.
  bool satisfies_as_bounded(const problems::Problem& p) const;
  bool satisfies_subgaussian() const;
};

struct GradientSample {
  Vec g;      // stochastic gradient
  Vec g_bar;  // exact gradient at the query point
  Vec xi;     // noise, g = g_bar + xi exactly
};

GradientSample sample(const problems::Problem& p, const Vec& x,
                      const NoiseModel& model, rng::Stream& stream);

struct UnbiasedReport {
  Vec mean;
  Vec stderr_by_coord;
  double worst_ratio = 0.0;  // max_i |mean_i| / (5 SE_i)
  long n_samples = 0;
  bool pass = false;
};

// Per-coordinate sample mean of xi against 5 standard errors.
UnbiasedReport verify_unbiased(const problems::Problem& p, const Vec& x,
                               const NoiseModel& model, long n_samples,
                               rng::Stream& stream);

// Same check against an arbitrary noise sampler (test doubles).
UnbiasedReport verify_unbiased_sampler(
    int dim, const std::function<Vec(rng::Stream&)>& draw_xi, long n_samples,
    rng::Stream& stream);

struct MgfReport {
  double estimate = 0.0;
  double stderr_ = 0.0;
  double target = 0.0;  // e
  long n_samples = 0;
  bool trivial = false;  // sigma = 0
  bool pass = false;     // estimate <= e within CI slack
};

MgfReport verify_subgaussian_mgf(const NoiseModel& model, int dim,
                                 long n_samples, rng::Stream& stream);

MgfReport verify_mgf_sampler(double sigma,
                             const std::function<Vec(rng::Stream&)>& draw_xi,
                             long n_samples, rng::Stream& stream);

}  // namespace agd::oracle
