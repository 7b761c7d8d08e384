#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <utility>

#include "agd/errors.hpp"
#include "agd/oracle.hpp"
#include "agd/problems.hpp"
#include "doctest.h"

using namespace agd;
using namespace agd::oracle;

namespace {

problems::Problem welsch4() { return problems::make_welsch_sum(4); }

}  // namespace

TEST_CASE("exact oracle has zero noise") {
  rng::Stream stream(1);
  const problems::Problem p = welsch4();
  const GradientSample s =
      sample(p, {0.5, -1.0, 2.0, 0.0}, NoiseModel::exact(), stream);
  for (double v : s.xi) CHECK(v == 0.0);
  for (std::size_t i = 0; i < s.g.size(); ++i) CHECK(s.g[i] == s.g_bar[i]);
}

TEST_CASE("noise decomposition is exact for every model") {
  rng::Stream stream(2);
  const problems::Problem p = welsch4();
  rng::Stream data_stream(3);
  const problems::Problem fs = problems::make_synthetic_sigmoid(12, 4, data_stream);
  const Vec x{0.3, -0.7, 1.1, 0.2};
  const std::vector<std::pair<const problems::Problem*, NoiseModel>> cases = {
      {&p, NoiseModel::exact()},
      {&p, NoiseModel::bounded_sphere(0.5)},
      {&p, NoiseModel::truncated_gaussian(0.5)},
      {&p, NoiseModel::subgaussian_gaussian(0.8)},
      {&fs, NoiseModel::minibatch(3, 1.0)},
  };
  for (const auto& [prob, model] : cases) {
    for (int k = 0; k < 200; ++k) {
      const GradientSample s = sample(*prob, x, model, stream);
      for (std::size_t i = 0; i < s.g.size(); ++i)
        CHECK(s.g[i] == s.g_bar[i] + s.xi[i]);  // exact identity
    }
  }
}

TEST_CASE("subgaussian calibration formula") {
  // solve (1 - 2 s^2 / sigma^2)^{-d/2} = e for d = 4, sigma = 1
  const double s_sq = subgaussian_coordinate_variance(1.0, 4);
  CHECK(s_sq == doctest::Approx((1.0 - std::exp(-0.5)) / 2.0).epsilon(1e-14));
  CHECK(s_sq == doctest::Approx(0.19673).epsilon(1e-4));
  CHECK(std::pow(1.0 - 2.0 * s_sq, -2.0) == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("bounded sphere noise has norm sigma almost surely") {
  rng::Stream stream(5);
  const problems::Problem p = welsch4();
  const NoiseModel model = NoiseModel::bounded_sphere(0.5);
  const Vec x{1.0, 1.0, 1.0, 1.0};
  double mean_sq = 0.0;
  const long n = 1000000;
  for (long k = 0; k < n; ++k) {
    // sample the noise construction directly through the oracle
    const GradientSample s = sample(p, x, model, stream);
    mean_sq += norm_sq(s.xi);
  }
  mean_sq /= n;
  CHECK(mean_sq == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("truncated gaussian stays inside the clip ball") {
  rng::Stream stream(7);
  const problems::Problem p = welsch4();
  const NoiseModel model = NoiseModel::truncated_gaussian(1.0);
  const double g_hat = model.resolve_clip(p);
  CHECK(g_hat == doctest::Approx(p.gradient_bound + 4.0));
  const Vec x{2.0, 2.0, 2.0, 2.0};
  for (int k = 0; k < 100000; ++k) {
    const GradientSample s = sample(p, x, model, stream);
    CHECK(norm(s.g) <= g_hat);
  }
}

TEST_CASE("truncated gaussian symmetrization is unbiased") {
  rng::Stream stream(11);
  const problems::Problem p = welsch4();
  // query point with a sizable gradient, where naive rejection would bias xi
  const Vec x{1.0, 1.0, 1.0, 1.0};
  const NoiseModel model = NoiseModel::truncated_gaussian(1.5, 2.5);
  const UnbiasedReport r = verify_unbiased(p, x, model, 200000, stream);
  INFO("worst ratio ", r.worst_ratio);
  CHECK(r.pass);
}

TEST_CASE("verify_unbiased across models") {
  rng::Stream stream(13);
  const problems::Problem p = welsch4();
  const Vec x{0.5, -0.5, 1.5, 2.0};
  CHECK(verify_unbiased(p, x, NoiseModel::exact(), 0, stream).pass);
  CHECK(verify_unbiased(p, x, NoiseModel::bounded_sphere(1.0), 100000, stream)
            .pass);
  CHECK(verify_unbiased(p, x, NoiseModel::subgaussian_gaussian(1.0), 100000,
                        stream)
            .pass);
  rng::Stream data_stream(17);
  const problems::Problem fs =
      problems::make_synthetic_sigmoid(20, 4, data_stream);
  CHECK(verify_unbiased(fs, x, NoiseModel::minibatch(5, 1.0), 100000, stream)
            .pass);
  CHECK_THROWS_AS(verify_unbiased(p, x, NoiseModel::bounded_sphere(1.0), 100,
                                  stream),
                  InvalidParameterError);
}

TEST_CASE("a biased test double fails verify_unbiased") {
  rng::Stream stream(19);
  const UnbiasedReport r = verify_unbiased_sampler(
      3,
      [](rng::Stream& s) {
        Vec xi = s.normal_vec(3, 0.5);
        xi[0] += 0.1;
        return xi;
      },
      100000, stream);
  CHECK_FALSE(r.pass);
  CHECK(r.mean[0] == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("minibatch with full batch reproduces the exact gradient") {
  rng::Stream stream(23);
  const problems::Problem fs = problems::make_synthetic_sigmoid(10, 3, stream);
  const NoiseModel model = NoiseModel::minibatch(10, 1.0);
  const Vec x{0.4, -0.2, 0.9};
  const GradientSample s = sample(fs, x, model, stream);
  for (double v : s.xi) CHECK(v == 0.0);
}

TEST_CASE("minibatch variance matches the without-replacement formula") {
  rng::Stream stream(29);
  const problems::Problem fs = problems::make_synthetic_sigmoid(12, 3, stream);
  const Vec x{0.3, 0.1, -0.8};
  const int n = fs.n_components(), b = 4;
  // population variance of component gradients at x
  const Vec full = fs.gradient(x);
  double pop_var = 0.0;
  for (int i = 0; i < n; ++i)
    pop_var += norm_sq(sub(fs.component_gradient(i, x), full));
  pop_var /= n;
  const double expected =
      pop_var / b * (1.0 - static_cast<double>(b - 1) / (n - 1));
  const NoiseModel model = NoiseModel::minibatch(b, 1.0);
  double mean_sq = 0.0;
  const long trials = 200000;
  for (long k = 0; k < trials; ++k)
    mean_sq += norm_sq(sample(fs, x, model, stream).xi);
  mean_sq /= trials;
  CHECK(mean_sq == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("empirical variance stays within the declared bound") {
  rng::Stream stream(31);
  const problems::Problem p = welsch4();
  const Vec x{1.0, 0.0, -1.0, 0.5};
  const long n = 100000;
  for (const NoiseModel& model :
       {NoiseModel::bounded_sphere(0.7), NoiseModel::truncated_gaussian(0.7),
        NoiseModel::subgaussian_gaussian(0.7)}) {
    double mean_sq = 0.0;
    for (long k = 0; k < n; ++k) mean_sq += norm_sq(sample(p, x, model, stream).xi);
    mean_sq /= n;
    CHECK(mean_sq <=
          model.sigma * model.sigma * (1.0 + 3.0 / std::sqrt(double(n))));
  }
}

TEST_CASE("subgaussian mgf estimate sits at e") {
  rng::Stream stream(37);
  const MgfReport sphere =
      verify_subgaussian_mgf(NoiseModel::bounded_sphere(2.0), 4, 100000, stream);
  CHECK(sphere.pass);
  // per draw |xi| = sigma exactly; only summation rounding remains
  CHECK(sphere.estimate == doctest::Approx(std::exp(1.0)).epsilon(1e-9));

  const MgfReport calibrated = verify_subgaussian_mgf(
      NoiseModel::subgaussian_gaussian(1.0), 4, 200000, stream);
  CHECK(calibrated.pass);
  CHECK(calibrated.estimate ==
        doctest::Approx(std::exp(1.0)).epsilon(0.02));
}

TEST_CASE("uncalibrated gaussian fails the mgf check") {
  rng::Stream stream(41);
  // per-coordinate variance sigma^2 (d = 4) makes E[exp(|xi|^2/sigma^2)]
  // divergent; the sample mean blows far past e
  const MgfReport r = verify_mgf_sampler(
      1.0, [](rng::Stream& s) { return s.normal_vec(4, 1.0); }, 100000,
      stream);
  CHECK_FALSE(r.pass);
  CHECK(r.estimate > 2.0 * std::exp(1.0));
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(NoiseModel::bounded_sphere(0.0), ConfigError);
  CHECK_THROWS_AS(NoiseModel::minibatch(0, 1.0), ConfigError);
  NoiseModel bad_exact = NoiseModel::exact();
  bad_exact.sigma = 0.5;
  CHECK_THROWS_AS(bad_exact.validate(), ConfigError);

  rng::Stream stream(43);
  const problems::Problem p = welsch4();
  CHECK_THROWS_AS(sample(p, {0, 0, 0, 0}, NoiseModel::minibatch(2, 1.0), stream),
                  ConfigError);
  // clip below the gradient bound makes truncation unsound
  CHECK_THROWS_AS(
      sample(p, {0, 0, 0, 0},
             NoiseModel::truncated_gaussian(1.0, 0.5 * p.gradient_bound),
             stream),
      ConfigError);
  // quadratic has unbounded G: the default clip is undefined
  const problems::Problem q = problems::make_quadratic(2, {1.0, 1.0});
  CHECK_THROWS_AS(sample(q, {0.1, 0.1}, NoiseModel::truncated_gaussian(1.0), stream),
                  ConfigError);
  CHECK_THROWS_AS(
      sample(p, {std::numeric_limits<double>::infinity(), 0, 0, 0},
             NoiseModel::exact(), stream),
      NumericError);
}
