#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "agd/analysis.hpp"
#include "agd/errors.hpp"
#include "doctest.h"

using namespace agd;
using namespace agd::analysis;

TEST_CASE("fit_rate on exact power laws") {
  const RateFit unit = fit_rate({{10, 1.0}, {100, 0.1}, {1000, 0.01}});
  CHECK(unit.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(unit.r_squared == doctest::Approx(1.0).epsilon(1e-12));

  const RateFit half =
      fit_rate({{10, 1.0}, {100, std::pow(10.0, -0.5)}, {1000, 0.1}});
  CHECK(half.slope == doctest::Approx(-0.5).epsilon(1e-12));

  CHECK_THROWS_AS(fit_rate({{10, 1.0}, {100, 0.1}}), InvalidParameterError);
  CHECK_THROWS_AS(fit_rate({{10, 1.0}, {100, -0.1}, {1000, 0.01}}),
                  InvalidParameterError);
  CHECK_THROWS_AS(fit_rate({{10, 1.0}, {10, 0.1}, {1000, 0.01}}),
                  InvalidParameterError);
}

TEST_CASE("fit_rate recovers a noisy exponent") {
  rng::Stream stream(5);
  std::vector<std::pair<double, double>> pts;
  for (double t : {10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0}) {
    const double noise = std::exp(0.02 * stream.normal());
    pts.emplace_back(t, 3.0 * std::pow(t, -0.7) * noise);
  }
  const RateFit fit = fit_rate(pts);
  CHECK(fit.slope == doctest::Approx(-0.7).epsilon(0.07));

  // refitting the stored points reproduces the fit
  const RateFit refit = fit_rate(fit.points);
  CHECK(refit.slope == doctest::Approx(fit.slope).epsilon(1e-10));
  CHECK(refit.intercept == doctest::Approx(fit.intercept).epsilon(1e-10));

  // scale equivariance: slope unchanged, intercept shifted by log c
  std::vector<std::pair<double, double>> scaled = pts;
  for (auto& [t, v] : scaled) v *= 17.0;
  const RateFit sfit = fit_rate(scaled);
  CHECK(sfit.slope == doctest::Approx(fit.slope).epsilon(1e-10));
  CHECK(sfit.intercept ==
        doctest::Approx(fit.intercept + std::log(17.0)).epsilon(1e-10));
}

TEST_CASE("quantile convention") {
  std::vector<double> grid;
  for (int i = 1; i <= 100; ++i) grid.push_back(i);
  CHECK(quantile(grid, 0.5) == doctest::Approx(50.5));

  std::vector<double> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(i);
  CHECK(quantile(ten, 0.9) == doctest::Approx(9.1));
  // brute enumeration of the same convention: h = (n-1) q
  const double h = 0.9 * 9.0;
  CHECK(quantile(ten, 0.9) ==
        doctest::Approx(ten[8] + (h - 8.0) * (ten[9] - ten[8])));

  CHECK(quantile({3.25, 3.25, 3.25}, 0.77) == doctest::Approx(3.25));
  CHECK_THROWS_AS(quantile({}, 0.5), InvalidParameterError);
  CHECK_THROWS_AS(quantile({1.0}, 1.0), InvalidParameterError);

  const auto q = quantile_over_seeds({{10, grid}, {20, ten}}, 0.5);
  REQUIRE(q.size() == 2);
  CHECK(q[0].second == doctest::Approx(50.5));
  CHECK(q[1].second == doctest::Approx(5.5));
}

TEST_CASE("quantile over traces groups by horizon") {
  const problems::Problem p = problems::make_welsch_sum(2);
  std::vector<optimizer::RunTrace> traces;
  for (long horizon : {50L, 100L})
    for (std::uint64_t seed = 0; seed < 25; ++seed)
      traces.push_back(optimizer::run(
          p, oracle::NoiseModel::bounded_sphere(0.5),
          schedules::Preset::adagrad(0.01), horizon, seed, Vec(2, 2.0)));
  const auto pts = quantile_over_seeds(
      traces, optimizer::Metric::avg_grad_sq, 0.5);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].first == 50.0);
  CHECK(pts[1].first == 100.0);
  CHECK(pts[0].second > pts[1].second);  // longer horizons decay the average
  CHECK_THROWS_AS(
      quantile_over_seeds(std::vector<optimizer::RunTrace>{},
                          optimizer::Metric::avg_grad_sq, 0.5),
      InvalidParameterError);
}

TEST_CASE("deterministic bound evaluator") {
  CHECK(bound_deterministic_adagrad(0.0, 2.0) ==
        doctest::Approx(std::pow(3.0 + std::log(2.0), 2)).epsilon(1e-12));
  CHECK(bound_deterministic_adagrad(0.0, 2.0) ==
        doctest::Approx(13.639).epsilon(1e-4));
  CHECK(bound_deterministic_adagrad(1.0, 1.0) ==
        doctest::Approx(6.8203).epsilon(1e-4));
  // dominated by Delta_1^2 for large gaps
  const double big = bound_deterministic_adagrad(1e6, 1.0);
  CHECK(big == doctest::Approx(1e12).epsilon(1e-4));
}

TEST_CASE("high probability bound evaluator") {
  // all symbols 1, delta = 1/e, T = 1: (2 + 6) + (2 + 2) = 12
  CHECK(bound_highprob_adagrad(1, 1, 1, 1, 1, 1, std::exp(-1.0), 1) ==
        doctest::Approx(12.0).epsilon(1e-12));
  // sigma = 0 kills the noise part of the sqrt(T) term
  const double noise_free =
      bound_highprob_adagrad(1, 1, 1, 1, 0, 1, std::exp(-1.0), 1e8);
  CHECK(noise_free * 1e4 == doctest::Approx(2.0).epsilon(1e-3));
  // doubling T when the sqrt term dominates shrinks by less than half
  const double at_t = bound_highprob_adagrad(1, 1, 1, 1, 1, 1, 1e-3, 1e6);
  const double at_2t = bound_highprob_adagrad(1, 1, 1, 1, 1, 1, 1e-3, 2e6);
  CHECK(at_2t / at_t > 0.5);
  CHECK(at_2t / at_t < 1.0);
}

TEST_CASE("objective gap bound evaluator") {
  // grows logarithmically in t
  const double g1 = function_bound_delta_max(1, 1, 1, 2, 1, 0.1, 1e-3, 100);
  const double g2 = function_bound_delta_max(1, 1, 1, 2, 1, 0.1, 1e-3, 10000);
  CHECK(g2 > g1);
  CHECK(g2 - g1 ==
        doctest::Approx(2.0 * std::log((1.0 + 4e4) / (1.0 + 4e2)))
            .epsilon(1e-6));
  CHECK_THROWS_AS(function_bound_delta_max(1, 1, 1, 2, 1, 0.0, 1e-3, 100),
                  InvalidParameterError);
}

TEST_CASE("rsag bound evaluator") {
  // hypothetical G_hat = 0 leaves only the 1/T component
  const double only_t = bound_rsag(1, 1, 1, 0, 1, 0.5, 1e-2, 100);
  const double full = bound_rsag(1, 1, 1, 2, 1, 0.5, 1e-2, 100);
  CHECK(only_t < full);
  const double expected_only_t =
      (0.5 * (1 + 3 + std::log(4.0)) + 3.0 * 1.0 * std::log(100.0)) / 100.0 +
      2.0 * std::sqrt(std::log(100.0)) / 10.0;
  CHECK(only_t == doctest::Approx(expected_only_t).epsilon(1e-12));
}

TEST_CASE("subgaussian bound evaluator") {
  // all symbols 1, delta = 1/e, T = 1: 152 + 32 sqrt(2)
  CHECK(bound_subgaussian(1, 1, 1, 1, std::exp(-1.0), 1) ==
        doctest::Approx(152.0 + 32.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(bound_subgaussian(1, 1, 1, 1, std::exp(-1.0), 1) ==
        doctest::Approx(197.25).epsilon(1e-4));
  // sigma -> 0 collapses to a pure 1/T rate
  const double t = 1e6;
  const double at_sigma0 = bound_subgaussian(1, 1, 0, 1, 1e-3, t);
  CHECK(at_sigma0 ==
        doctest::Approx((32.0 * 4.0 + 8.0 * 2.0) / t).epsilon(1e-12));
}

TEST_CASE("freedman check on bounded martingales") {
  rng::Stream stream(7);
  const McVerdict rad = freedman_check(BoundedMds::rademacher(1.0), 100, 0.01,
                                       100000, stream);
  CHECK(rad.pass);
  CHECK(rad.bound == doctest::Approx(4.0 * std::log(100.0) * 0.01));
  CHECK(rad.estimate <= rad.bound);

  const McVerdict zero =
      freedman_check(BoundedMds::zero(), 100, 0.01, 1000, stream);
  CHECK(zero.pass);
  CHECK(zero.estimate == 0.0);

  const McVerdict scaled = freedman_check(BoundedMds::rademacher(0.5), 100,
                                          0.05, 100000, stream);
  CHECK(scaled.pass);

  CHECK_THROWS_AS(freedman_check(BoundedMds::rademacher(1.0), 2, 0.01, 10,
                                 stream),
                  InvalidParameterError);
  CHECK_THROWS_AS(freedman_check(BoundedMds::rademacher(1.0), 100, 0.5, 10,
                                 stream),
                  InvalidParameterError);
}

TEST_CASE("mgf martingale checks") {
  rng::Stream stream(11);
  Vec v{0.5, -0.5, 0.25, 1.0};
  const McVerdict m = mgf_mds_check(MgfMds::noise_inner_product(4, 1.0, v), 50,
                                    1.0, 0.05, 100000, stream);
  CHECK(m.pass);

  const McVerdict zero = mgf_mds_check(MgfMds::zero(), 50, 1.0, 0.05, 1000,
                                       stream);
  CHECK(zero.pass);
  CHECK(zero.estimate == 0.0);

  // halving lambda changes the threshold but the bound still holds
  const McVerdict half = mgf_mds_check(MgfMds::noise_inner_product(4, 1.0, v),
                                       50, 0.5, 0.05, 100000, stream);
  CHECK(half.pass);

  const McVerdict modified =
      mgf_mds_modified_check(4, 1.0, 50, 0.05, 100000, stream);
  CHECK(modified.pass);
}

TEST_CASE("max noise check") {
  rng::Stream stream(13);
  const McVerdict subg = max_noise_check(
      oracle::NoiseModel::subgaussian_gaussian(1.0), 4, 100, 0.05, 10000,
      stream);
  CHECK(subg.pass);

  const McVerdict trivial =
      max_noise_check(oracle::NoiseModel::exact(), 4, 100, 0.05, 100, stream);
  CHECK(trivial.pass);
  CHECK(trivial.estimate == 0.0);

  // |xi|^2 = sigma^2 <= sigma^2 log(10 e / 0.5): never violated
  const McVerdict sphere = max_noise_check(
      oracle::NoiseModel::bounded_sphere(1.0), 4, 10, 0.5, 2000, stream);
  CHECK(sphere.pass);
  CHECK(sphere.estimate == 0.0);
}

TEST_CASE("pathwise inequalities hold on real traces") {
  const problems::Problem p = problems::make_welsch_sum(4);
  const Vec x1(4, 2.0);
  const optimizer::RunTrace adagrad =
      optimizer::run(p, oracle::NoiseModel::truncated_gaussian(0.8),
                     schedules::Preset::adagrad(0.01), 400, 3, x1);
  const PathwiseReport intuition = check_intuition_pathwise(adagrad, p.smoothness);
  CHECK(intuition.holds);
  CHECK(intuition.lhs <= intuition.rhs * (1.0 + 1e-8));

  const optimizer::RunTrace rsag =
      optimizer::run(p, oracle::NoiseModel::bounded_sphere(0.5),
                     schedules::Preset::rsag(0.01), 400, 4, x1);
  CHECK(check_main_bound_pathwise(rsag, p.smoothness).holds);

  const optimizer::RunTrace averaged = optimizer::run(
      p, oracle::NoiseModel::subgaussian_gaussian(0.5),
      schedules::Preset::adagrad_averaging(0.01), 400, 5, x1);
  CHECK(check_main_bound_pathwise(averaged, p.smoothness).holds);

  // dispatch follows the preset recorded in the trace
  CHECK(check_pathwise(adagrad).name == "intuition_pathwise");
  CHECK(check_pathwise(rsag).name == "main_bound_pathwise");
}

TEST_CASE("theorem dominance on deterministic runs") {
  for (const problems::Problem& p :
       {problems::make_welsch_sum(6), problems::make_cosine_valley(4),
        problems::make_quadratic(3, {0.2, 1.0, 3.0})}) {
    const Vec x1 = optimizer::default_start(p, 77);
    const optimizer::RunTrace trace =
        optimizer::run(p, oracle::NoiseModel::exact(),
                       schedules::Preset::adagrad(0.0), 2000, 77, x1);
    const double avg =
        optimizer::report_metric(trace, optimizer::Metric::avg_grad_sq);
    const double bound =
        bound_deterministic_adagrad(trace.records.front().f_sub, p.smoothness) /
        2000.0;
    INFO(p.name, " avg=", avg, " bound=", bound);
    CHECK(avg <= bound * (1.0 + 1e-8));
  }
}

TEST_CASE("bound report flags dominance") {
  const BoundReport ok = make_bound_report("b", 2.0, 1.0, {{"T", 10.0}});
  CHECK(ok.holds);
  const BoundReport bad = make_bound_report("b", 1.0, 2.0, {});
  CHECK_FALSE(bad.holds);
}
