#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "agd/rng.hpp"
#include "agd/vec.hpp"

namespace agd::problems {

inline constexpr double kUnboundedGradient =
    std::numeric_limits<double>::infinity();

// Raw samples of a finite-sum objective: rows a_i and labels y_i in [0, 1].
struct FiniteSumData {
  std::vector<Vec> rows;
  Vec labels;
};

// A smooth test objective with analytically known constants. Immutable after
// construction; safe to share across threads.
struct Problem {
  std::string name;
  int dim = 0;
  double smoothness = 0.0;                          // L
  double gradient_bound = kUnboundedGradient;       // G
  double f_star = 0.0;
  bool f_star_known = true;

  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;

  // Finite-sum structure; null for plain problems.
  std::shared_ptr<const FiniteSumData> finite_sum;
  std::function<Vec(int, const Vec&)> component_gradient;

  bool is_finite_sum() const { return finite_sum != nullptr; }
  int n_components() const {
    return finite_sum ? static_cast<int>(finite_sum->rows.size()) : 0;
  }
  bool gradient_bound_finite() const {
    return gradient_bound < kUnboundedGradient;
  }
};

// f(x) = 1/2 sum_i lambda_i x_i^2; L = max lambda, f* = 0, G unbounded.
Problem make_quadratic(int dim, const Vec& eigenvalues);

// f(x) = sum_i (1 - exp(-x_i^2/2)); L = 1, G = sqrt(d) e^{-1/2}, f* = 0.
Problem make_welsch_sum(int dim);

// f(x) = sum_i (1 - cos x_i); L = 1, G = sqrt(d), f* = 0.
Problem make_cosine_valley(int dim);

// f(x) = (1/n) sum_i (s(a_i.x) - y_i)^2 with logistic s. L and G come from a
// dense grid scan at construction; f* is unknown and reported as such.
Problem make_sigmoid_least_squares(std::vector<Vec> rows, Vec labels);

// CSV ingestion: d feature columns then one label column, header optional.
Problem load_sigmoid_least_squares_csv(const std::string& path);

// Synthetic finite-sum data; rows are scaled to norm <= 1.
Problem make_synthetic_sigmoid(int n, int dim, rng::Stream& stream);

double logistic(double u);

// Independent oracle for gradient tests.
Vec finite_difference_gradient(const Problem& p, const Vec& x);

// ---- property checks (used by tests and the verify suites) ----

struct PropertyCheck {
  std::string name;
  long trials = 0;
  long violations = 0;
  double worst = 0.0;  // largest violated margin (check-specific scale)
  bool pass = false;
};

PropertyCheck check_gradient_finite_difference(const Problem& p, long n_points,
                                               double rel_tol,
                                               rng::Stream& stream);

// Verifies |f(x) - f(y) - <grad f(y), x - y>| <= (L/2)|x-y|^2 + slack with the
// supplied L, so a corrupted constant can be fed as a negative control.
PropertyCheck check_descent_lemma(const Problem& p, double smoothness,
                                  long n_pairs, double slack,
                                  rng::Stream& stream);

PropertyCheck check_gradient_bound(const Problem& p, long n_points, double box,
                                   rng::Stream& stream);

PropertyCheck check_component_mean(const Problem& p, long n_points,
                                   double rel_tol, rng::Stream& stream);

}  // namespace agd::problems
