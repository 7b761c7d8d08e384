#include "agd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "agd/errors.hpp"

namespace agd::problems {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidParameterError(msg);
}

double logistic_d1(double s) { return s * (1.0 - s); }

double logistic_d2(double s) { return s * (1.0 - s) * (1.0 - 2.0 * s); }

// Grid maxima for the sigmoid least-squares constants. The per-sample loss is
// g(u) = (s(u) - y)^2 along u = a.x, so |g'| and |g''| bound G and L after
// scaling by the row norms. The grid maximum is inflated slightly so the
// cached constant stays a valid upper bound despite grid resolution.
struct SigmoidConstants {
  double c_grad;  // max |2 (s - y) s'|
  double c_curv;  // max |2 (s'^2 + (s - y) s'')|
};

SigmoidConstants scan_sigmoid_constants() {
  const double u_lo = -50.0, u_hi = 50.0, u_step = 5e-3;
  const double y_step = 0.05;
  double c_grad = 0.0, c_curv = 0.0;
  for (double u = u_lo; u <= u_hi; u += u_step) {
    const double s = logistic(u);
    const double s1 = logistic_d1(s);
    const double s2 = logistic_d2(s);
    for (double y = 0.0; y <= 1.0 + 1e-12; y += y_step) {
      c_grad = std::max(c_grad, std::fabs(2.0 * (s - y) * s1));
      c_curv = std::max(c_curv, std::fabs(2.0 * (s1 * s1 + (s - y) * s2)));
    }
  }
  return {c_grad * 1.001, c_curv * 1.001};
}

const SigmoidConstants& sigmoid_constants() {
  static const SigmoidConstants c = scan_sigmoid_constants();
  return c;
}

void check_dim(const Problem& p, const Vec& x) {
  if (static_cast<int>(x.size()) != p.dim)
    throw InvalidParameterError("point dimension mismatch for " + p.name);
}

}  // namespace

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

Problem make_quadratic(int dim, const Vec& eigenvalues) {
  require(dim >= 1, "quadratic: dim must be >= 1");
  require(static_cast<int>(eigenvalues.size()) == dim,
          "quadratic: eigenvalue count must equal dim");
  for (double lam : eigenvalues)
    require(std::isfinite(lam) && lam > 0.0,
            "quadratic: eigenvalues must be positive");

  Problem p;
  p.name = "quadratic_d" + std::to_string(dim);
  p.dim = dim;
  p.smoothness = *std::max_element(eigenvalues.begin(), eigenvalues.end());
  p.gradient_bound = kUnboundedGradient;
  p.f_star = 0.0;
  auto lam = std::make_shared<const Vec>(eigenvalues);
  p.value = [lam](const Vec& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (*lam)[i] * x[i] * x[i];
    return 0.5 * s;
  };
  p.gradient = [lam](const Vec& x) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = (*lam)[i] * x[i];
    return g;
  };
  return p;
}

Problem make_welsch_sum(int dim) {
  require(dim >= 1, "welsch_sum: dim must be >= 1");
  Problem p;
  p.name = "welsch_sum_d" + std::to_string(dim);
  p.dim = dim;
  p.smoothness = 1.0;  // |d2/dx2 (1 - e^{-x^2/2})| = |e^{-x^2/2}(1 - x^2)| <= 1
  p.gradient_bound = std::sqrt(static_cast<double>(dim)) * std::exp(-0.5);
  p.f_star = 0.0;
  p.value = [](const Vec& x) {
    double s = 0.0;
    for (double v : x) s += 1.0 - std::exp(-0.5 * v * v);
    return s;
  };
  p.gradient = [](const Vec& x) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      g[i] = x[i] * std::exp(-0.5 * x[i] * x[i]);
    return g;
  };
  return p;
}

Problem make_cosine_valley(int dim) {
  require(dim >= 1, "cosine_valley: dim must be >= 1");
  Problem p;
  p.name = "cosine_valley_d" + std::to_string(dim);
  p.dim = dim;
  p.smoothness = 1.0;
  p.gradient_bound = std::sqrt(static_cast<double>(dim));
  p.f_star = 0.0;
  p.value = [](const Vec& x) {
    double s = 0.0;
    for (double v : x) s += 1.0 - std::cos(v);
    return s;
  };
  p.gradient = [](const Vec& x) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::sin(x[i]);
    return g;
  };
  return p;
}

Problem make_sigmoid_least_squares(std::vector<Vec> rows, Vec labels) {
  require(!rows.empty(), "sigmoid_least_squares: data must be non-empty");
  require(rows.size() == labels.size(),
          "sigmoid_least_squares: row/label count mismatch");
  const int dim = static_cast<int>(rows.front().size());
  require(dim >= 1, "sigmoid_least_squares: rows must be non-empty");
  double max_row_norm = 0.0;
  for (const Vec& a : rows) {
    require(static_cast<int>(a.size()) == dim,
            "sigmoid_least_squares: inconsistent row widths");
    require(all_finite(a), "sigmoid_least_squares: rows must be finite");
    max_row_norm = std::max(max_row_norm, norm(a));
  }
  for (double y : labels)
    require(std::isfinite(y) && y >= 0.0 && y <= 1.0,
            "sigmoid_least_squares: labels must lie in [0,1]");

  auto data = std::make_shared<const FiniteSumData>(
      FiniteSumData{std::move(rows), std::move(labels)});
  const int n = static_cast<int>(data->rows.size());
  const SigmoidConstants& c = sigmoid_constants();

  Problem p;
  p.name = "sigmoid_least_squares_n" + std::to_string(n) + "_d" +
           std::to_string(dim);
  p.dim = dim;
  p.smoothness = c.c_curv * max_row_norm * max_row_norm;
  p.gradient_bound = c.c_grad * max_row_norm;
  p.f_star = std::numeric_limits<double>::quiet_NaN();
  p.f_star_known = false;
  p.finite_sum = data;
  p.value = [data, n](const Vec& x) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = logistic(dot(data->rows[i], x)) - data->labels[i];
      s += r * r;
    }
    return s / n;
  };
  p.component_gradient = [data](int i, const Vec& x) {
    const Vec& a = data->rows[static_cast<std::size_t>(i)];
    const double s = logistic(dot(a, x));
    const double coef =
        2.0 * (s - data->labels[static_cast<std::size_t>(i)]) * logistic_d1(s);
    return scaled(a, coef);
  };
  // Full gradient sums component gradients in index order so that it matches
  // the averaged components bit for bit.
  auto comp = p.component_gradient;
  p.gradient = [comp, n, dim](const Vec& x) {
    Vec g(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i) axpy(1.0, comp(i, x), g);
    for (double& v : g) v /= n;
    return g;
  };
  return p;
}

Problem load_sigmoid_least_squares_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameterError("cannot open CSV file: " + path);
  std::vector<Vec> rows;
  Vec labels;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    Vec nums;
    bool numeric = true;
    for (const std::string& f : fields) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(f, &pos);
        while (pos < f.size() && std::isspace(static_cast<unsigned char>(f[pos])))
          ++pos;
        if (pos != f.size()) throw std::invalid_argument(f);
        nums.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;  // header row
        continue;
      }
      throw InvalidParameterError("malformed CSV row in " + path + ": " + line);
    }
    first = false;
    if (nums.size() < 2)
      throw InvalidParameterError("CSV rows need >= 1 feature and a label: " +
                                  path);
    labels.push_back(nums.back());
    nums.pop_back();
    if (!rows.empty() && rows.front().size() != nums.size())
      throw InvalidParameterError("inconsistent CSV row width in " + path);
    rows.push_back(std::move(nums));
  }
  if (rows.empty()) throw InvalidParameterError("CSV has no data rows: " + path);
  return make_sigmoid_least_squares(std::move(rows), std::move(labels));
}

Problem make_synthetic_sigmoid(int n, int dim, rng::Stream& stream) {
  require(n >= 1 && dim >= 1, "synthetic sigmoid: n and dim must be >= 1");
  const Vec w = stream.normal_vec(static_cast<std::size_t>(dim));
  std::vector<Vec> rows;
  Vec labels;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec a = stream.normal_vec(static_cast<std::size_t>(dim));
    const double nrm = norm(a);
    if (nrm > 1.0)
      for (double& v : a) v /= nrm;
    labels.push_back(logistic(dot(a, w) + 0.25 * stream.normal()));
    rows.push_back(std::move(a));
  }
  return make_sigmoid_least_squares(std::move(rows), std::move(labels));
}

Vec finite_difference_gradient(const Problem& p, const Vec& x) {
  check_dim(p, x);
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::fabs(x[i]));
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (p.value(xp) - p.value(xm)) / (xp[i] - xm[i]);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

PropertyCheck check_gradient_finite_difference(const Problem& p, long n_points,
                                               double rel_tol,
                                               rng::Stream& stream) {
  PropertyCheck c{"gradient_vs_finite_differences:" + p.name, n_points, 0, 0.0,
                  false};
  for (long k = 0; k < n_points; ++k) {
    const Vec x = stream.normal_vec(static_cast<std::size_t>(p.dim), 2.0);
    const Vec g = p.gradient(x);
    const Vec fd = finite_difference_gradient(p, x);
    const double err = norm(sub(fd, g)) / std::max(1.0, norm(g));
    c.worst = std::max(c.worst, err);
    if (err > rel_tol) ++c.violations;
  }
  c.pass = c.violations == 0;
  return c;
}

PropertyCheck check_descent_lemma(const Problem& p, double smoothness,
                                  long n_pairs, double slack,
                                  rng::Stream& stream) {
  PropertyCheck c{"descent_lemma:" + p.name, n_pairs, 0, 0.0, false};
  for (long k = 0; k < n_pairs; ++k) {
    const Vec y = stream.normal_vec(static_cast<std::size_t>(p.dim), 2.0);
    // mix wide and tight pairs so both regimes of the inequality are hit
    const double spread = (k % 2 == 0) ? 2.0 : 0.05;
    Vec x = y;
    axpy(1.0, stream.normal_vec(static_cast<std::size_t>(p.dim), spread), x);
    const double lhs =
        std::fabs(p.value(x) - p.value(y) - dot(p.gradient(y), sub(x, y)));
    const double budget = 0.5 * smoothness * norm_sq(sub(x, y)) +
                          slack * std::max(1.0, std::fabs(p.value(x)) +
                                                    std::fabs(p.value(y)));
    c.worst = std::max(c.worst, lhs - budget);
    if (lhs > budget) ++c.violations;
  }
  c.pass = c.violations == 0;
  return c;
}

PropertyCheck check_gradient_bound(const Problem& p, long n_points, double box,
                                   rng::Stream& stream) {
  PropertyCheck c{"gradient_bound:" + p.name, n_points, 0, 0.0, false};
  if (!p.gradient_bound_finite())
    throw InvalidParameterError("gradient_bound check needs finite G: " +
                                p.name);
  const double budget = p.gradient_bound * (1.0 + 1e-12);
  for (long k = 0; k < n_points; ++k) {
    Vec x(static_cast<std::size_t>(p.dim));
    for (double& v : x) v = box * (2.0 * stream.uniform01() - 1.0);
    const double gn = norm(p.gradient(x));
    c.worst = std::max(c.worst, gn - budget);
    if (gn > budget) ++c.violations;
  }
  c.pass = c.violations == 0;
  return c;
}

PropertyCheck check_component_mean(const Problem& p, long n_points,
                                   double rel_tol, rng::Stream& stream) {
  PropertyCheck c{"component_mean:" + p.name, n_points, 0, 0.0, false};
  if (!p.is_finite_sum())
    throw InvalidParameterError("component_mean check needs a finite sum: " +
                                p.name);
  const int n = p.n_components();
  for (long k = 0; k < n_points; ++k) {
    const Vec x = stream.normal_vec(static_cast<std::size_t>(p.dim));
    Vec mean(static_cast<std::size_t>(p.dim), 0.0);
    for (int i = 0; i < n; ++i) axpy(1.0, p.component_gradient(i, x), mean);
    for (double& v : mean) v /= n;
    const Vec g = p.gradient(x);
    const double err = norm(sub(mean, g)) / std::max(1e-30, norm(g));
    c.worst = std::max(c.worst, err);
    if (err > rel_tol) ++c.violations;
  }
  c.pass = c.violations == 0;
  return c;
}

}  // namespace agd::problems
