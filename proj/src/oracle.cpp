#include "agd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "agd/errors.hpp"

namespace agd::oracle {

namespace {

constexpr double kE = 2.718281828459045235360287471353;
constexpr long kMaxRejectionAttempts = 1000000;

Vec uniform_sphere(std::size_t d, double radius, rng::Stream& stream) {
  for (;;) {
    Vec v = stream.normal_vec(d);
    const double n = norm(v);
    if (n > 1e-300) {
      for (double& c : v) c *= radius / n;
      return v;
    }
  }
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::exact: return "exact";
    case NoiseKind::bounded_sphere: return "bounded_sphere";
    case NoiseKind::truncated_gaussian: return "truncated_gaussian";
    case NoiseKind::subgaussian_gaussian: return "subgaussian_gaussian";
    case NoiseKind::minibatch: return "minibatch";
  }
  throw InvalidParameterError("unknown noise kind");
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "exact") return NoiseKind::exact;
  if (s == "bounded_sphere") return NoiseKind::bounded_sphere;
  if (s == "truncated_gaussian") return NoiseKind::truncated_gaussian;
  if (s == "subgaussian_gaussian") return NoiseKind::subgaussian_gaussian;
  if (s == "minibatch") return NoiseKind::minibatch;
  throw ConfigError("unknown noise kind: " + s);
}

double subgaussian_coordinate_variance(double sigma, int dim) {
  if (dim < 1) throw InvalidParameterError("dim must be >= 1");
  return sigma * sigma * (1.0 - std::exp(-2.0 / dim)) / 2.0;
}

NoiseModel NoiseModel::exact() { return NoiseModel{NoiseKind::exact, 0.0, {}, 1}; }

NoiseModel NoiseModel::bounded_sphere(double sigma) {
  NoiseModel m{NoiseKind::bounded_sphere, sigma, {}, 1};
  m.validate();
  return m;
}

NoiseModel NoiseModel::truncated_gaussian(double sigma,
                                          std::optional<double> clip) {
  NoiseModel m{NoiseKind::truncated_gaussian, sigma, clip, 1};
  m.validate();
  return m;
}

NoiseModel NoiseModel::subgaussian_gaussian(double sigma) {
  NoiseModel m{NoiseKind::subgaussian_gaussian, sigma, {}, 1};
  m.validate();
  return m;
}

NoiseModel NoiseModel::minibatch(int batch_size, double sigma_bound) {
  NoiseModel m{NoiseKind::minibatch, sigma_bound, {}, batch_size};
  m.validate();
  return m;
}

void NoiseModel::validate() const {
  if (!std::isfinite(sigma) || sigma < 0.0)
    throw ConfigError("noise sigma must be a finite non-negative scalar");
  // exact <=> sigma == 0
  if (kind == NoiseKind::exact && sigma != 0.0)
    throw ConfigError("exact oracle requires sigma = 0");
  if (kind != NoiseKind::exact && sigma == 0.0)
    throw ConfigError("noisy oracle requires sigma > 0 (use kind=exact)");
  if (clip.has_value()) {
    if (kind != NoiseKind::truncated_gaussian)
      throw ConfigError("clip applies to truncated_gaussian only");
    if (!(*clip > 0.0) || !std::isfinite(*clip))
      throw ConfigError("clip must be a positive finite scalar");
  }
  if (kind == NoiseKind::minibatch && batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
}

void NoiseModel::validate_for(const problems::Problem& p) const {
  validate();
  if (kind == NoiseKind::minibatch && !p.is_finite_sum())
    throw ConfigError("minibatch oracle needs a finite-sum problem: " + p.name);
  if (kind == NoiseKind::minibatch && batch_size > p.n_components())
    throw ConfigError("batch_size exceeds component count of " + p.name);
  if (kind == NoiseKind::truncated_gaussian) {
    const double g_hat = resolve_clip(p);
    if (p.gradient_bound_finite() && g_hat < p.gradient_bound)
      throw ConfigError("truncated_gaussian clip below gradient bound of " +
                        p.name);
  }
}

double NoiseModel::resolve_clip(const problems::Problem& p) const {
  if (kind != NoiseKind::truncated_gaussian)
    throw InvalidParameterError("clip is defined for truncated_gaussian only");
  if (clip.has_value()) return *clip;
  if (!p.gradient_bound_finite())
    throw ConfigError(
        "default clip G + 4 sigma needs a finite gradient bound; "
        "set clip explicitly for " +
        p.name);
  return p.gradient_bound + 4.0 * sigma;
}

bool NoiseModel::satisfies_as_bounded(const problems::Problem& p) const {
  switch (kind) {
    case NoiseKind::exact: return p.gradient_bound_finite();
    case NoiseKind::bounded_sphere: return p.gradient_bound_finite();
    case NoiseKind::truncated_gaussian: return true;
    case NoiseKind::subgaussian_gaussian: return false;
    case NoiseKind::minibatch: return false;
  }
  return false;
}

bool NoiseModel::satisfies_subgaussian() const {
  return kind == NoiseKind::exact || kind == NoiseKind::bounded_sphere ||
         kind == NoiseKind::subgaussian_gaussian;
}

GradientSample sample(const problems::Problem& p, const Vec& x,
                      const NoiseModel& model, rng::Stream& stream) {
  if (!all_finite(x)) throw NumericError("oracle query at non-finite point");
  model.validate_for(p);

  GradientSample out;
  out.g_bar = p.gradient(x);
  const std::size_t d = out.g_bar.size();

  switch (model.kind) {
    case NoiseKind::exact: {
      out.xi = Vec(d, 0.0);
      break;
    }
    case NoiseKind::bounded_sphere: {
      out.xi = uniform_sphere(d, model.sigma, stream);
      break;
    }
    case NoiseKind::truncated_gaussian: {
      const double g_hat = model.resolve_clip(p);
      if (norm(out.g_bar) > g_hat)
        throw NumericError("exact gradient already exceeds the clip bound");
      const double scale = model.sigma / std::sqrt(static_cast<double>(d));
      // Accept only if both signs of xi keep the stochastic gradient inside
      // the ball; the acceptance region is then symmetric and a fair sign
      // flip leaves E[xi | x] = 0 while |g| <= clip almost surely.
      for (long attempt = 0;; ++attempt) {
        if (attempt >= kMaxRejectionAttempts)
          throw NumericError("truncated_gaussian rejection did not terminate");
        Vec xi = stream.normal_vec(d, scale);
        const double plus = norm(add(out.g_bar, xi));
        const double minus = norm(sub(out.g_bar, xi));
        if (plus <= g_hat && minus <= g_hat) {
          if (stream.fair_coin())
            for (double& v : xi) v = -v;
          out.xi = std::move(xi);
          break;
        }
      }
      break;
    }
    case NoiseKind::subgaussian_gaussian: {
      const double s = std::sqrt(
          subgaussian_coordinate_variance(model.sigma, static_cast<int>(d)));
      out.xi = stream.normal_vec(d, s);
      break;
    }
    case NoiseKind::minibatch: {
      const int n = p.n_components();
      const int b = model.batch_size;
      Vec mean(d, 0.0);
      if (b == n) {
        // full batch in index order reproduces the exact gradient bit for bit
        for (int i = 0; i < n; ++i) axpy(1.0, p.component_gradient(i, x), mean);
      } else {
        // partial Fisher-Yates: a uniform batch without replacement
        std::vector<int> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < b; ++i) {
          const std::size_t j =
              i + stream.uniform_index(static_cast<std::uint64_t>(n - i));
          std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
          axpy(1.0, p.component_gradient(idx[static_cast<std::size_t>(i)], x),
               mean);
        }
      }
      for (double& v : mean) v /= b;
      out.xi = sub(mean, out.g_bar);
      break;
    }
  }

  out.g = add(out.g_bar, out.xi);
  return out;
}

UnbiasedReport verify_unbiased_sampler(
    int dim, const std::function<Vec(rng::Stream&)>& draw_xi, long n_samples,
    rng::Stream& stream) {
  if (n_samples < 2) throw InvalidParameterError("need n_samples >= 2");
  const std::size_t d = static_cast<std::size_t>(dim);
  Vec sum(d, 0.0), sum_sq(d, 0.0);
  for (long k = 0; k < n_samples; ++k) {
    const Vec xi = draw_xi(stream);
    for (std::size_t i = 0; i < d; ++i) {
      sum[i] += xi[i];
      sum_sq[i] += xi[i] * xi[i];
    }
  }
  UnbiasedReport r;
  r.n_samples = n_samples;
  r.mean.resize(d);
  r.stderr_by_coord.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    r.mean[i] = sum[i] / n_samples;
    const double var =
        std::max(0.0, sum_sq[i] / n_samples - r.mean[i] * r.mean[i]);
    r.stderr_by_coord[i] = std::sqrt(var / n_samples);
    const double se = std::max(r.stderr_by_coord[i], 1e-300);
    r.worst_ratio = std::max(r.worst_ratio, std::fabs(r.mean[i]) / (5.0 * se));
  }
  r.pass = r.worst_ratio <= 1.0;
  return r;
}

UnbiasedReport verify_unbiased(const problems::Problem& p, const Vec& x,
                               const NoiseModel& model, long n_samples,
                               rng::Stream& stream) {
  if (model.kind == NoiseKind::exact) {
    UnbiasedReport r;
    r.mean = Vec(static_cast<std::size_t>(p.dim), 0.0);
    r.stderr_by_coord = r.mean;
    r.pass = true;
    return r;
  }
  if (n_samples < 10000)
    throw InvalidParameterError("verify_unbiased needs n_samples >= 1e4");
  return verify_unbiased_sampler(
      p.dim,
      [&](rng::Stream& s) { return sample(p, x, model, s).xi; }, n_samples,
      stream);
}

MgfReport verify_mgf_sampler(double sigma,
                             const std::function<Vec(rng::Stream&)>& draw_xi,
                             long n_samples, rng::Stream& stream) {
  MgfReport r;
  r.target = kE;
  r.n_samples = n_samples;
  if (sigma == 0.0) {
    r.trivial = true;
    r.pass = true;
    return r;
  }
  double sum = 0.0, sum_sq = 0.0;
  for (long k = 0; k < n_samples; ++k) {
    const Vec xi = draw_xi(stream);
    const double v = std::exp(norm_sq(xi) / (sigma * sigma));
    sum += v;
    sum_sq += v * v;
  }
  r.estimate = sum / n_samples;
  const double var = std::max(0.0, sum_sq / n_samples - r.estimate * r.estimate);
  r.stderr_ = std::sqrt(var / n_samples);
  // fixed 10% window; a CI-relative check would be fooled by the infinite
  // variance of uncalibrated samplers
  r.pass = r.estimate <= r.target * 1.1;
  return r;
}

MgfReport verify_subgaussian_mgf(const NoiseModel& model, int dim,
                                 long n_samples, rng::Stream& stream) {
  if (model.kind != NoiseKind::subgaussian_gaussian &&
      model.kind != NoiseKind::bounded_sphere &&
      model.kind != NoiseKind::exact)
    throw InvalidParameterError(
        "MGF check applies to sub-Gaussian oracle models only");
  if (model.kind == NoiseKind::exact || model.sigma == 0.0) {
    MgfReport r;
    r.target = kE;
    r.trivial = true;
    r.pass = true;
    return r;
  }
  if (n_samples < 100000)
    throw InvalidParameterError("verify_subgaussian_mgf needs n >= 1e5");
  const std::size_t d = static_cast<std::size_t>(dim);
  if (model.kind == NoiseKind::bounded_sphere) {
    return verify_mgf_sampler(
        model.sigma,
        [&](rng::Stream& s) { return uniform_sphere(d, model.sigma, s); },
        n_samples, stream);
  }
  const double s =
      std::sqrt(subgaussian_coordinate_variance(model.sigma, dim));
  return verify_mgf_sampler(
      model.sigma, [&](rng::Stream& st) { return st.normal_vec(d, s); },
      n_samples, stream);
}

}  // namespace agd::oracle
