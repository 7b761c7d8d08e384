#include "agd/schedules.hpp"

#include <cmath>

#include "agd/errors.hpp"

namespace agd::schedules {

void Accumulator::add(double grad_sq) {
  if (!(grad_sq >= 0.0) || !std::isfinite(grad_sq))
    throw NumericError("accumulator updates must be finite and non-negative");
  sum_sq += grad_sq;
  ++t;
}

Accumulator make_accumulator(double g0) {
  if (!(g0 >= 0.0) || !std::isfinite(g0))
    throw InvalidParameterError("G0 must be a finite non-negative scalar");
  return Accumulator{g0 * g0, 0.0, 0};
}

double eta_tilde(const Accumulator& acc) {
  const double total = acc.total_sq();
  if (total <= 0.0)
    throw NumericError(
        "zero accumulator: set G0 > 0 or nonzero first gradient");
  return 1.0 / std::sqrt(total);
}

std::string to_string(Averaging a) {
  switch (a) {
    case Averaging::none: return "none";
    case Averaging::uniform: return "uniform";
    case Averaging::weighted: return "weighted";
  }
  throw InvalidParameterError("unknown averaging");
}

Averaging averaging_from_string(const std::string& s) {
  if (s == "none") return Averaging::none;
  if (s == "uniform") return Averaging::uniform;
  if (s == "weighted") return Averaging::weighted;
  throw ConfigError("unknown averaging: " + s);
}

double alpha(Averaging averaging, long t) {
  if (t < 1) throw InvalidParameterError("alpha needs t >= 1");
  switch (averaging) {
    case Averaging::none: return 1.0;
    case Averaging::weighted: return 2.0 / (t + 1.0);
    case Averaging::uniform: return 1.0 / static_cast<double>(t);
  }
  throw InvalidParameterError("unknown averaging");
}

namespace {

void require_averaging_scheme(Averaging averaging) {
  if (averaging == Averaging::none)
    throw InvalidParameterError("Gamma is defined for averaging schemes only");
}

}  // namespace

std::vector<double> gamma_seq(Averaging averaging, long horizon) {
  require_averaging_scheme(averaging);
  if (horizon < 1) throw InvalidParameterError("gamma_seq needs horizon >= 1");
  std::vector<double> g(static_cast<std::size_t>(horizon));
  g[0] = 1.0;  // Gamma_1 = 1 even though alpha_1 may be 1
  for (long t = 2; t <= horizon; ++t)
    g[static_cast<std::size_t>(t - 1)] =
        (1.0 - alpha(averaging, t)) * g[static_cast<std::size_t>(t - 2)];
  return g;
}

double gamma_closed_form(Averaging averaging, long t) {
  require_averaging_scheme(averaging);
  if (t < 1) throw InvalidParameterError("gamma needs t >= 1");
  if (t == 1) return 1.0;
  if (averaging == Averaging::weighted)
    return 2.0 / (static_cast<double>(t) * (t + 1.0));
  return 1.0 / static_cast<double>(t);
}

double term_star(Averaging averaging, long t, long horizon) {
  require_averaging_scheme(averaging);
  if (t < 1 || t > horizon)
    throw InvalidParameterError("term_star needs 1 <= t <= horizon");
  const std::vector<double> g = gamma_seq(averaging, horizon);
  double tail = 0.0;
  for (long k = t; k <= horizon; ++k) tail += g[static_cast<std::size_t>(k - 1)];
  return tail * alpha(averaging, t) / g[static_cast<std::size_t>(t - 1)];
}

TermStarTable::TermStarTable(Averaging averaging, long horizon_max)
    : averaging_(averaging), gamma_(gamma_seq(averaging, horizon_max)) {
  prefix_.resize(gamma_.size() + 1, 0.0);
  for (std::size_t k = 0; k < gamma_.size(); ++k)
    prefix_[k + 1] = prefix_[k] + gamma_[k];
}

double TermStarTable::value(long t, long horizon) const {
  if (t < 1 || t > horizon ||
      horizon > static_cast<long>(gamma_.size()))
    throw InvalidParameterError("term_star table lookup out of range");
  const double tail = prefix_[static_cast<std::size_t>(horizon)] -
                      prefix_[static_cast<std::size_t>(t - 1)];
  return tail * alpha(averaging_, t) / gamma_[static_cast<std::size_t>(t - 1)];
}

std::string to_string(PresetKind k) {
  switch (k) {
    case PresetKind::adagrad: return "adagrad";
    case PresetKind::adagrad_averaging: return "adagrad_averaging";
    case PresetKind::rsag: return "rsag";
    case PresetKind::sgd_fixed: return "sgd_fixed";
  }
  throw InvalidParameterError("unknown preset kind");
}

PresetKind preset_kind_from_string(const std::string& s) {
  if (s == "adagrad") return PresetKind::adagrad;
  if (s == "adagrad_averaging") return PresetKind::adagrad_averaging;
  if (s == "rsag") return PresetKind::rsag;
  if (s == "sgd_fixed") return PresetKind::sgd_fixed;
  throw ConfigError("unknown preset kind: " + s);
}

Preset Preset::adagrad(double g0) {
  Preset p{PresetKind::adagrad, Averaging::none, g0, 0.1};
  p.validate();
  return p;
}

Preset Preset::adagrad_averaging(double g0, Averaging avg) {
  Preset p{PresetKind::adagrad_averaging, avg, g0, 0.1};
  p.validate();
  return p;
}

Preset Preset::rsag(double g0, Averaging avg) {
  Preset p{PresetKind::rsag, avg, g0, 0.1};
  p.validate();
  return p;
}

Preset Preset::sgd_fixed(double step) {
  Preset p{PresetKind::sgd_fixed, Averaging::none, 0.0, step};
  p.validate();
  return p;
}

void Preset::validate() const {
  if (!(g0 >= 0.0) || !std::isfinite(g0))
    throw ConfigError("preset G0 must be a finite non-negative scalar");
  switch (kind) {
    case PresetKind::adagrad:
    case PresetKind::sgd_fixed:
      if (averaging != Averaging::none)
        throw ConfigError(to_string(kind) + " uses no averaging");
      break;
    case PresetKind::adagrad_averaging:
    case PresetKind::rsag:
      if (averaging == Averaging::none)
        throw ConfigError(to_string(kind) +
                          " needs weighted or uniform averaging");
      break;
  }
  if (kind == PresetKind::sgd_fixed &&
      (!(fixed_step > 0.0) || !std::isfinite(fixed_step)))
    throw ConfigError("sgd_fixed needs a positive step constant");
}

StepPair step_pair(const Preset& preset, long t, const Accumulator& acc) {
  preset.validate();
  if (t < 1) throw InvalidParameterError("step_pair needs t >= 1");
  switch (preset.kind) {
    case PresetKind::adagrad: {
      const double e = eta_tilde(acc);
      return {e, e};
    }
    case PresetKind::adagrad_averaging: {
      const double e = eta_tilde(acc);
      return {alpha(preset.averaging, t) * e, 0.0};
    }
    case PresetKind::rsag: {
      const double e = eta_tilde(acc);
      return {e, (1.0 + alpha(preset.averaging, t)) * e};
    }
    case PresetKind::sgd_fixed: {
      const double e = preset.fixed_step / std::sqrt(static_cast<double>(t));
      return {e, e};
    }
  }
  throw InvalidParameterError("unknown preset kind");
}

}  // namespace agd::schedules
