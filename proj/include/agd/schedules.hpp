#pragma once

#include <string>
#include <vector>

namespace agd::schedules {

// Running accumulator behind the adaptive step size
// eta_tilde_t = (G0^2 + sum_{k<=t} |g_k|^2)^{-1/2}.
struct Accumulator {
  double g0_sq = 0.0;
  double sum_sq = 0.0;
  long t = 0;

  void add(double grad_sq);
  double total_sq() const { return g0_sq + sum_sq; }
};

Accumulator make_accumulator(double g0);

double eta_tilde(const Accumulator& acc);

enum class Averaging { none, uniform, weighted };

std::string to_string(Averaging a);
Averaging averaging_from_string(const std::string& s);

// weighted: 2/(t+1); uniform: 1/t; none: 1 (collapses the averaging step)
double alpha(Averaging averaging, long t);

// Gamma_1 = 1 by decree, Gamma_t = (1 - alpha_t) Gamma_{t-1} for t >= 2.
std::vector<double> gamma_seq(Averaging averaging, long horizon);
double gamma_closed_form(Averaging averaging, long t);

// [sum_{k=t}^{T} Gamma_k] * alpha_t / Gamma_t, the summation weight attached
// to iteration t over a horizon T; <= 2 for weighted averaging.
double term_star(Averaging averaging, long t, long horizon);

// Precomputed Gamma prefix sums for grid evaluations of term_star.
class TermStarTable {
 public:
  TermStarTable(Averaging averaging, long horizon_max);
  double value(long t, long horizon) const;

 private:
  Averaging averaging_;
  std::vector<double> gamma_;
  std::vector<double> prefix_;  // prefix_[k] = Gamma_1 + ... + Gamma_k
};

enum class PresetKind { adagrad, adagrad_averaging, rsag, sgd_fixed };

std::string to_string(PresetKind k);
PresetKind preset_kind_from_string(const std::string& s);

struct Preset {
  PresetKind kind = PresetKind::adagrad;
  Averaging averaging = Averaging::none;
  double g0 = 1e-2;
  double fixed_step = 0.1;  // c for sgd_fixed

  static Preset adagrad(double g0);
  static Preset adagrad_averaging(double g0,
                                  Averaging avg = Averaging::weighted);
  static Preset rsag(double g0, Averaging avg = Averaging::weighted);
  static Preset sgd_fixed(double step);

  // Non-adaptive comparison baseline, flagged in reports.
  bool is_baseline() const { return kind == PresetKind::sgd_fixed; }
  void validate() const;
};

struct StepPair {
  double eta = 0.0;
  double gamma = 0.0;
};

// The accumulator must already include |g_t|^2.
StepPair step_pair(const Preset& preset, long t, const Accumulator& acc);

}  // namespace agd::schedules
