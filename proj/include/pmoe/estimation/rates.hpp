#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pmoe/estimation/fit.hpp"
#include "pmoe/estimation/model.hpp"

namespace pmoe::estimation {

struct RateConfig {
  std::vector<std::size_t> ns{200, 400, 800, 1600, 3200, 6400};
  int trials = 20;
  double nu = 0.1;
  /// Fitted atom count; 0 means the true count L.
  std::size_t fitted_atoms = 0;
  std::size_t mc_points = 20000;
  double r = 1.0;  // exponent of ℒ_{2,r}
  int jobs = 1;
  std::uint64_t seed = 0;
  FitConfig fit;
};

struct TrialRecord {
  std::string gate;
  std::size_t n = 0;
  int trial = 0;
  double loss_l1 = 0.0;
  double loss_l2r = 0.0;
  double l2mu_error = 0.0;
  double objective = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

/// Linear-interpolated quartiles of a nonempty sample.
Quartiles quartiles(std::vector<double> values);

struct RateRow {
  std::size_t n = 0;
  Quartiles l1, l2r, l2mu;
  int failures = 0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;  // 95% Student-t half-width of the slope
};

/// OLS fit of log(y) on log(x). Needs at least two points and positive values.
SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct RateResult {
  std::string gate;
  std::size_t fitted_atoms = 0;
  std::vector<TrialRecord> records;  // sorted by (n, trial)
  std::vector<RateRow> rows;
  SlopeFit slope_l1, slope_l2r, slope_l2mu;
};

/// Seed of trial `trial` at sample size `n`.
std::uint64_t trial_seed(std::uint64_t seed, std::size_t n, int trial);

/// Runs one trial: draw data, fit, score against G*. Fit errors are recorded
/// in the returned record instead of thrown.
TrialRecord run_trial(const Problem& problem, const RateConfig& config, const Matrix& mc_points,
                      std::size_t n, int trial);

/// Full experiment over the n-grid. Throws ExperimentError when more than a
/// quarter of the trials at some n fail.
RateResult rate_experiment(const Problem& problem, const RateConfig& config);

void write_rate_csv(std::ostream& os, const std::vector<RateResult>& results);

}  // namespace pmoe::estimation
