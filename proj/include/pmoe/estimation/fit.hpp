#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pmoe/estimation/model.hpp"

namespace pmoe::estimation {

enum class Optimizer { LevenbergMarquardt, Adam };

struct FitConfig {
  Optimizer optimizer = Optimizer::LevenbergMarquardt;
  int restarts = 8;
  int max_iterations = 200;  // LM iterations, or Adam steps
  double learning_rate = 0.01;  // Adam only
  double tolerance = 1e-12;     // relative objective decrease that ends a run
  /// Adam: reject steps that raise the objective and halve the step size.
  bool monotone = true;
  /// Also estimate the gate's α and τ (shared by all atoms).
  bool learn_gate = false;
  std::uint64_t seed = 0;
  /// Starting points tried before the random restarts.
  std::vector<MixingMeasure> initial;
};

struct FitResult {
  MixingMeasure measure;
  double objective = 0.0;  // Σᵢ (Yᵢ − g(Xᵢ))²
  bool converged = false;
  int iterations = 0;
  double alpha = 0.0;
  double tau = 0.0;
  /// Accepted objective values of the winning run, in order.
  std::vector<double> trace;
};

/// Σᵢ (Yᵢ − g_G(Xᵢ))².
double least_squares_objective(std::span<const RegressionSample> data, const RegressionModel& model,
                               const MixingMeasure& g);

/// Jacobian of g_G(X) with respect to the packed parameters
/// [β₀, β₁, η] per atom, followed by [α, τ] when `with_gate` is set.
Vec regression_jacobian(std::span<const double> x, const RegressionModel& model,
                        const MixingMeasure& g, bool with_gate);

/// Ĝₙ ∈ argmin over measures with exactly `num_atoms` atoms in the box.
/// Throws FitError when the objective turns non-finite.
FitResult least_squares_fit(std::span<const RegressionSample> data, const RegressionModel& model,
                            std::size_t num_atoms, const FitConfig& config);

}  // namespace pmoe::estimation
