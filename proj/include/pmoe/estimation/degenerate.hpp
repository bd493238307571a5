#pragma once

#include <cstdint>
#include <vector>

#include "pmoe/estimation/model.hpp"

namespace pmoe::estimation {

/// The L + 1 atom sequence Gₙ that splits the first true atom into two halves
/// with bias offsets ±1/n and weights ½exp(β*₀₁) + ½n^{−(r+1)}; the other
/// atoms copy G*. Requires n ≥ 1.
MixingMeasure degenerate_sequence(const MixingMeasure& g_star, double n, double r = 1.0);

/// n^{−(r+1)} + (exp(β*₀₁) + n^{−(r+1)})·n^{−r}.
double degenerate_closed_form(const MixingMeasure& g_star, double n, double r = 1.0);

struct DegeneratePoint {
  double n = 0.0;
  double loss = 0.0;         // ℒ_{2,r}(Gₙ, G*)
  double closed_form = 0.0;
  double l2 = 0.0;           // ‖f_{Gₙ} − f_{G*}‖_{L²(μ)}
  double ratio = 0.0;        // l2 / loss
};

/// Evaluates the sequence at each n with `mc_points` Monte Carlo draws from μ.
/// The model must use identity experts.
std::vector<DegeneratePoint> degenerate_curve(const Problem& problem, const std::vector<double>& ns,
                                              double r, std::size_t mc_points, std::uint64_t seed);

}  // namespace pmoe::estimation
