#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pmoe/estimation/model.hpp"

namespace pmoe::estimation {

struct IndependenceReport {
  bool independent = false;
  double ratio = 0.0;  // σ_min / σ_max of the column-normalised evaluation matrix
  std::size_t functions = 0;
  std::size_t points = 0;
  std::string diagnostic;
};

/// Numerical rank test of the family
///   X^ν [(1 + σ'(β₁ⱼᵀX))^{|ν|} + 1{|ν|=2} σ''(β₁ⱼᵀX)] ∂^{|γ|}h/∂η^γ (X, ηⱼ),
///   0 ≤ |ν| + |γ| ≤ 2,
/// over the atoms' (β₁, η) and the rows of `grid`. β₀ is ignored.
/// Independent iff the singular value ratio exceeds 1e-8.
IndependenceReport check_algebraic_independence(ExpertKind expert, Activation sigma,
                                                const MixingMeasure& params, const Matrix& grid);

/// Draws `atoms` parameter pairs uniformly from `box` and a grid of 10× as many
/// points as functions from μ, then runs the test above.
IndependenceReport check_algebraic_independence(ExpertKind expert, Activation sigma,
                                                std::size_t atoms, std::size_t dim,
                                                const ParameterBox& box,
                                                const InputDistribution& mu, std::uint64_t seed);

/// Number of functions per atom for input dimension `dim` (q = dim + 1).
std::size_t independence_family_size(std::size_t dim);

}  // namespace pmoe::estimation
