#pragma once

#include <cstddef>
#include <vector>

#include "pmoe/estimation/model.hpp"

namespace pmoe::estimation {

/// cells[j'] lists the atoms of `g` whose location (β₁, η) is nearest to
/// atom j' of `g_star`. Ties go to the lowest j'.
using VoronoiCells = std::vector<std::vector<std::size_t>>;

VoronoiCells voronoi_cells(const MixingMeasure& g, const MixingMeasure& g_star);

/// Σⱼ′ |Σ_{i∈Vⱼ′} exp(β₀ᵢ) − exp(β*₀ⱼ′)|.
double voronoi_mass_term(const MixingMeasure& g, const MixingMeasure& g_star,
                         const VoronoiCells& cells);

/// ℒ₁: first-power distances in singleton cells, squared distances in cells
/// holding more than one atom, plus the mass term.
double voronoi_loss_l1(const MixingMeasure& g, const MixingMeasure& g_star);

/// ℒ_{2,r}: mass term plus Σ exp(β₀ᵢ)(‖Δβ₁‖ʳ + ‖Δa‖ʳ + |Δb|ʳ). Requires r ≥ 1.
double voronoi_loss_l2r(const MixingMeasure& g, const MixingMeasure& g_star, double r);

}  // namespace pmoe::estimation
