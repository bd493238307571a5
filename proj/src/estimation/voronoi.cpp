#include "pmoe/estimation/voronoi.hpp"

#include <cmath>

#include "pmoe/error.hpp"

namespace pmoe::estimation {

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

double norm(std::span<const double> a, std::span<const double> b) { return std::sqrt(dist2(a, b)); }

void check(const MixingMeasure& g, const MixingMeasure& g_star) {
  if (g.atoms.empty() || g_star.atoms.empty()) throw ContractError("voronoi: both measures must be nonempty");
  const std::size_t d = g_star.input_dim(), q = g_star.expert_dim();
  for (const auto* m : {&g, &g_star})
    for (const auto& a : m->atoms)
      if (a.beta1.size() != d || a.eta.size() != q) throw DimensionError("voronoi: atom dimensions differ");
}

}  // namespace

VoronoiCells voronoi_cells(const MixingMeasure& g, const MixingMeasure& g_star) {
  check(g, g_star);
  VoronoiCells cells(g_star.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec w = g.atoms[i].location();
    std::size_t best = 0;
    double best_d = dist2(w, g_star.atoms[0].location());
    for (std::size_t j = 1; j < g_star.size(); ++j) {
      const double dj = dist2(w, g_star.atoms[j].location());
      if (dj < best_d) {
        best_d = dj;
        best = j;
      }
    }
    cells[best].push_back(i);
  }
  return cells;
}

double voronoi_mass_term(const MixingMeasure& g, const MixingMeasure& g_star,
                         const VoronoiCells& cells) {
  double s = 0.0;
  for (std::size_t j = 0; j < g_star.size(); ++j) {
    double mass = 0.0;
    for (std::size_t i : cells[j]) mass += g.atoms[i].weight();
    s += std::abs(mass - g_star.atoms[j].weight());
  }
  return s;
}

double voronoi_loss_l1(const MixingMeasure& g, const MixingMeasure& g_star) {
  const VoronoiCells cells = voronoi_cells(g, g_star);
  double s = voronoi_mass_term(g, g_star, cells);
  for (std::size_t j = 0; j < g_star.size(); ++j) {
    const Atom& t = g_star.atoms[j];
    const bool single = cells[j].size() == 1;
    for (std::size_t i : cells[j]) {
      const Atom& a = g.atoms[i];
      const double db = dist2(a.beta1, t.beta1);
      const double de = dist2(a.eta, t.eta);
      s += a.weight() * (single ? std::sqrt(db) + std::sqrt(de) : db + de);
    }
  }
  return s;
}

double voronoi_loss_l2r(const MixingMeasure& g, const MixingMeasure& g_star, double r) {
  if (!(r >= 1.0)) throw ConfigError("voronoi_loss_l2r: r must be at least 1");
  const VoronoiCells cells = voronoi_cells(g, g_star);
  const std::size_t d = g_star.input_dim();
  double s = voronoi_mass_term(g, g_star, cells);
  for (std::size_t j = 0; j < g_star.size(); ++j) {
    const Atom& t = g_star.atoms[j];
    for (std::size_t i : cells[j]) {
      const Atom& a = g.atoms[i];
      const std::span<const double> ea(a.eta), et(t.eta);
      const double db1 = norm(a.beta1, t.beta1);
      const double da = norm(ea.first(d), et.first(d));
      const double dbias = std::abs(ea.back() - et.back());
      s += a.weight() * (std::pow(db1, r) + std::pow(da, r) + std::pow(dbias, r));
    }
  }
  return s;
}

}  // namespace pmoe::estimation
