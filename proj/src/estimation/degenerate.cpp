#include "pmoe/estimation/degenerate.hpp"

#include <cmath>

#include "pmoe/error.hpp"
#include "pmoe/estimation/voronoi.hpp"

namespace pmoe::estimation {

MixingMeasure degenerate_sequence(const MixingMeasure& g_star, double n, double r) {
  if (g_star.atoms.empty()) throw ContractError("degenerate_sequence: empty true measure");
  if (!(n >= 1.0)) throw ConfigError("degenerate_sequence: n must be at least 1");
  if (!(r >= 1.0)) throw ConfigError("degenerate_sequence: r must be at least 1");
  const Atom& first = g_star.atoms.front();
  const double w = 0.5 * std::exp(first.beta0) + 0.5 * std::pow(n, -(r + 1.0));
  MixingMeasure g;
  for (double sign : {1.0, -1.0}) {
    Atom a = first;
    a.beta0 = std::log(w);
    a.eta.back() += sign / n;
    g.atoms.push_back(std::move(a));
  }
  g.atoms.insert(g.atoms.end(), g_star.atoms.begin() + 1, g_star.atoms.end());
  return g;
}

double degenerate_closed_form(const MixingMeasure& g_star, double n, double r) {
  const double e = std::pow(n, -(r + 1.0));
  return e + (std::exp(g_star.atoms.front().beta0) + e) * std::pow(n, -r);
}

std::vector<DegeneratePoint> degenerate_curve(const Problem& problem, const std::vector<double>& ns,
                                              double r, std::size_t mc_points, std::uint64_t seed) {
  if (problem.model.expert.kind != ExpertKind::Identity) {
    throw ConfigError("degenerate_curve: the sequence is defined for identity experts");
  }
  if (mc_points == 0) throw ConfigError("degenerate_curve: need at least one Monte Carlo point");
  const Matrix points = sample_inputs(problem.mu, problem.model.bank.input_dim(), mc_points, seed);
  std::vector<DegeneratePoint> out;
  for (double n : ns) {
    DegeneratePoint p;
    p.n = n;
    const MixingMeasure g = degenerate_sequence(problem.g_star, n, r);
    p.loss = voronoi_loss_l2r(g, problem.g_star, r);
    p.closed_form = degenerate_closed_form(problem.g_star, n, r);
    p.l2 = l2_distance(problem.model, g, problem.g_star, points);
    p.ratio = p.l2 / p.loss;
    out.push_back(p);
  }
  return out;
}

}  // namespace pmoe::estimation
