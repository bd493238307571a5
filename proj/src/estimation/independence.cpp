#include "pmoe/estimation/independence.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "pmoe/error.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::estimation {

namespace {

constexpr double kThreshold = 1e-8;

// Multi-indices of total order ≤ max_order as lists of coordinate indices,
// e.g. {} , {k}, {k, l} with k ≤ l.
std::vector<std::vector<std::size_t>> multi_indices(std::size_t dim, std::size_t max_order) {
  std::vector<std::vector<std::size_t>> out{{}};
  if (max_order >= 1)
    for (std::size_t k = 0; k < dim; ++k) out.push_back({k});
  if (max_order >= 2)
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t l = k; l < dim; ++l) out.push_back({k, l});
  return out;
}

}  // namespace

std::size_t independence_family_size(std::size_t dim) {
  std::size_t n = 0;
  for (const auto& nu : multi_indices(dim, 2)) n += multi_indices(dim + 1, 2 - nu.size()).size();
  return n;
}

IndependenceReport check_algebraic_independence(ExpertKind expert, Activation sigma,
                                                const MixingMeasure& params, const Matrix& grid) {
  IndependenceReport rep;
  if (params.atoms.empty()) {
    rep.diagnostic = "no parameters";
    return rep;
  }
  const std::size_t dim = params.input_dim();
  if (grid.cols() != dim) throw DimensionError("independence: grid width differs from input dimension");
  const ExpertFn h{expert};
  const auto nus = multi_indices(dim, 2);
  rep.functions = params.size() * independence_family_size(dim);
  rep.points = grid.rows();
  if (rep.points < 5 * rep.functions) {
    rep.diagnostic = "grid has fewer than 5x as many points as functions";
    return rep;
  }

  const std::size_t per_atom = independence_family_size(dim);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rep.points), static_cast<Eigen::Index>(rep.functions));
  Vec grad(dim + 1);
  for (std::size_t r = 0; r < rep.points; ++r) {
    const auto x = grid.row(r);
    Eigen::Index col = 0;
    for (const auto& a : params.atoms) {
      double u = 0.0;
      for (std::size_t k = 0; k < dim; ++k) u += a.beta1[k] * x[k];
      const double s1 = activate_d1(sigma, u);
      const double s2 = activate_d2(sigma, u);
      h.gradient(x, a.eta, grad);
      for (const auto& nu : nus) {
        double xnu = 1.0;
        for (std::size_t k : nu) xnu *= x[k];
        const double factor =
            xnu * (std::pow(1.0 + s1, static_cast<double>(nu.size())) + (nu.size() == 2 ? s2 : 0.0));
        for (const auto& gamma : multi_indices(dim + 1, 2 - nu.size())) {
          double dh = 0.0;
          if (gamma.empty()) dh = h.value(x, a.eta);
          else if (gamma.size() == 1) dh = grad[gamma[0]];
          else dh = h.hessian(x, a.eta, gamma[0], gamma[1]);
          m(static_cast<Eigen::Index>(r), col++) = factor * dh;
        }
      }
    }
  }

  // The family is a set: within one atom, (ν, γ) pairs that give the same
  // function (e.g. X₁∂h/∂a₂ and X₂∂h/∂a₁ for h = φ(aᵀX + b)) count once.
  // Repeats across atoms are kept, since they signal non-distinct parameters.
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const auto base = static_cast<Eigen::Index>(j * per_atom);
    for (Eigen::Index c = base; c < base + static_cast<Eigen::Index>(per_atom); ++c) {
      bool repeat = false;
      for (Eigen::Index k = base; k < c && !repeat; ++k) {
        const double scale = std::max(m.col(c).norm(), m.col(k).norm());
        repeat = scale > 0.0 && (m.col(c) - m.col(k)).norm() <= 1e-12 * scale;
      }
      if (!repeat) keep.push_back(c);
    }
  }
  m = m(Eigen::all, keep).eval();
  rep.functions = keep.size();

  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double n = m.col(c).norm();
    if (n > 0.0) m.col(c) /= n;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smax = sv.maxCoeff();
  rep.ratio = smax > 0.0 ? sv.minCoeff() / smax : 0.0;
  rep.independent = rep.ratio > kThreshold;
  if (!rep.independent) rep.diagnostic = "evaluation matrix is numerically rank deficient";
  return rep;
}

IndependenceReport check_algebraic_independence(ExpertKind expert, Activation sigma,
                                                std::size_t atoms, std::size_t dim,
                                                const ParameterBox& box,
                                                const InputDistribution& mu, std::uint64_t seed) {
  Rng rng(seed);
  MixingMeasure g;
  for (std::size_t j = 0; j < atoms; ++j) {
    Atom a;
    for (std::size_t k = 0; k < dim; ++k) a.beta1.push_back(rng.uniform(box.beta1_lo, box.beta1_hi));
    for (std::size_t k = 0; k <= dim; ++k) a.eta.push_back(rng.uniform(box.eta_lo, box.eta_hi));
    g.atoms.push_back(std::move(a));
  }
  const std::size_t count = 10 * atoms * independence_family_size(dim);
  const Matrix grid = uniform_matrix(rng, count, dim, mu.lo, mu.hi);
  return check_algebraic_independence(expert, sigma, g, grid);
}

}  // namespace pmoe::estimation
