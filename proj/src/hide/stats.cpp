#include "pmoe/hide/stats.hpp"

#include <algorithm>
#include <cmath>

#include "pmoe/error.hpp"

namespace pmoe::hide {

void GaussianClassStats::fit(std::size_t label, std::size_t task, const Matrix& features) {
  if (features.rows() == 0) throw ContractError("class stats: no features for class " + std::to_string(label));
  const std::size_t n = features.rows(), d = features.cols();
  ClassGaussian g{label, task, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) g.mean[k] += features(i, k);
  for (double& m : g.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) g.var[k] += (features(i, k) - g.mean[k]) * (features(i, k) - g.mean[k]);
  for (double& v : g.var) v = std::max(v / static_cast<double>(n), kVarianceFloor);
  classes_[label] = std::move(g);
}

const ClassGaussian& GaussianClassStats::at(std::size_t label) const {
  const auto it = classes_.find(label);
  if (it == classes_.end()) throw ContractError("class stats: unknown class " + std::to_string(label));
  return it->second;
}

std::vector<std::size_t> GaussianClassStats::labels() const {
  std::vector<std::size_t> out;
  for (const auto& [k, _] : classes_) out.push_back(k);
  return out;
}

Matrix GaussianClassStats::sample(std::size_t label, std::size_t count, Rng& rng) const {
  const ClassGaussian& g = at(label);
  Matrix out(count, g.mean.size());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < g.mean.size(); ++k) out(i, k) = g.mean[k] + std::sqrt(g.var[k]) * rng.normal();
  return out;
}

}  // namespace pmoe::hide
