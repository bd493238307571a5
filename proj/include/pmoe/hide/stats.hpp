#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "pmoe/matrix.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::hide {

/// Diagonal Gaussian summary of one class's representations.
struct ClassGaussian {
  std::size_t label = 0;
  std::size_t task = 0;
  std::vector<double> mean;
  std::vector<double> var;
};

class GaussianClassStats {
 public:
  static constexpr double kVarianceFloor = 1e-6;

  /// Fits mean and variance from the rows of `features`, replacing any
  /// earlier entry for `label`.
  void fit(std::size_t label, std::size_t task, const Matrix& features);

  bool empty() const noexcept { return classes_.empty(); }
  std::size_t size() const noexcept { return classes_.size(); }
  bool contains(std::size_t label) const { return classes_.count(label) != 0; }
  const ClassGaussian& at(std::size_t label) const;
  /// Labels in ascending order.
  std::vector<std::size_t> labels() const;

  /// `count` × D draws from class `label`.
  Matrix sample(std::size_t label, std::size_t count, Rng& rng) const;

 private:
  std::map<std::size_t, ClassGaussian> classes_;
};

}  // namespace pmoe::hide
