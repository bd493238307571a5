#pragma once

#include <cstdint>

#include "pmoe/matrix.hpp"

namespace pmoe {

/// Counter-based generator: the k-th draw is SplitMix64's finalizer applied
/// to seed + (k+1)·0x9E3779B97F4A7C15. The stream depends only on (seed, k),
/// so it is identical on every platform with IEEE-754 doubles.
///
/// uniform() takes the top 53 bits of a draw. normal() consumes exactly two
/// draws (Box–Muller, cosine branch) and caches nothing, so the counter
/// advances by a fixed amount per call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;  // [0, 1)
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  std::uint64_t below(std::uint64_t n) noexcept;  // [0, n), n > 0

  /// Independent child stream; the parent advances by one draw.
  Rng split() noexcept { return Rng(next_u64()); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);
Matrix normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

}  // namespace pmoe
