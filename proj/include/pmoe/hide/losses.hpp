#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pmoe/hide/stats.hpp"
#include "pmoe/rng.hpp"
#include "pmoe/tensor.hpp"

namespace pmoe::hide {

/// x W + b, with output columns that can be appended as classes or tasks appear.
struct LinearHead {
  Tensor w;  // D × K
  Tensor b;  // 1 × K

  static LinearHead create(std::size_t in, std::size_t out, Rng& rng);
  std::size_t outputs() const { return w.cols(); }
  /// Appends fresh columns up to `out`; existing columns keep their values.
  void grow(std::size_t out, Rng& rng);
  /// Logits of the first `k` outputs.
  Tensor forward(const Tensor& x, std::size_t k) const;
  std::vector<Tensor> params() const { return {w, b}; }
};

/// Σ_{h∈H} Σ_{old c} log( exp(h·μ_c/τ) / (Σ_{h'∈H} exp(h·h'/τ) + Σ_{c'} exp(h·μ_{c'}/τ)) )
/// over the rows of `h` and `prototypes`. Zero when there are no prototypes.
Tensor contrastive_loss(const Tensor& h, const Matrix& prototypes, double temperature);

/// Mean cross-entropy over the current task's classes plus
/// λ·contrastive_loss / |batch|. With `normalize`, features and prototypes are
/// scaled to unit length before the contrastive term.
Tensor wtp_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& features,
                const Matrix& prototypes, double lambda, double temperature, bool normalize = false);

struct PseudoSet {
  Matrix features;
  std::vector<std::size_t> labels;  // class label
  std::vector<std::size_t> tasks;   // task of that class
};

/// `per_class` draws from every class in `stats`.
PseudoSet sample_pseudo(const GaussianClassStats& stats, std::size_t per_class, Rng& rng);

/// Shuffles `set` and cuts it into batches of at most `batch` rows.
std::vector<PseudoSet> split_batches(const PseudoSet& set, std::size_t batch, Rng& rng);

/// Cross-entropy of task identity over uninstructed pseudo-features.
Tensor tii_loss(const LinearHead& omega, std::size_t tasks_seen, const PseudoSet& set);

/// Cross-entropy over all seen classes on instructed pseudo-features.
Tensor tap_loss(const LinearHead& psi, std::size_t classes_seen, const PseudoSet& set);

}  // namespace pmoe::hide
