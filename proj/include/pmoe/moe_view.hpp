#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pmoe/attention.hpp"
#include "pmoe/matrix.hpp"

namespace pmoe {

// A self-attention head read as N mixture-of-experts models that share N
// linear experts f_j(X) = W_Vᵀ x_j. Row i's gate scores the experts with the
// bilinear forms s_ij(X) = x_iᵀ W_Q W_Kᵀ x_j / √d_v.
//
// Prefix tuning appends L experts f_{N+j}(X) = W_Vᵀ p^V_j that ignore X, scored
// linearly in x_i by s_{i,N+j}(X) = x_iᵀ W_Q W_Kᵀ p^K_j / √d_v.
//
// Row indices are 0-based. Experts are indexed pretrained-first:
// 0..N-1 are the sequence experts and N..N+L-1 the prefix experts.

class PretrainedMoeHead {
 public:
  PretrainedMoeHead(const Matrix& x, const HeadParams& head);

  std::size_t num_experts() const noexcept { return x_.rows(); }
  std::size_t d_model() const noexcept { return x_.cols(); }
  std::size_t d_v() const noexcept { return w_v_.cols(); }

  std::vector<double> expert(std::size_t j) const;
  double score(std::size_t i, std::size_t j) const;

 private:
  Matrix x_;
  Matrix h_;  // W_Q W_Kᵀ, d × d
  Matrix w_v_;
  double inv_sqrt_dv_;
};

class PrefixExpertSet {
 public:
  PrefixExpertSet(const Matrix& x, const HeadParams& head, const Prefix& prefix);

  std::size_t num_experts() const noexcept { return p_k_.rows(); }
  std::vector<double> expert(std::size_t j) const;
  double score(std::size_t i, std::size_t j) const;

 private:
  Matrix x_;
  Matrix h_;
  Matrix w_v_;
  Matrix p_k_;
  Matrix p_v_;
  double inv_sqrt_dv_;
};

/// Maps a raw prefix score to the score used in the gate.
using ScoreMap = std::function<double(double)>;

/// Row i of a plain head as a softmax-gated sum over the N sequence experts.
std::vector<double> moe_head_row(const Matrix& x, const HeadParams& head, std::size_t i);

/// Row i of a prefix-tuned head: N pretrained plus L prefix experts under one
/// shared normaliser. `prefix_map` (optional) transforms the prefix scores only.
std::vector<double> prefix_moe_head_row(const Matrix& x, const HeadParams& head,
                                        const Prefix& prefix, std::size_t i,
                                        const ScoreMap& prefix_map = {});

/// The full gate of row i, length N + L, pretrained experts first.
std::vector<double> gate_weights(const Matrix& x, const HeadParams& head, const Prefix& prefix,
                                 std::size_t i, const ScoreMap& prefix_map = {});

/// softmax over `scores` with max subtraction.
std::vector<double> softmax(const std::vector<double>& scores);

}  // namespace pmoe
