#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pmoe/rng.hpp"
#include "pmoe/tensor.hpp"

namespace pmoe {

/// Projections of one attention head. d_k = d_v is enforced so the √d_k
/// scaling of plain attention and the √d_v scaling of the MoE scores agree.
struct HeadParams {
  Tensor w_q;  // d × d_k
  Tensor w_k;  // d × d_k
  Tensor w_v;  // d × d_v

  std::size_t d_model() const { return w_q.rows(); }
  std::size_t d_head() const { return w_v.cols(); }
  void validate() const;
};

struct MsaParams {
  std::vector<HeadParams> heads;
  Tensor w_o;  // (m·d_v) × d

  std::size_t num_heads() const { return heads.size(); }
  std::size_t d_model() const { return heads.empty() ? 0 : heads.front().d_model(); }
  void validate() const;
};

/// Prefix key/value vectors, each L × d. L = 0 is the empty prefix.
struct Prefix {
  Tensor p_k;
  Tensor p_v;

  std::size_t length() const { return p_k.rows(); }
  std::size_t dim() const { return p_k.cols(); }
  void validate() const;
  static Prefix empty(std::size_t d);
};

/// Pre-softmax score blocks of a prefix-tuned head: [A_prompt | A_pretrain].
struct AttentionScores {
  Tensor prompt;    // N × L
  Tensor pretrain;  // N × N
};

/// Maps the prompt score block to its replacement (identity when empty).
using PromptScoreTransform = std::function<Tensor(const Tensor&)>;

/// softmax_rows(Q Kᵀ / √d_k) V
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v);
/// The row-stochastic weight matrix inside sdpa.
Tensor sdpa_weights(const Tensor& q, const Tensor& k);

/// One head of plain self-attention: sdpa(X W_Q, X W_K, X W_V).
Tensor head_forward(const Tensor& x, const HeadParams& head);

/// Concat of all heads times W_O.
Tensor msa_forward(const Tensor& x, const MsaParams& params);

AttentionScores attention_matrix(const Tensor& x, const HeadParams& head, const Prefix& prefix);

/// Head output with prefix keys/values stacked in front of the sequence:
/// softmax([T(A_prompt) | A_pretrain]) · [p_V W_V ; X W_V].
Tensor prefix_head_forward(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                           const PromptScoreTransform& transform = {});

/// MSA whose keys are [p_K; X] and values [p_V; X]; queries unchanged.
Tensor prefix_attention(const Tensor& x, const MsaParams& params, const Prefix& prefix,
                        const PromptScoreTransform& transform = {});

/// Weights drawn from U[-0.5, 0.5] / √d.
HeadParams random_head(Rng& rng, std::size_t d, std::size_t d_head);
MsaParams random_msa(Rng& rng, std::size_t d, std::size_t num_heads);
Prefix random_prefix(Rng& rng, std::size_t length, std::size_t d, double half_width = 1.0);

}  // namespace pmoe
