#pragma once

#include <cstddef>
#include <vector>

#include "pmoe/attention.hpp"
#include "pmoe/matrix.hpp"
#include "pmoe/tensor.hpp"

namespace pmoe {

/// Non-linear residual gate on prefix scores: ŝ = s + α·σ(τ·s).
/// One gate is shared by every head and row of a layer. A frozen gate keeps
/// α and τ out of the autodiff graph.
struct NorgaGate {
  Tensor alpha;
  Tensor tau;
  Activation activation = Activation::Tanh;
  bool frozen = false;

  /// Number of scalars a gate adds on top of the prefix parameters.
  static constexpr std::size_t kScalarCount = 2;

  static NorgaGate learnable(Activation act, double alpha = 1.0, double tau = 1.0);
  static NorgaGate fixed(Activation act, double alpha = 1.0, double tau = 1.0);

  double alpha_value() const { return alpha.item(); }
  double tau_value() const { return tau.item(); }

  void freeze();
  std::vector<Tensor> trainable() const;
};

double norga_score(double s, const NorgaGate& gate);

/// Elementwise A + α·σ(τ·A), differentiable in A, α and τ.
Tensor norga_transform(const Tensor& scores, const NorgaGate& gate);

/// [Â_prompt | Â_pretrain]: the gate applied to the prompt block only.
AttentionScores norga_attention_matrix(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                                       const NorgaGate& gate);

/// Head output with the prompt block of the attention matrix gated and the
/// pretrain block left as is.
Tensor norga_attention(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                       const NorgaGate& gate);

Tensor norga_msa(const Tensor& x, const MsaParams& params, const Prefix& prefix,
                 const NorgaGate& gate);

/// Row i through the MoE view with gated prefix scores.
std::vector<double> norga_moe_row(const Matrix& x, const HeadParams& head, const Prefix& prefix,
                                  const NorgaGate& gate, std::size_t i);

/// Gate scalars added to a prefix-tuned model with `gated_layers` layers.
constexpr std::size_t norga_extra_parameters(std::size_t gated_layers) {
  return gated_layers * NorgaGate::kScalarCount;
}

}  // namespace pmoe
