#include "pmoe/norga.hpp"

#include <cmath>

#include "pmoe/error.hpp"
#include "pmoe/moe_view.hpp"

namespace pmoe {

NorgaGate NorgaGate::learnable(Activation act, double alpha, double tau) {
  return {Tensor::scalar(alpha, true), Tensor::scalar(tau, true), act, false};
}

NorgaGate NorgaGate::fixed(Activation act, double alpha, double tau) {
  return {Tensor::scalar(alpha, false), Tensor::scalar(tau, false), act, true};
}

void NorgaGate::freeze() {
  frozen = true;
  // Fresh leaves so graphs built from here on never reach the old scalars.
  alpha = alpha.detach();
  tau = tau.detach();
}

std::vector<Tensor> NorgaGate::trainable() const {
  if (frozen) return {};
  return {alpha, tau};
}

double norga_score(double s, const NorgaGate& gate) {
  if (!std::isfinite(s)) throw NumericError("norga_score: non-finite score");
  return s + gate.alpha_value() * activate(gate.activation, gate.tau_value() * s);
}

Tensor norga_transform(const Tensor& scores, const NorgaGate& gate) {
  if (!scores.value().all_finite()) throw NumericError("norga_transform: non-finite scores");
  return add(scores, mul_scalar(gate.alpha, activation(mul_scalar(gate.tau, scores), gate.activation)));
}

AttentionScores norga_attention_matrix(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                                       const NorgaGate& gate) {
  AttentionScores a = attention_matrix(x, head, prefix);
  return {norga_transform(a.prompt, gate), a.pretrain};
}

Tensor norga_attention(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                       const NorgaGate& gate) {
  return prefix_head_forward(x, head, prefix,
                             [&gate](const Tensor& a) { return norga_transform(a, gate); });
}

Tensor norga_msa(const Tensor& x, const MsaParams& params, const Prefix& prefix,
                 const NorgaGate& gate) {
  return prefix_attention(x, params, prefix,
                          [&gate](const Tensor& a) { return norga_transform(a, gate); });
}

std::vector<double> norga_moe_row(const Matrix& x, const HeadParams& head, const Prefix& prefix,
                                  const NorgaGate& gate, std::size_t i) {
  return prefix_moe_head_row(x, head, prefix, i,
                             [&gate](double s) { return norga_score(s, gate); });
}

}  // namespace pmoe
