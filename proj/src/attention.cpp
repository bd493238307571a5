#include "pmoe/attention.hpp"

#include <cmath>
#include <string>

#include "pmoe/error.hpp"

namespace pmoe {

void HeadParams::validate() const {
  const auto d = w_q.rows();
  if (w_k.rows() != d || w_v.rows() != d) {
    throw DimensionError("head projections disagree on d: W_Q " + w_q.value().shape_string() +
                         ", W_K " + w_k.value().shape_string() + ", W_V " +
                         w_v.value().shape_string());
  }
  if (w_q.cols() != w_k.cols()) {
    throw DimensionError("W_Q " + w_q.value().shape_string() + " and W_K " +
                         w_k.value().shape_string() + " must share d_k");
  }
  if (w_q.cols() != w_v.cols()) {
    throw ConfigError("d_k (" + std::to_string(w_q.cols()) + ") must equal d_v (" +
                      std::to_string(w_v.cols()) + ")");
  }
  if (w_q.cols() == 0) throw ConfigError("d_k must be positive");
}

void MsaParams::validate() const {
  if (heads.empty()) throw ConfigError("MSA needs at least one head");
  const auto d = heads.front().d_model();
  const auto dh = heads.front().d_head();
  for (const auto& h : heads) {
    h.validate();
    if (h.d_model() != d || h.d_head() != dh) throw ConfigError("all heads must share d and d_v");
  }
  if (dh * heads.size() != d) {
    throw ConfigError("d=" + std::to_string(d) + " is not m·d_v with m=" +
                      std::to_string(heads.size()) + ", d_v=" + std::to_string(dh));
  }
  if (w_o.rows() != heads.size() * dh || w_o.cols() != d) {
    throw DimensionError("W_O must be " + std::to_string(heads.size() * dh) + "x" +
                         std::to_string(d) + ", got " + w_o.value().shape_string());
  }
}

void Prefix::validate() const {
  if (p_k.rows() != p_v.rows() || p_k.cols() != p_v.cols()) {
    throw ConfigError("prefix keys " + p_k.value().shape_string() + " and values " +
                      p_v.value().shape_string() + " differ in shape");
  }
}

Prefix Prefix::empty(std::size_t d) { return {Tensor(Matrix(0, d)), Tensor(Matrix(0, d))}; }

Tensor sdpa_weights(const Tensor& q, const Tensor& k) {
  if (q.cols() != k.cols()) {
    throw DimensionError("sdpa: Q " + q.value().shape_string() + " and K " +
                         k.value().shape_string() + " differ in d_k");
  }
  if (q.cols() == 0) throw DimensionError("sdpa: d_k must be positive");
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(scale(matmul(q, transpose(k)), inv));
}

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (k.rows() != v.rows()) {
    throw DimensionError("sdpa: K " + k.value().shape_string() + " and V " +
                         v.value().shape_string() + " differ in N");
  }
  return matmul(sdpa_weights(q, k), v);
}

Tensor head_forward(const Tensor& x, const HeadParams& head) {
  head.validate();
  if (x.cols() != head.d_model()) {
    throw DimensionError("input " + x.value().shape_string() + " does not match d=" +
                         std::to_string(head.d_model()));
  }
  return sdpa(matmul(x, head.w_q), matmul(x, head.w_k), matmul(x, head.w_v));
}

Tensor msa_forward(const Tensor& x, const MsaParams& params) {
  params.validate();
  std::vector<Tensor> outs;
  outs.reserve(params.num_heads());
  for (const auto& h : params.heads) outs.push_back(head_forward(x, h));
  return matmul(concat_cols(outs), params.w_o);
}

namespace {
void check_prefix(const Tensor& x, const HeadParams& head, const Prefix& prefix) {
  head.validate();
  prefix.validate();
  if (x.cols() != head.d_model()) {
    throw DimensionError("input " + x.value().shape_string() + " does not match d=" +
                         std::to_string(head.d_model()));
  }
  if (prefix.dim() != head.d_model()) {
    throw ConfigError("prefix dimension " + std::to_string(prefix.dim()) +
                      " does not match model dimension " + std::to_string(head.d_model()));
  }
}
}  // namespace

AttentionScores attention_matrix(const Tensor& x, const HeadParams& head, const Prefix& prefix) {
  check_prefix(x, head, prefix);
  const double inv = 1.0 / std::sqrt(static_cast<double>(head.d_head()));
  const Tensor q = matmul(x, head.w_q);
  const Tensor keys_prompt = matmul(prefix.p_k, head.w_k);
  const Tensor keys_seq = matmul(x, head.w_k);
  return {scale(matmul(q, transpose(keys_prompt)), inv), scale(matmul(q, transpose(keys_seq)), inv)};
}

Tensor prefix_head_forward(const Tensor& x, const HeadParams& head, const Prefix& prefix,
                           const PromptScoreTransform& transform) {
  AttentionScores a = attention_matrix(x, head, prefix);
  const Tensor prompt = (transform && prefix.length() > 0) ? transform(a.prompt) : a.prompt;
  const Tensor weights = softmax_rows(concat_cols(prompt, a.pretrain));
  const Tensor values = concat_rows(matmul(prefix.p_v, head.w_v), matmul(x, head.w_v));
  return matmul(weights, values);
}

Tensor prefix_attention(const Tensor& x, const MsaParams& params, const Prefix& prefix,
                        const PromptScoreTransform& transform) {
  params.validate();
  std::vector<Tensor> outs;
  outs.reserve(params.num_heads());
  for (const auto& h : params.heads) outs.push_back(prefix_head_forward(x, h, prefix, transform));
  return matmul(concat_cols(outs), params.w_o);
}

HeadParams random_head(Rng& rng, std::size_t d, std::size_t d_head) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  auto draw = [&] {
    Matrix m = uniform_matrix(rng, d, d_head, -0.5, 0.5);
    for (double& v : m.data()) v *= s;
    return Tensor(std::move(m));
  };
  HeadParams h;
  h.w_q = draw();
  h.w_k = draw();
  h.w_v = draw();
  return h;
}

MsaParams random_msa(Rng& rng, std::size_t d, std::size_t num_heads) {
  if (num_heads == 0 || d % num_heads != 0) {
    throw ConfigError("d=" + std::to_string(d) + " is not divisible by m=" +
                      std::to_string(num_heads));
  }
  const std::size_t dh = d / num_heads;
  MsaParams p;
  for (std::size_t i = 0; i < num_heads; ++i) p.heads.push_back(random_head(rng, d, dh));
  Matrix wo = uniform_matrix(rng, d, d, -0.5, 0.5);
  for (double& v : wo.data()) v /= std::sqrt(static_cast<double>(d));
  p.w_o = Tensor(std::move(wo));
  return p;
}

Prefix random_prefix(Rng& rng, std::size_t length, std::size_t d, double half_width) {
  return {Tensor(uniform_matrix(rng, length, d, -half_width, half_width)),
          Tensor(uniform_matrix(rng, length, d, -half_width, half_width))};
}

}  // namespace pmoe
