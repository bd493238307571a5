#include "pmoe/moe_view.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pmoe/error.hpp"

namespace pmoe {

namespace {

Matrix bilinear_core(const HeadParams& head) {
  head.validate();
  return matmul(head.w_q.value(), transpose(head.w_k.value()));
}

// xᵀ H y
double bilinear(std::span<const double> x, const Matrix& h, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t a = 0; a < h.rows(); ++a) {
    double hy = 0.0;
    for (std::size_t b = 0; b < h.cols(); ++b) hy += h(a, b) * y[b];
    acc += x[a] * hy;
  }
  return acc;
}

// W_Vᵀ v
std::vector<double> project_value(const Matrix& w_v, std::span<const double> v) {
  std::vector<double> out(w_v.cols(), 0.0);
  for (std::size_t a = 0; a < w_v.rows(); ++a)
    for (std::size_t c = 0; c < w_v.cols(); ++c) out[c] += w_v(a, c) * v[a];
  return out;
}

void check_row(std::size_t i, std::size_t n) {
  if (i >= n) {
    throw std::out_of_range("row index " + std::to_string(i) + " out of range for N=" +
                            std::to_string(n));
  }
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& scores) {
  std::vector<double> w(scores.size());
  if (scores.empty()) return w;
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("softmax: non-finite score");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    w[k] = std::exp(scores[k] - mx);
    z += w[k];
  }
  for (double& v : w) v /= z;
  return w;
}

PretrainedMoeHead::PretrainedMoeHead(const Matrix& x, const HeadParams& head)
    : x_(x),
      h_(bilinear_core(head)),
      w_v_(head.w_v.value()),
      inv_sqrt_dv_(1.0 / std::sqrt(static_cast<double>(head.d_head()))) {
  if (x.cols() != head.d_model()) {
    throw DimensionError("input " + x.shape_string() + " does not match d=" +
                         std::to_string(head.d_model()));
  }
}

std::vector<double> PretrainedMoeHead::expert(std::size_t j) const {
  check_row(j, num_experts());
  return project_value(w_v_, x_.row(j));
}

double PretrainedMoeHead::score(std::size_t i, std::size_t j) const {
  check_row(i, num_experts());
  check_row(j, num_experts());
  return bilinear(x_.row(i), h_, x_.row(j)) * inv_sqrt_dv_;
}

PrefixExpertSet::PrefixExpertSet(const Matrix& x, const HeadParams& head, const Prefix& prefix)
    : x_(x),
      h_(bilinear_core(head)),
      w_v_(head.w_v.value()),
      p_k_(prefix.p_k.value()),
      p_v_(prefix.p_v.value()),
      inv_sqrt_dv_(1.0 / std::sqrt(static_cast<double>(head.d_head()))) {
  prefix.validate();
  if (prefix.dim() != head.d_model()) {
    throw ConfigError("prefix dimension " + std::to_string(prefix.dim()) +
                      " does not match model dimension " + std::to_string(head.d_model()));
  }
}

std::vector<double> PrefixExpertSet::expert(std::size_t j) const {
  check_row(j, num_experts());
  return project_value(w_v_, p_v_.row(j));
}

double PrefixExpertSet::score(std::size_t i, std::size_t j) const {
  check_row(i, x_.rows());
  check_row(j, num_experts());
  return bilinear(x_.row(i), h_, p_k_.row(j)) * inv_sqrt_dv_;
}

std::vector<double> moe_head_row(const Matrix& x, const HeadParams& head, std::size_t i) {
  const PretrainedMoeHead moe(x, head);
  check_row(i, moe.num_experts());
  std::vector<double> scores(moe.num_experts());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = moe.score(i, j);
  const auto w = softmax(scores);
  std::vector<double> out(moe.d_v(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const auto f = moe.expert(j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[j] * f[c];
  }
  return out;
}

std::vector<double> gate_weights(const Matrix& x, const HeadParams& head, const Prefix& prefix,
                                 std::size_t i, const ScoreMap& prefix_map) {
  const PretrainedMoeHead moe(x, head);
  const PrefixExpertSet pre(x, head, prefix);
  check_row(i, moe.num_experts());
  std::vector<double> scores;
  scores.reserve(moe.num_experts() + pre.num_experts());
  for (std::size_t j = 0; j < moe.num_experts(); ++j) scores.push_back(moe.score(i, j));
  for (std::size_t j = 0; j < pre.num_experts(); ++j) {
    const double s = pre.score(i, j);
    scores.push_back(prefix_map ? prefix_map(s) : s);
  }
  return softmax(scores);
}

std::vector<double> prefix_moe_head_row(const Matrix& x, const HeadParams& head,
                                        const Prefix& prefix, std::size_t i,
                                        const ScoreMap& prefix_map) {
  const PretrainedMoeHead moe(x, head);
  const PrefixExpertSet pre(x, head, prefix);
  const auto w = gate_weights(x, head, prefix, i, prefix_map);
  std::vector<double> out(moe.d_v(), 0.0);
  const std::size_t n = moe.num_experts();
  for (std::size_t j = 0; j < w.size(); ++j) {
    const auto f = j < n ? moe.expert(j) : pre.expert(j - n);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w[j] * f[c];
  }
  return out;
}

}  // namespace pmoe
