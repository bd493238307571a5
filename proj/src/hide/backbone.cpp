#include "pmoe/hide/backbone.hpp"

#include <numeric>

#include "pmoe/adam.hpp"
#include "pmoe/error.hpp"

namespace pmoe::hide {

namespace {

MsaParams frozen_copy(const MsaParams& p) {
  MsaParams out;
  for (const auto& h : p.heads) out.heads.push_back({h.w_q.detach(), h.w_k.detach(), h.w_v.detach()});
  out.w_o = p.w_o.detach();
  return out;
}

}  // namespace

Backbone::Backbone(MsaParams msa) : msa_(frozen_copy(msa)) { msa_.validate(); }

Tensor Backbone::encode(const Tensor& x) const { return mean_rows(x + msa_forward(x, msa_)); }

Tensor Backbone::encode(const Tensor& x, const Prefix& prompt, const NorgaGate* gate) const {
  if (prompt.length() == 0) return encode(x);
  PromptScoreTransform t;
  if (gate != nullptr) t = [gate](const Tensor& a) { return norga_transform(a, *gate); };
  return mean_rows(x + prefix_attention(x, msa_, prompt, t));
}

Backbone Backbone::pretrain(const TaskData& base, std::size_t num_classes, const BackboneConfig& cfg,
                            std::uint64_t seed) {
  if (base.train.empty()) throw ConfigError("backbone: empty pretraining set");
  if (cfg.batch == 0) throw ConfigError("backbone: batch must be positive");
  const std::size_t d = base.train.front().x.cols();
  Rng rng(seed);
  MsaParams msa = random_msa(rng, d, cfg.heads);
  std::vector<Tensor> params;
  for (auto& h : msa.heads)
    for (Tensor* w : {&h.w_q, &h.w_k, &h.w_v}) {
      w->set_requires_grad(true);
      params.push_back(*w);
    }
  msa.w_o.set_requires_grad(true);
  params.push_back(msa.w_o);
  Tensor head(uniform_matrix(rng, d, num_classes, -0.1, 0.1), true);
  Tensor bias(Matrix(1, num_classes), true);
  params.push_back(head);
  params.push_back(bias);
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam opt(params, ac);

  std::vector<std::size_t> order(base.train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      const std::size_t e = std::min(order.size(), b + cfg.batch);
      std::vector<Tensor> feats;
      std::vector<std::size_t> labels;
      for (std::size_t k = b; k < e; ++k) {
        const Sample& s = base.train[order[k]];
        const Tensor x(s.x);
        feats.push_back(mean_rows(x + msa_forward(x, msa)));
        labels.push_back(s.label);
      }
      const Tensor f = concat_rows(std::span<const Tensor>(feats));
      const Tensor loss = cross_entropy(add_row(matmul(f, head), bias), labels);
      backward(loss);
      opt.step();
    }
  }
  return Backbone(msa);
}

}  // namespace pmoe::hide
