#include "pmoe/hide/losses.hpp"

#include <algorithm>

#include "pmoe/error.hpp"

namespace pmoe::hide {

LinearHead LinearHead::create(std::size_t in, std::size_t out, Rng& rng) {
  return {Tensor(uniform_matrix(rng, in, out, -0.1, 0.1), true), Tensor(Matrix(1, out), true)};
}

void LinearHead::grow(std::size_t out, Rng& rng) {
  const std::size_t k = outputs();
  if (out <= k) return;
  const Matrix extra = uniform_matrix(rng, w.rows(), out - k, -0.1, 0.1);
  w = Tensor(concat_cols(w.value(), extra), true);
  b = Tensor(concat_cols(b.value(), Matrix(1, out - k)), true);
}

Tensor LinearHead::forward(const Tensor& x, std::size_t k) const {
  if (k == 0 || k > outputs()) throw DimensionError("head: requested " + std::to_string(k) + " of " +
                                                    std::to_string(outputs()) + " outputs");
  const Tensor all = add_row(matmul(x, w), b);
  return k == outputs() ? all : slice_cols(all, 0, k);
}

Tensor contrastive_loss(const Tensor& h, const Matrix& prototypes, double temperature) {
  if (h.rows() == 0) throw ContractError("contrastive_loss: empty batch");
  if (prototypes.rows() == 0) return Tensor::scalar(0.0);
  const std::size_t b = h.rows();
  const Tensor mu(transpose(prototypes));
  const double inv = 1.0 / temperature;
  const Tensor scores = scale(concat_cols(matmul(h, transpose(h)), matmul(h, mu)), inv);
  return sum(slice_cols(log_softmax_rows(scores), b, b + prototypes.rows()));
}

Tensor wtp_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& features,
                const Matrix& prototypes, double lambda, double temperature, bool normalize) {
  if (labels.empty()) throw ContractError("wtp_loss: empty batch");
  const Tensor ce = cross_entropy(logits, labels);
  if (lambda == 0.0 || prototypes.rows() == 0) return ce;
  const double k = lambda / static_cast<double>(labels.size());
  if (!normalize) return ce + scale(contrastive_loss(features, prototypes, temperature), k);
  const Matrix mu = normalize_rows(Tensor(prototypes)).value();
  return ce + scale(contrastive_loss(normalize_rows(features), mu, temperature), k);
}

PseudoSet sample_pseudo(const GaussianClassStats& stats, std::size_t per_class, Rng& rng) {
  if (stats.empty()) throw ContractError("pseudo sampling: no class statistics yet");
  if (per_class == 0) throw ConfigError("pseudo sampling: per_class must be positive");
  const auto labels = stats.labels();
  const std::size_t d = stats.at(labels.front()).mean.size();
  PseudoSet set;
  set.features = Matrix(labels.size() * per_class, d);
  std::size_t row = 0;
  for (std::size_t label : labels) {
    const Matrix m = stats.sample(label, per_class, rng);
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t k = 0; k < d; ++k) set.features(row, k) = m(i, k);
      set.labels.push_back(label);
      set.tasks.push_back(stats.at(label).task);
    }
  }
  return set;
}

std::vector<PseudoSet> split_batches(const PseudoSet& set, std::size_t batch, Rng& rng) {
  if (batch == 0) throw ConfigError("split_batches: batch must be positive");
  const std::size_t n = set.labels.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<PseudoSet> out;
  const std::size_t d = set.features.cols();
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    PseudoSet part;
    part.features = Matrix(e - b, d);
    for (std::size_t k = b; k < e; ++k) {
      const auto src = set.features.row(order[k]);
      std::copy(src.begin(), src.end(), part.features.row(k - b).begin());
      part.labels.push_back(set.labels[order[k]]);
      part.tasks.push_back(set.tasks[order[k]]);
    }
    out.push_back(std::move(part));
  }
  return out;
}

Tensor tii_loss(const LinearHead& omega, std::size_t tasks_seen, const PseudoSet& set) {
  if (set.tasks.empty()) throw ContractError("tii_loss: empty pseudo set");
  return cross_entropy(omega.forward(Tensor(set.features), tasks_seen), set.tasks);
}

Tensor tap_loss(const LinearHead& psi, std::size_t classes_seen, const PseudoSet& set) {
  if (set.labels.empty()) throw ContractError("tap_loss: empty pseudo set");
  return cross_entropy(psi.forward(Tensor(set.features), classes_seen), set.labels);
}

}  // namespace pmoe::hide
