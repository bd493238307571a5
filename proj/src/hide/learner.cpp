#include "pmoe/hide/learner.hpp"

#include <algorithm>
#include <numeric>

#include "pmoe/adam.hpp"
#include "pmoe/error.hpp"

namespace pmoe::hide {

void HideConfig::validate() const {
  if (batch == 0 || epochs == 0) throw ConfigError("hide: batch and epochs must be positive");
  if (pseudo_per_class == 0) throw ConfigError("hide: pseudo_per_class must be positive");
  if (!(pe_alpha >= 0.0 && pe_alpha <= 1.0)) throw ConfigError("hide: pe_alpha must lie in [0, 1]");
  if (!(cr_temperature > 0.0)) throw ConfigError("hide: cr_temperature must be positive");
  if (!(lr > 0.0)) throw ConfigError("hide: lr must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("hide: lambda must be non-negative");
}

namespace {

Prefix detached(const Prefix& p) { return {p.p_k.detach(), p.p_v.detach()}; }

std::size_t argmax_row(const Matrix& m) {
  const auto r = m.row(0);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

Matrix rows_to_matrix(const std::vector<double>& flat, std::size_t d) {
  return Matrix(flat.size() / d, d, flat);
}

}  // namespace

HidePrompt::HidePrompt(Backbone backbone, HideConfig cfg, std::uint64_t seed)
    : backbone_(std::move(backbone)), cfg_(cfg), rng_(seed) {
  cfg_.validate();
}

Tensor HidePrompt::features(const Matrix& x, const Prefix* prompt) const {
  const Tensor tx(x);
  if (prompt == nullptr || prompt->length() == 0) return backbone_.encode(tx);
  return backbone_.encode(tx, *prompt, gate());
}

void HidePrompt::train_task(const TaskView& task) {
  const std::size_t t = tasks_trained();
  if (task.task() != t) {
    throw ProtocolError("train_task: expected task " + std::to_string(t) + ", got task " +
                        std::to_string(task.task()));
  }
  const std::size_t first = classes_seen();
  const auto& classes = task.classes();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k] != first + k) throw ConfigError("train_task: class labels must continue from " + std::to_string(first));
  }
  if (task.train_size() == 0) throw ContractError("train_task: empty training set");
  const std::size_t d = backbone_.dim();
  const std::size_t seen = first + classes.size();
  const std::size_t len = cfg_.prompt_length;

  // Uninstructed statistics of the new classes.
  std::vector<std::vector<double>> per_class(classes.size());
  for (std::size_t i = 0; i < task.train_size(); ++i) {
    const Sample& s = task.train(i);
    const Matrix f = features(s.x, nullptr).value();
    auto& dst = per_class.at(s.label - first);
    dst.insert(dst.end(), f.data().begin(), f.data().end());
  }
  for (std::size_t k = 0; k < classes.size(); ++k) {
    stats_hat_.fit(classes[k], t, rows_to_matrix(per_class[k], d));
    class_task_.push_back(t);
  }
  task_first_class_.push_back(first);

  // e_t ← e_{t−1}; p_t = pe_alpha·Σ_{i<t} e_i + (1 − pe_alpha)·e_t.
  Prefix e_t;
  if (t == 0) {
    e_t = random_prefix(rng_, len, d, cfg_.prompt_init);
  } else {
    e_t = detached(e_.back());
  }
  e_t.p_k.set_requires_grad(len > 0);
  e_t.p_v.set_requires_grad(len > 0);
  Matrix past_k(len, d), past_v(len, d);
  for (const auto& e : e_) {
    for (std::size_t k = 0; k < past_k.data().size(); ++k) {
      past_k.data()[k] += e.p_k.value().data()[k];
      past_v.data()[k] += e.p_v.value().data()[k];
    }
  }
  for (double& v : past_k.data()) v *= cfg_.pe_alpha;
  for (double& v : past_v.data()) v *= cfg_.pe_alpha;
  const Tensor past_kt(past_k), past_vt(past_v);
  auto compose = [&]() -> Prefix {
    if (t == 0) return e_t;
    return {past_kt + scale(e_t.p_k, 1.0 - cfg_.pe_alpha), past_vt + scale(e_t.p_v, 1.0 - cfg_.pe_alpha)};
  };

  if (t == 0 && cfg_.gate == PromptGate::Norga && len > 0) {
    gate_ = cfg_.learn_gate ? NorgaGate::learnable(cfg_.activation, cfg_.alpha_init, cfg_.tau_init)
                            : NorgaGate::fixed(cfg_.activation, cfg_.alpha_init, cfg_.tau_init);
  }
  if (t == 0) {
    psi_ = LinearHead::create(d, seen, rng_);
    omega_ = LinearHead::create(d, 1, rng_);
  } else {
    psi_.grow(seen, rng_);
    omega_.grow(t + 1, rng_);
  }

  std::vector<Tensor> wtp_params = psi_.params();
  if (len > 0) {
    wtp_params.push_back(e_t.p_k);
    wtp_params.push_back(e_t.p_v);
  }
  if (gate_)
    for (const auto& g : gate_->trainable()) wtp_params.push_back(g);
  AdamConfig ac;
  ac.lr = cfg_.lr;
  Adam wtp_opt(wtp_params, ac);
  Adam tii_opt(omega_.params(), ac);
  Adam tap_opt(psi_.params(), ac);

  Matrix prototypes(stats_.size(), d);
  {
    std::size_t r = 0;
    for (std::size_t label : stats_.labels()) {
      const auto& mu = stats_.at(label).mean;
      std::copy(mu.begin(), mu.end(), prototypes.row(r++).begin());
    }
  }

  std::vector<std::size_t> order(task.train_size());
  std::iota(order.begin(), order.end(), 0);
  wtp_curve_.clear();
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
    for (auto& v : per_class) v.clear();
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
      const std::size_t end = std::min(order.size(), b + cfg_.batch);
      const Prefix p = compose();
      std::vector<Tensor> feats;
      std::vector<std::size_t> local;
      for (std::size_t k = b; k < end; ++k) {
        const Sample& s = task.train(order[k]);
        feats.push_back(features(s.x, &p));
        local.push_back(s.label - first);
      }
      const Tensor f = concat_rows(std::span<const Tensor>(feats));
      const Tensor logits = slice_cols(psi_.forward(f, seen), first, seen);
      const Tensor loss = wtp_loss(logits, local, f, prototypes, cfg_.lambda, cfg_.cr_temperature, cfg_.cr_normalize);
      backward(loss);
      wtp_opt.step();
      loss_sum += loss.item();
      ++batches;
      for (std::size_t k = 0; k < local.size(); ++k) {
        const auto r = f.value().row(k);
        per_class[local[k]].insert(per_class[local[k]].end(), r.begin(), r.end());
      }
    }
    wtp_curve_.push_back(loss_sum / static_cast<double>(batches));

    for (std::size_t s = 0; s < cfg_.tii_passes; ++s) {
      const PseudoSet set = sample_pseudo(stats_hat_, cfg_.pseudo_per_class, rng_);
      for (const auto& part : split_batches(set, cfg_.batch, rng_)) {
        backward(tii_loss(omega_, t + 1, part));
        tii_opt.step();
      }
    }
    // Current classes use this epoch's instructed features; past classes their stored stats.
    GaussianClassStats tap_stats = stats_;
    for (std::size_t k = 0; k < classes.size(); ++k)
      tap_stats.fit(classes[k], t, rows_to_matrix(per_class[k], d));
    for (std::size_t s = 0; s < cfg_.tap_passes; ++s) {
      const PseudoSet set = sample_pseudo(tap_stats, cfg_.pseudo_per_class, rng_);
      for (const auto& part : split_batches(set, cfg_.batch, rng_)) {
        backward(tap_loss(psi_, seen, part));
        tap_opt.step();
      }
    }
  }

  // Instructed statistics with the final prompt.
  if (gate_ && t == 0) gate_->freeze();
  const Prefix final_prompt = detached(compose());
  for (auto& v : per_class) v.clear();
  for (std::size_t i = 0; i < task.train_size(); ++i) {
    const Sample& s = task.train(i);
    const Matrix f = features(s.x, &final_prompt).value();
    auto& dst = per_class[s.label - first];
    dst.insert(dst.end(), f.data().begin(), f.data().end());
  }
  for (std::size_t k = 0; k < classes.size(); ++k) stats_.fit(classes[k], t, rows_to_matrix(per_class[k], d));

  e_.push_back(detached(e_t));
  prompts_.push_back(final_prompt);
}

std::size_t HidePrompt::infer_task(const Matrix& x) const {
  if (tasks_trained() == 0) throw ContractError("predict: no task trained yet");
  return argmax_row(omega_.forward(features(x, nullptr), tasks_trained()).value());
}

std::size_t HidePrompt::predict(const Matrix& x) const {
  const std::size_t k = infer_task(x);
  return argmax_row(psi_.forward(features(x, &prompts_[k]), classes_seen()).value());
}

std::size_t HidePrompt::predict_with_task(const Matrix& x, std::size_t task) const {
  if (task >= tasks_trained()) throw ContractError("predict: task " + std::to_string(task) + " not trained");
  const std::size_t lo = task_first_class_[task];
  const std::size_t hi = task + 1 < task_first_class_.size() ? task_first_class_[task + 1] : classes_seen();
  const Matrix logits = psi_.forward(features(x, &prompts_[task]), classes_seen()).value();
  const auto r = logits.row(0);
  return lo + static_cast<std::size_t>(std::max_element(r.begin() + static_cast<std::ptrdiff_t>(lo),
                                                        r.begin() + static_cast<std::ptrdiff_t>(hi)) -
                                       (r.begin() + static_cast<std::ptrdiff_t>(lo)));
}

}  // namespace pmoe::hide
