#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "pmoe/hide/backbone.hpp"
#include "pmoe/hide/losses.hpp"
#include "pmoe/hide/stats.hpp"
#include "pmoe/hide/stream.hpp"
#include "pmoe/norga.hpp"

namespace pmoe::hide {

enum class PromptGate { Linear, Norga };

struct HideConfig {
  std::size_t prompt_length = 4;  // 0 trains only the heads on the frozen backbone
  PromptGate gate = PromptGate::Norga;
  Activation activation = Activation::Tanh;
  double alpha_init = 1.0;
  double tau_init = 1.0;
  /// Learn α and τ during the first task; they are frozen afterwards either way.
  bool learn_gate = true;
  double pe_alpha = 0.1;
  double lambda = 0.1;
  double cr_temperature = 0.8;
  /// Compare unit-normalised features and prototypes in the contrastive term.
  bool cr_normalize = true;
  double lr = 0.005;
  std::size_t batch = 128;
  std::size_t epochs = 20;
  std::size_t pseudo_per_class = 64;
  /// Passes per epoch over a fresh pseudo-feature set, in batches of `batch`.
  std::size_t tii_passes = 1;
  std::size_t tap_passes = 1;
  double prompt_init = 0.5;   // e₁ ~ U[−prompt_init, prompt_init]

  void validate() const;
};

/// Prompts, heads and class statistics of a HiDe-Prompt learner. Holds no
/// reference to any task's raw samples; each train_task call reads only the
/// view it is handed.
class HidePrompt {
 public:
  HidePrompt(Backbone backbone, HideConfig cfg, std::uint64_t seed);

  /// Algorithm for task t: uninstructed stats, prompt init and ensemble,
  /// E epochs of WTP / TII / TAP, instructed stats. Tasks must arrive in
  /// order 0, 1, 2, ...
  void train_task(const TaskView& task);

  std::size_t tasks_trained() const noexcept { return prompts_.size(); }
  std::size_t classes_seen() const noexcept { return class_task_.size(); }

  /// argmax of the task head on the uninstructed representation.
  std::size_t infer_task(const Matrix& x) const;
  /// Class-incremental prediction: inferred task's prompt, argmax over all seen classes.
  std::size_t predict(const Matrix& x) const;
  /// Task id given: that task's prompt, argmax over that task's classes.
  std::size_t predict_with_task(const Matrix& x, std::size_t task) const;

  /// e₁..e_t, frozen after their task.
  const std::vector<Prefix>& task_prompts() const noexcept { return e_; }
  /// Composed p_t used at inference for task t.
  const std::vector<Prefix>& prompts() const noexcept { return prompts_; }
  const NorgaGate* gate() const { return gate_ ? &*gate_ : nullptr; }
  const GaussianClassStats& instructed_stats() const noexcept { return stats_; }
  const GaussianClassStats& uninstructed_stats() const noexcept { return stats_hat_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  const HideConfig& config() const noexcept { return cfg_; }
  /// Mean WTP loss of each epoch of the latest task.
  const std::vector<double>& last_wtp_curve() const noexcept { return wtp_curve_; }

 private:
  Tensor features(const Matrix& x, const Prefix* prompt) const;

  Backbone backbone_;
  HideConfig cfg_;
  Rng rng_;
  std::vector<Prefix> e_;
  std::vector<Prefix> prompts_;
  std::optional<NorgaGate> gate_;
  LinearHead psi_;
  LinearHead omega_;
  GaussianClassStats stats_;
  GaussianClassStats stats_hat_;
  std::vector<std::size_t> class_task_;  // indexed by class label
  std::vector<std::size_t> task_first_class_;
  std::vector<double> wtp_curve_;
};

}  // namespace pmoe::hide
