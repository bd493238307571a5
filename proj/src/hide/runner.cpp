#include "pmoe/hide/runner.hpp"

#include <limits>
#include <ostream>

#include "pmoe/rng.hpp"

namespace pmoe::hide {

double task_accuracy(const HidePrompt& learner, const TaskView& view, bool oracle) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < view.test_size(); ++i) {
    const Sample& s = view.test(i);
    const std::size_t y = oracle ? learner.predict_with_task(s.x, view.task()) : learner.predict(s.x);
    hits += y == s.label ? 1 : 0;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(view.test_size());
}

namespace {

bool same_bits(const Matrix& a, const Matrix& b) { return a.rows() == b.rows() && a.data() == b.data(); }

}  // namespace

RunResult run_stream(const RunConfig& cfg) {
  TaskStream stream = TaskStream::generate(cfg.stream, splitmix64_mix(cfg.seed + 1));
  const Backbone backbone =
      Backbone::pretrain(stream.base(), cfg.stream.base_classes, cfg.backbone, splitmix64_mix(cfg.seed + 2));
  HidePrompt learner(backbone, cfg.hide, splitmix64_mix(cfg.seed + 3));

  const std::size_t n = stream.size();
  RunResult res;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  res.s = Matrix(n, n, nan);
  res.s_oracle = Matrix(n, n, nan);
  for (std::size_t t = 0; t < n; ++t) {
    const std::vector<Prefix> before = learner.task_prompts();
    stream.log().clear();
    learner.train_task(stream.view(t));
    for (const auto& r : stream.log().entries())
      if (r.task != t || r.split != Split::Train) res.isolation_ok = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
      const Prefix& now = learner.task_prompts()[i];
      if (!same_bits(before[i].p_k.value(), now.p_k.value()) || !same_bits(before[i].p_v.value(), now.p_v.value()))
        res.prompts_frozen_ok = false;
    }
    for (std::size_t i = 0; i <= t; ++i) {
      res.s(i, t) = task_accuracy(learner, stream.view(i), false);
      res.s_oracle(i, t) = task_accuracy(learner, stream.view(i), true);
    }
  }
  res.metrics = cl_metrics(res.s);
  res.oracle_metrics = cl_metrics(res.s_oracle);
  if (const NorgaGate* g = learner.gate()) {
    res.alpha = g->alpha_value();
    res.tau = g->tau_value();
  }
  return res;
}

void write_scores_csv(std::ostream& os, const Matrix& s) {
  os << "i,t,accuracy\n";
  for (std::size_t t = 0; t < s.cols(); ++t)
    for (std::size_t i = 0; i <= t && i < s.rows(); ++i) os << i + 1 << ',' << t + 1 << ',' << s(i, t) << '\n';
}

}  // namespace pmoe::hide
