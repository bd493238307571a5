#pragma once

#include <cstdint>
#include <iosfwd>

#include "pmoe/hide/backbone.hpp"
#include "pmoe/hide/learner.hpp"
#include "pmoe/hide/metrics.hpp"
#include "pmoe/hide/stream.hpp"

namespace pmoe::hide {

struct RunConfig {
  StreamConfig stream;
  BackboneConfig backbone;
  HideConfig hide;
  std::uint64_t seed = 0;
};

struct RunResult {
  Matrix s;         // class-incremental accuracy (%), S(i, t)
  Matrix s_oracle;  // task id given
  ClMetrics metrics;
  ClMetrics oracle_metrics;
  /// No train_task call read a training or test sample outside its own task.
  bool isolation_ok = true;
  /// e₁..e_{t−1} were bit-identical before and after each train_task.
  bool prompts_frozen_ok = true;
  double alpha = 0.0;
  double tau = 0.0;
};

/// Stream, backbone and learner seeds are derived from `seed`; the stream and
/// backbone do not depend on `hide`, so gate variants share them.
RunResult run_stream(const RunConfig& cfg);

/// Accuracy (%) on task `task`'s test split; `oracle` passes the true task id.
double task_accuracy(const HidePrompt& learner, const TaskView& view, bool oracle);

void write_scores_csv(std::ostream& os, const Matrix& s);

}  // namespace pmoe::hide
