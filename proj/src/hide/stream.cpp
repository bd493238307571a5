#include "pmoe/hide/stream.hpp"

#include <algorithm>
#include <stdexcept>

#include "pmoe/error.hpp"
#include "pmoe/rng.hpp"

namespace pmoe::hide {

void StreamConfig::validate() const {
  if (tasks == 0 || classes_per_task == 0) throw ConfigError("stream: need at least one task and class");
  if (train_per_class == 0 || test_per_class == 0) throw ConfigError("stream: empty splits");
  if (seq_len < 2) throw ConfigError("stream: seq_len must be at least 2");
  if (dim == 0) throw ConfigError("stream: dim must be positive");
  if (base_classes < 2) throw ConfigError("stream: base task needs at least two classes");
  if (!(noise >= 0.0)) throw ConfigError("stream: noise must be non-negative");
}

bool AccessLog::touched(std::size_t task, Split split) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const AccessRecord& r) { return r.task == task && r.split == split; });
}

const Sample& TaskView::train(std::size_t i) const {
  const Sample& s = data_->train.at(i);
  log_->record(data_->task, Split::Train, i);
  return s;
}

const Sample& TaskView::test(std::size_t i) const {
  const Sample& s = data_->test.at(i);
  log_->record(data_->task, Split::Test, i);
  return s;
}

namespace {

Matrix class_offset(Rng& rng, const StreamConfig& cfg) {
  Matrix o = normal_matrix(rng, cfg.seq_len, cfg.dim, cfg.class_scale);
  for (std::size_t c = 0; c < cfg.dim; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < cfg.seq_len; ++r) m += o(r, c);
    m /= static_cast<double>(cfg.seq_len);
    for (std::size_t r = 0; r < cfg.seq_len; ++r) o(r, c) -= m;
  }
  return o;
}

void fill(TaskData& task, Rng& rng, const StreamConfig& cfg, std::size_t first_label,
          std::size_t num_classes) {
  const Matrix mean = normal_matrix(rng, cfg.seq_len, cfg.dim, cfg.task_scale);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const std::size_t label = first_label + k;
    task.classes.push_back(label);
    const Matrix offset = class_offset(rng, cfg);
    auto draw = [&](std::size_t count, std::vector<Sample>& out) {
      for (std::size_t i = 0; i < count; ++i) {
        Matrix x = normal_matrix(rng, cfg.seq_len, cfg.dim, cfg.noise);
        for (std::size_t r = 0; r < cfg.seq_len; ++r)
          for (std::size_t c = 0; c < cfg.dim; ++c) x(r, c) += mean(r, c) + offset(r, c);
        out.push_back({std::move(x), label});
      }
    };
    draw(cfg.train_per_class, task.train);
    draw(cfg.test_per_class, task.test);
  }
}

}  // namespace

TaskStream TaskStream::generate(const StreamConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TaskStream s;
  s.cfg_ = cfg;
  Rng rng(seed);
  Rng base_rng = rng.split();
  s.base_.task = cfg.tasks;
  fill(s.base_, base_rng, cfg, 0, cfg.base_classes);
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    Rng task_rng = rng.split();
    TaskData d;
    d.task = t;
    fill(d, task_rng, cfg, t * cfg.classes_per_task, cfg.classes_per_task);
    s.tasks_.push_back(std::move(d));
  }
  return s;
}

}  // namespace pmoe::hide
