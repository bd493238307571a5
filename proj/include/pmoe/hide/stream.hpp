#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pmoe/matrix.hpp"

namespace pmoe::hide {

struct Sample {
  Matrix x;  // N_seq × d tokens
  std::size_t label = 0;
};

struct TaskData {
  std::size_t task = 0;
  std::vector<std::size_t> classes;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Each class is a Gaussian cluster in token space. Tokens of a sample are
/// task mean + class offset + noise; the class offsets sum to zero over the
/// token axis, so mean pooling the raw tokens keeps the task and drops the class.
struct StreamConfig {
  std::size_t tasks = 5;
  std::size_t classes_per_task = 4;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  std::size_t seq_len = 4;
  std::size_t dim = 8;
  double task_scale = 2.0;
  double class_scale = 1.0;
  double noise = 0.5;
  /// Classes of the held-out base task used to pretrain the backbone.
  std::size_t base_classes = 8;

  void validate() const;
};

enum class Split { Train, Test };

struct AccessRecord {
  std::size_t task;
  Split split;
  std::size_t index;
};

/// Every sample read through a TaskView lands here.
class AccessLog {
 public:
  void record(std::size_t task, Split split, std::size_t index) { entries_.push_back({task, split, index}); }
  const std::vector<AccessRecord>& entries() const noexcept { return entries_; }
  void clear() noexcept { entries_.clear(); }
  /// True if any sample of `task` in `split` was read.
  bool touched(std::size_t task, Split split) const;

 private:
  std::vector<AccessRecord> entries_;
};

/// Audited read handle on one task.
class TaskView {
 public:
  TaskView(const TaskData& data, AccessLog& log) : data_(&data), log_(&log) {}

  std::size_t task() const noexcept { return data_->task; }
  const std::vector<std::size_t>& classes() const noexcept { return data_->classes; }
  std::size_t train_size() const noexcept { return data_->train.size(); }
  std::size_t test_size() const noexcept { return data_->test.size(); }
  const Sample& train(std::size_t i) const;
  const Sample& test(std::size_t i) const;

 private:
  const TaskData* data_;
  AccessLog* log_;
};

class TaskStream {
 public:
  static TaskStream generate(const StreamConfig& cfg, std::uint64_t seed);

  const StreamConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return tasks_.size(); }
  TaskView view(std::size_t t) { return TaskView(tasks_.at(t), log_); }
  /// The held-out pretraining task; labels 0..base_classes-1, unrelated to the stream's.
  const TaskData& base() const noexcept { return base_; }
  AccessLog& log() noexcept { return log_; }

 private:
  StreamConfig cfg_;
  std::vector<TaskData> tasks_;
  TaskData base_;
  AccessLog log_;
};

}  // namespace pmoe::hide
