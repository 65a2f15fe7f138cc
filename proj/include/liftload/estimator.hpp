#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "liftload/aggregate.hpp"
#include "liftload/config.hpp"
#include "liftload/dsp.hpp"
#include "liftload/model.hpp"

namespace liftload {

struct StreamEstimate {
  std::int64_t t_ms = 0;  // timestamp of the last frame in the window
  WindowEstimate window;
  std::optional<PhaseKind> phase;  // phase of the last frame, if inside the schedule
  bool operator==(const StreamEstimate& o) const {
    return t_ms == o.t_ms && window.load_kg == o.window.load_kg && window.min == o.window.min &&
           window.max == o.window.max && window.count == o.window.count &&
           window.kept == o.window.kept && phase == o.phase;
  }
};

// {"t_ms":..,"load_kg":..,"window_stats":{"min","max","count","kept"},"phase":..}
std::string estimate_to_json(const StreamEstimate& e);
StreamEstimate estimate_from_json(const std::string& line);

// Phase of a timestamp under `schedule`, or nothing before its start.
std::optional<PhaseKind> phase_at(const PhaseSchedule& schedule, std::int64_t t_ms);

// Frame-by-frame estimator. Each frame is low-pass filtered, referenced to
// the mean of the centred baseline window of the most recently completed
// baseline phase (the first filtered frame until one completes), predicted
// and pushed into a tumbling-window aggregator.
class StreamEstimator {
public:
  StreamEstimator(const Model& model, const PipelineConfig& cfg, const PhaseSchedule& schedule,
                  bool prefiltered);

  // Throws NonFiniteInput on malformed frames.
  std::optional<StreamEstimate> push(const Frame& frame);

private:
  void close_baseline();

  const Model& model_;
  PipelineConfig cfg_;
  PhaseSchedule schedule_;
  bool prefiltered_;
  std::vector<dsp::BiquadFilter> filters_;
  bool started_ = false;
  FeatureVector reference_{};
  std::vector<Frame> baseline_buffer_;
  std::optional<std::int64_t> baseline_end_ms_;
  Aggregator aggregator_;
};

// Batch counterpart over a whole recording; same estimates as feeding every
// frame to a StreamEstimator.
std::vector<StreamEstimate> offline_estimates(const SessionRecording& rec, const Model& model,
                                              const PipelineConfig& cfg);

// Blocking single-producer/single-consumer queue with a fixed capacity.
template <typename T>
class BoundedQueue {
public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  // Blocks while full. Returns false once the queue is closed.
  bool push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  // Blocks while empty; nothing once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace liftload
