#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace liftload {

// Empirical quantile with linear interpolation between order statistics
// (position (n - 1) q). `sorted` must be ascending and non-empty.
double interpolated_quantile(std::span<const double> sorted, double q);

// Mean of the values inside [quantile(q_low), quantile(q_high)], boundaries
// inclusive. Throws EmptyInput or InvalidBounds.
double trimmed_mean(std::span<const double> values, double q_low, double q_high);

struct WindowEstimate {
  double load_kg = 0.0;
  double min = 0.0;  // before trimming
  double max = 0.0;
  std::size_t count = 0;
  std::size_t kept = 0;
};

WindowEstimate summarise_window(std::span<const double> values, double q_low, double q_high);

// Tumbling window over per-sample predictions: emits one trimmed mean per
// `capacity` pushes and then starts over.
class Aggregator {
public:
  explicit Aggregator(std::size_t capacity = 10, double q_low = 0.1, double q_high = 0.9);

  // Throws NonFinitePrediction. Returns an estimate exactly when this push
  // fills the window.
  std::optional<WindowEstimate> push(double prediction_kg);

  std::size_t pending() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  void reset() { buffer_.clear(); }

private:
  std::size_t capacity_;
  double q_low_;
  double q_high_;
  std::vector<double> buffer_;
};

}  // namespace liftload
