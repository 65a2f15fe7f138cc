#include "liftload/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include "liftload/error.hpp"

namespace liftload {

namespace {

void check_bounds(double q_low, double q_high) {
  if (!(q_low >= 0.0) || !(q_low < q_high) || !(q_high <= 1.0)) {
    throw Error(ErrorCode::InvalidBounds, "trim bounds need 0 <= low < high <= 1");
  }
}

}  // namespace

double interpolated_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

WindowEstimate summarise_window(std::span<const double> values, double q_low, double q_high) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to aggregate");
  check_bounds(q_low, q_high);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = interpolated_quantile(sorted, q_low);
  const double hi = interpolated_quantile(sorted, q_high);

  WindowEstimate est;
  est.min = sorted.front();
  est.max = sorted.back();
  est.count = sorted.size();
  double sum = 0.0;
  for (double v : sorted) {
    if (v < lo || v > hi) continue;
    sum += v;
    ++est.kept;
  }
  // Narrow bounds can both fall between the same two order statistics.
  // The interpolated distribution is linear there, so its mean over the
  // band is the midpoint.
  est.load_kg = est.kept == 0 ? 0.5 * (lo + hi) : sum / static_cast<double>(est.kept);
  return est;
}

double trimmed_mean(std::span<const double> values, double q_low, double q_high) {
  return summarise_window(values, q_low, q_high).load_kg;
}

Aggregator::Aggregator(std::size_t capacity, double q_low, double q_high)
    : capacity_(capacity), q_low_(q_low), q_high_(q_high) {
  if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "aggregator capacity must be >= 1");
  check_bounds(q_low, q_high);
  buffer_.reserve(capacity_);
}

std::optional<WindowEstimate> Aggregator::push(double prediction_kg) {
  if (!std::isfinite(prediction_kg)) {
    throw Error(ErrorCode::NonFinitePrediction, "prediction is not finite");
  }
  buffer_.push_back(prediction_kg);
  if (buffer_.size() < capacity_) return std::nullopt;
  auto est = summarise_window(buffer_, q_low_, q_high_);
  buffer_.clear();
  return est;
}

}  // namespace liftload
