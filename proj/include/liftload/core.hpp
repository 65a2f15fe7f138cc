#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "liftload/error.hpp"

namespace liftload {

// Insole geometry: left insole channels 0-17, right insole 18-35.
inline constexpr std::size_t kChannelCount = 36;
inline constexpr std::size_t kChannelsPerFoot = 18;

inline constexpr double kSampleRateHz = 20.0;
inline constexpr std::int64_t kFramePeriodMs = 50;
inline constexpr std::int64_t kJitterToleranceMs = 20;

// Raw units are gram-equivalents; a channel saturates at 70 kg.
inline constexpr double kFullScaleRaw = 70000.0;

inline constexpr double kMinLoadKg = 2.0;
inline constexpr double kMaxLoadKg = 10.0;
inline constexpr double kLoadStepKg = 0.5;

using FeatureVector = std::array<double, kChannelCount>;

struct Frame {
  std::int64_t timestamp_ms = 0;
  std::vector<double> channels;  // kChannelCount entries when valid
};

enum class PhaseKind { Baseline, Lift, Return };

std::string_view to_string(PhaseKind kind);
std::optional<PhaseKind> phase_from_string(std::string_view name);

// Timer schedule of one session. Each load cycle walks `sequence`, every
// phase lasting `phase_duration_s`, starting at `start_ms`.
struct PhaseSchedule {
  double phase_duration_s = 15.0;
  std::int64_t start_ms = 0;
  std::vector<PhaseKind> sequence{PhaseKind::Baseline, PhaseKind::Lift,
                                  PhaseKind::Return};

  std::int64_t phase_duration_ms() const;
  std::int64_t cycle_duration_ms() const;
  std::int64_t phase_start_ms(std::size_t cycle, std::size_t phase) const;
  std::size_t phases_per_cycle() const { return sequence.size(); }
};

struct SessionRecording {
  std::string subject_id;
  int session_index = 1;
  std::vector<Frame> frames;
  PhaseSchedule schedule;
  std::vector<double> load_ladder;
  bool prefiltered = false;
};

struct LabeledSample {
  FeatureVector features{};
  std::optional<double> label_kg;
  std::string subject_id;
  int session_index = 0;
  std::int64_t frame_timestamp_ms = 0;
};

enum class ViolationRule {
  ChannelCount,
  NonFiniteChannel,
  NegativeChannel,
  AboveFullScale,
  TimestampOrder,
  TimestampSpacing,
  SessionIndex,
  LadderValue,
  LadderStep,
  EmptyLadder,
  ScheduleShape,
};

std::string_view to_string(ViolationRule rule);

struct Violation {
  ViolationRule rule;
  std::size_t index = 0;  // frame index, or ladder index for ladder rules
  std::string detail;
};

std::vector<Violation> validate_frame(const Frame& frame, std::size_t index);
std::vector<Violation> validate_session(const SessionRecording& rec);

// True when `kg` sits on the 0.5 kg ladder between 2 and 10 kg.
bool is_ladder_load(double kg);
std::vector<double> full_load_ladder();

// Dense row-major matrix used for design matrices.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix feature_matrix(std::span<const LabeledSample> samples);
std::vector<double> label_vector(std::span<const LabeledSample> samples);

}  // namespace liftload
