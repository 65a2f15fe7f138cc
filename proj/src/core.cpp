#include "liftload/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace liftload {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::ScheduleMismatch: return "ScheduleMismatch";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::NonFinitePrediction: return "NonFinitePrediction";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::MissingSession: return "MissingSession";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorCode code, const std::string& message,
                    std::optional<std::size_t> line) {
  std::ostringstream out;
  out << to_string(code);
  if (line) out << " (line " << *line << ")";
  out << ": " << message;
  return out.str();
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line)
    : std::runtime_error(compose(code, message, line)), code_(code), line_(line) {}

std::string_view to_string(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::Baseline: return "baseline";
    case PhaseKind::Lift: return "lift";
    case PhaseKind::Return: return "return";
  }
  return "unknown";
}

std::optional<PhaseKind> phase_from_string(std::string_view name) {
  if (name == "baseline") return PhaseKind::Baseline;
  if (name == "lift") return PhaseKind::Lift;
  if (name == "return") return PhaseKind::Return;
  return std::nullopt;
}

std::int64_t PhaseSchedule::phase_duration_ms() const {
  return static_cast<std::int64_t>(std::llround(phase_duration_s * 1000.0));
}

std::int64_t PhaseSchedule::cycle_duration_ms() const {
  return phase_duration_ms() * static_cast<std::int64_t>(sequence.size());
}

std::int64_t PhaseSchedule::phase_start_ms(std::size_t cycle, std::size_t phase) const {
  return start_ms + static_cast<std::int64_t>(cycle) * cycle_duration_ms() +
         static_cast<std::int64_t>(phase) * phase_duration_ms();
}

std::string_view to_string(ViolationRule rule) {
  switch (rule) {
    case ViolationRule::ChannelCount: return "ChannelCount";
    case ViolationRule::NonFiniteChannel: return "NonFiniteChannel";
    case ViolationRule::NegativeChannel: return "NegativeChannel";
    case ViolationRule::AboveFullScale: return "AboveFullScale";
    case ViolationRule::TimestampOrder: return "TimestampOrder";
    case ViolationRule::TimestampSpacing: return "TimestampSpacing";
    case ViolationRule::SessionIndex: return "SessionIndex";
    case ViolationRule::LadderValue: return "LadderValue";
    case ViolationRule::LadderStep: return "LadderStep";
    case ViolationRule::EmptyLadder: return "EmptyLadder";
    case ViolationRule::ScheduleShape: return "ScheduleShape";
  }
  return "Unknown";
}

bool is_ladder_load(double kg) {
  if (!std::isfinite(kg) || kg < kMinLoadKg - 1e-9 || kg > kMaxLoadKg + 1e-9) return false;
  const double steps = (kg - kMinLoadKg) / kLoadStepKg;
  return std::abs(steps - std::round(steps)) < 1e-9;
}

std::vector<double> full_load_ladder() {
  std::vector<double> ladder;
  for (int i = 0; kMinLoadKg + i * kLoadStepKg <= kMaxLoadKg + 1e-9; ++i) {
    ladder.push_back(kMinLoadKg + i * kLoadStepKg);
  }
  return ladder;
}

std::vector<Violation> validate_frame(const Frame& frame, std::size_t index) {
  std::vector<Violation> out;
  if (frame.channels.size() != kChannelCount) {
    out.push_back({ViolationRule::ChannelCount, index,
                   "expected 36 channels, got " + std::to_string(frame.channels.size())});
    return out;
  }
  for (std::size_t c = 0; c < frame.channels.size(); ++c) {
    const double v = frame.channels[c];
    if (!std::isfinite(v)) {
      out.push_back({ViolationRule::NonFiniteChannel, index, "channel " + std::to_string(c)});
    } else if (v < 0.0) {
      out.push_back({ViolationRule::NegativeChannel, index, "channel " + std::to_string(c)});
    } else if (v > kFullScaleRaw) {
      out.push_back({ViolationRule::AboveFullScale, index, "channel " + std::to_string(c)});
    }
  }
  return out;
}

std::vector<Violation> validate_session(const SessionRecording& rec) {
  std::vector<Violation> out;
  if (rec.session_index < 1 || rec.session_index > 3) {
    out.push_back({ViolationRule::SessionIndex, 0,
                   "session index " + std::to_string(rec.session_index) + " outside 1..3"});
  }

  const auto& seq = rec.schedule.sequence;
  const auto baseline = std::find(seq.begin(), seq.end(), PhaseKind::Baseline);
  const auto lift = std::find(seq.begin(), seq.end(), PhaseKind::Lift);
  if (rec.schedule.phase_duration_ms() <= 0 || baseline == seq.end() || lift == seq.end() ||
      baseline > lift || std::count(seq.begin(), seq.end(), PhaseKind::Baseline) != 1 ||
      std::count(seq.begin(), seq.end(), PhaseKind::Lift) != 1) {
    out.push_back({ViolationRule::ScheduleShape, 0,
                   "schedule needs a positive duration and one baseline before one lift"});
  }

  if (rec.load_ladder.empty()) {
    out.push_back({ViolationRule::EmptyLadder, 0, "load ladder is empty"});
  }
  for (std::size_t i = 0; i < rec.load_ladder.size(); ++i) {
    if (!is_ladder_load(rec.load_ladder[i])) {
      out.push_back({ViolationRule::LadderValue, i,
                     "load " + std::to_string(rec.load_ladder[i]) + " not on the 2-10 kg ladder"});
    }
    if (i > 0 && std::abs(rec.load_ladder[i] - rec.load_ladder[i - 1] - kLoadStepKg) > 1e-9) {
      out.push_back({ViolationRule::LadderStep, i, "ladder must increase by 0.5 kg"});
    }
  }

  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    auto frame_issues = validate_frame(rec.frames[i], i);
    out.insert(out.end(), frame_issues.begin(), frame_issues.end());
    if (i == 0) continue;
    const auto dt = rec.frames[i].timestamp_ms - rec.frames[i - 1].timestamp_ms;
    if (dt <= 0) {
      out.push_back({ViolationRule::TimestampOrder, i, "timestamp not strictly increasing"});
    } else if (std::abs(dt - kFramePeriodMs) > kJitterToleranceMs) {
      out.push_back({ViolationRule::TimestampSpacing, i,
                     "frame spacing " + std::to_string(dt) + " ms"});
    }
  }
  return out;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw Error(ErrorCode::LengthMismatch, "ragged matrix rows");
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix feature_matrix(std::span<const LabeledSample> samples) {
  Matrix x(samples.size(), kChannelCount);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].features.begin(), samples[i].features.end(), x.row(i).begin());
  }
  return x;
}

std::vector<double> label_vector(std::span<const LabeledSample> samples) {
  std::vector<double> y;
  y.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label_kg) throw Error(ErrorCode::EmptyInput, "sample without a load label");
    y.push_back(*s.label_kg);
  }
  return y;
}

}  // namespace liftload
