#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "liftload/config.hpp"
#include "liftload/core.hpp"

namespace liftload::ingest {

// JSON manifest describing one subject-session:
//   {subject_id, session_index, phase_duration_s, loads_kg, frames_csv,
//    column_map?, prefiltered?, phase_sequence?, schedule_start_ms?,
//    body_mass_kg?, shoe_size?}
// `frames_csv` is resolved relative to the manifest's directory.
struct SessionManifest {
  std::string subject_id;
  int session_index = 1;
  PhaseSchedule schedule;
  std::vector<double> loads_kg;
  std::filesystem::path frames_csv;
  // canonical column ("t_ms", "ch00".."ch35") -> column name in frames_csv
  std::map<std::string, std::string> column_map;
  double time_scale_to_ms = 1.0;
  bool prefiltered = false;
  std::optional<double> body_mass_kg;
  std::optional<double> shoe_size;
};

SessionManifest read_manifest(const std::filesystem::path& manifest_path);

std::string channel_column_name(std::size_t channel);

// Parses a frame CSV (header `t_ms,ch00,...,ch35` unless remapped).
// Throws ParseError with the offending line number.
std::vector<Frame> parse_frames_csv(const std::filesystem::path& csv_path,
                                    const std::map<std::string, std::string>& column_map = {},
                                    double time_scale_to_ms = 1.0);

// Reads manifest + frames and validates; throws ParseError or
// ValidationError (line number of the first offending frame row).
SessionRecording parse_session(const std::filesystem::path& manifest_path);

// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the manifest path.
std::filesystem::path write_session(const SessionRecording& rec,
                                    const std::filesystem::path& dir, const std::string& stem);

struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const FrameRange&) const = default;
};

struct PhaseSegment {
  PhaseKind kind;
  double load_kg = 0.0;  // baseline segments carry the upcoming load
  std::size_t cycle = 0;
  FrameRange frames;
};

// Splits the recording along the timer schedule. Throws ScheduleMismatch
// when the recording ends before the last scheduled phase.
std::vector<PhaseSegment> segment_phases(const SessionRecording& rec);

struct CycleWindows {
  std::size_t cycle = 0;
  double load_kg = 0.0;
  FrameRange baseline;
  FrameRange lift;
};

// Centred window of `window` frames inside `phase`; start at
// floor((N - W) / 2). Throws WindowTooLarge.
FrameRange centered_window(const FrameRange& phase, std::size_t window);

std::vector<CycleWindows> extract_windows(const SessionRecording& rec,
                                          std::span<const PhaseSegment> segments,
                                          const PipelineConfig& cfg);

std::span<const Frame> frames_in(const SessionRecording& rec, const FrameRange& range);

// Full channel pipeline for one session: filter (unless the recording is
// pre-filtered or `skip_filter`), segment, window, baseline-difference.
std::vector<LabeledSample> label_session(const SessionRecording& rec, const PipelineConfig& cfg,
                                         bool skip_filter = false);

}  // namespace liftload::ingest
