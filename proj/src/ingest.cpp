#include "liftload/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "liftload/dataset.hpp"
#include "liftload/dsp.hpp"
#include "text_util.hpp"

namespace liftload::ingest {

using nlohmann::json;

std::string channel_column_name(std::size_t channel) {
  return (channel < 10 ? "ch0" : "ch") + std::to_string(channel);
}

SessionManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open manifest " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }

  SessionManifest m;
  try {
    const auto& id = j.at("subject_id");
    m.subject_id = id.is_string() ? id.get<std::string>() : id.dump();
    m.session_index = j.at("session_index").get<int>();
    m.schedule.phase_duration_s = j.value("phase_duration_s", 15.0);
    m.schedule.start_ms = j.value("schedule_start_ms", std::int64_t{0});
    if (j.contains("phase_sequence")) {
      m.schedule.sequence.clear();
      for (const auto& name : j.at("phase_sequence")) {
        const auto kind = phase_from_string(name.get<std::string>());
        if (!kind) throw Error(ErrorCode::ParseError, "unknown phase '" + name.dump() + "'");
        m.schedule.sequence.push_back(*kind);
      }
    }
    m.loads_kg = j.at("loads_kg").get<std::vector<double>>();
    m.frames_csv = manifest_path.parent_path() / j.at("frames_csv").get<std::string>();
    if (j.contains("column_map") && !j.at("column_map").is_null()) {
      m.column_map = j.at("column_map").get<std::map<std::string, std::string>>();
    }
    const auto unit = j.value("time_unit", std::string("ms"));
    if (unit == "ms") m.time_scale_to_ms = 1.0;
    else if (unit == "s") m.time_scale_to_ms = 1000.0;
    else throw Error(ErrorCode::ParseError, "time_unit must be 'ms' or 's'");
    m.prefiltered = j.value("prefiltered", false);
    if (j.contains("body_mass_kg")) m.body_mass_kg = j.at("body_mass_kg").get<double>();
    if (j.contains("shoe_size")) m.shoe_size = j.at("shoe_size").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }
  return m;
}

std::vector<Frame> parse_frames_csv(const std::filesystem::path& csv_path,
                                    const std::map<std::string, std::string>& column_map,
                                    double time_scale_to_ms) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open frame file " + csv_path.string());

  std::string line;
  if (!std::getline(in, line) || detail::trim_view(line).empty()) {
    throw Error(ErrorCode::ParseError, csv_path.string() + ": empty frame file", 1);
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv(line);

  auto source_name = [&](const std::string& canonical) {
    const auto it = column_map.find(canonical);
    return it == column_map.end() ? canonical : it->second;
  };
  auto column_of = [&](const std::string& canonical) {
    const auto name = source_name(canonical);
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::ParseError,
                  csv_path.string() + ": missing column '" + name + "'", 1);
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t t_col = column_of("t_ms");
  std::array<std::size_t, kChannelCount> ch_cols{};
  for (std::size_t c = 0; c < kChannelCount; ++c) ch_cols[c] = column_of(channel_column_name(c));

  std::vector<Frame> frames;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_view(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError,
                  csv_path.string() + ": expected " + std::to_string(header.size()) +
                      " columns, got " + std::to_string(cells.size()),
                  line_no);
    }
    Frame f;
    if (const auto t = detail::to_int(cells[t_col]); t && time_scale_to_ms == 1.0) {
      f.timestamp_ms = *t;
    } else if (const auto td = detail::to_double(cells[t_col])) {
      f.timestamp_ms = std::llround(*td * time_scale_to_ms);
    } else {
      throw Error(ErrorCode::ParseError, csv_path.string() + ": bad timestamp", line_no);
    }
    f.channels.resize(kChannelCount);
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const auto v = detail::to_double(cells[ch_cols[c]]);
      if (!v) {
        throw Error(ErrorCode::ParseError,
                    csv_path.string() + ": bad value in column " + std::string(header[ch_cols[c]]),
                    line_no);
      }
      f.channels[c] = *v;
    }
    frames.push_back(std::move(f));
  }
  if (frames.empty()) {
    throw Error(ErrorCode::ParseError, csv_path.string() + ": no frames after header", line_no);
  }
  return frames;
}

SessionRecording parse_session(const std::filesystem::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  SessionRecording rec;
  rec.subject_id = m.subject_id;
  rec.session_index = m.session_index;
  rec.schedule = m.schedule;
  rec.load_ladder = m.loads_kg;
  rec.prefiltered = m.prefiltered;
  rec.frames = parse_frames_csv(m.frames_csv, m.column_map, m.time_scale_to_ms);

  const auto violations = validate_session(rec);
  if (!violations.empty()) {
    const auto& v = violations.front();
    const bool frame_rule = v.rule != ViolationRule::SessionIndex &&
                            v.rule != ViolationRule::LadderValue &&
                            v.rule != ViolationRule::LadderStep &&
                            v.rule != ViolationRule::EmptyLadder &&
                            v.rule != ViolationRule::ScheduleShape;
    std::ostringstream msg;
    msg << (frame_rule ? m.frames_csv.string() : manifest_path.string()) << ": "
        << to_string(v.rule) << " at " << (frame_rule ? "frame " : "index ") << v.index << " ("
        << v.detail << ")";
    if (violations.size() > 1) msg << " and " << violations.size() - 1 << " more";
    throw Error(ErrorCode::ValidationError, msg.str(),
                frame_rule ? std::optional<std::size_t>(v.index + 2) : std::nullopt);
  }
  return rec;
}

std::filesystem::path write_session(const SessionRecording& rec,
                                    const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (stem + ".csv");
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + csv_path.string());
    out << "t_ms";
    for (std::size_t c = 0; c < kChannelCount; ++c) out << ',' << channel_column_name(c);
    out << '\n';
    for (const auto& f : rec.frames) {
      out << f.timestamp_ms;
      for (double v : f.channels) out << ',' << format_double(v);
      out << '\n';
    }
    if (!out) throw Error(ErrorCode::Io, "write failed for " + csv_path.string());
  }

  json j;
  j["subject_id"] = rec.subject_id;
  j["session_index"] = rec.session_index;
  j["phase_duration_s"] = rec.schedule.phase_duration_s;
  j["schedule_start_ms"] = rec.schedule.start_ms;
  std::vector<std::string> sequence;
  for (auto kind : rec.schedule.sequence) sequence.emplace_back(to_string(kind));
  j["phase_sequence"] = sequence;
  j["loads_kg"] = rec.load_ladder;
  j["frames_csv"] = csv_path.filename().string();
  j["prefiltered"] = rec.prefiltered;

  const auto manifest_path = dir / (stem + ".json");
  std::ofstream out(manifest_path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + manifest_path.string());
  out << j.dump(2) << '\n';
  return manifest_path;
}

std::vector<PhaseSegment> segment_phases(const SessionRecording& rec) {
  const auto& sched = rec.schedule;
  const std::size_t cycles = rec.load_ladder.size();
  const std::size_t phases = sched.phases_per_cycle();
  if (cycles == 0 || phases == 0) {
    throw Error(ErrorCode::ScheduleMismatch, "schedule has no phases");
  }
  const std::int64_t span_end = sched.phase_start_ms(cycles, 0);
  if (rec.frames.empty() ||
      rec.frames.back().timestamp_ms < span_end - kFramePeriodMs - kJitterToleranceMs) {
    throw Error(ErrorCode::ScheduleMismatch,
                "recording for subject " + rec.subject_id + " session " +
                    std::to_string(rec.session_index) + " ends before the " +
                    std::to_string(cycles) + "-cycle schedule (needs " +
                    std::to_string(span_end) + " ms)");
  }

  auto first_at_or_after = [&](std::int64_t t) {
    const auto it = std::lower_bound(
        rec.frames.begin(), rec.frames.end(), t,
        [](const Frame& f, std::int64_t value) { return f.timestamp_ms < value; });
    return static_cast<std::size_t>(it - rec.frames.begin());
  };

  std::vector<PhaseSegment> out;
  out.reserve(cycles * phases);
  for (std::size_t c = 0; c < cycles; ++c) {
    for (std::size_t p = 0; p < phases; ++p) {
      PhaseSegment seg;
      seg.kind = sched.sequence[p];
      seg.load_kg = rec.load_ladder[c];
      seg.cycle = c;
      seg.frames.begin = first_at_or_after(sched.phase_start_ms(c, p));
      seg.frames.end = first_at_or_after(sched.phase_start_ms(c, p) + sched.phase_duration_ms());
      if (seg.frames.size() == 0) {
        throw Error(ErrorCode::ScheduleMismatch,
                    "no frames in cycle " + std::to_string(c) + " phase " +
                        std::string(to_string(seg.kind)));
      }
      out.push_back(seg);
    }
  }
  return out;
}

FrameRange centered_window(const FrameRange& phase, std::size_t window) {
  const std::size_t n = phase.size();
  if (window == 0 || window > n) {
    throw Error(ErrorCode::WindowTooLarge, "window of " + std::to_string(window) +
                                               " frames does not fit a phase of " +
                                               std::to_string(n) + " frames");
  }
  const std::size_t start = phase.begin + (n - window) / 2;
  return {start, start + window};
}

std::vector<CycleWindows> extract_windows(const SessionRecording& rec,
                                          std::span<const PhaseSegment> segments,
                                          const PipelineConfig& cfg) {
  (void)rec;
  std::vector<CycleWindows> out;
  const PhaseSegment* pending_baseline = nullptr;
  for (const auto& seg : segments) {
    if (seg.kind == PhaseKind::Baseline) {
      pending_baseline = &seg;
    } else if (seg.kind == PhaseKind::Lift) {
      if (pending_baseline == nullptr || pending_baseline->cycle != seg.cycle) {
        throw Error(ErrorCode::ScheduleMismatch,
                    "lift phase in cycle " + std::to_string(seg.cycle) +
                        " has no baseline in the same cycle");
      }
      CycleWindows w;
      w.cycle = seg.cycle;
      w.load_kg = seg.load_kg;
      w.baseline = centered_window(pending_baseline->frames, cfg.baseline_window_frames());
      w.lift = centered_window(seg.frames, cfg.lift_window_frames());
      out.push_back(w);
      pending_baseline = nullptr;
    }
  }
  return out;
}

std::span<const Frame> frames_in(const SessionRecording& rec, const FrameRange& range) {
  return std::span<const Frame>(rec.frames).subspan(range.begin, range.size());
}

std::vector<LabeledSample> label_session(const SessionRecording& rec, const PipelineConfig& cfg,
                                         bool skip_filter) {
  cfg.validate();
  const SessionRecording filtered =
      (skip_filter || rec.prefiltered)
          ? rec
          : dsp::filter_recording(rec, dsp::design_butterworth(cfg.cutoff_hz, cfg.sample_rate_hz));
  const auto segments = segment_phases(filtered);
  const auto windows = extract_windows(filtered, segments, cfg);

  std::vector<LabeledSample> out;
  for (const auto& w : windows) {
    const auto baseline = dsp::baseline_mean(frames_in(filtered, w.baseline));
    const auto lift_frames = frames_in(filtered, w.lift);
    const auto features = dsp::differential_features(lift_frames, baseline);
    for (std::size_t i = 0; i < features.size(); ++i) {
      LabeledSample s;
      s.features = features[i];
      s.label_kg = w.load_kg;
      s.subject_id = rec.subject_id;
      s.session_index = rec.session_index;
      s.frame_timestamp_ms = lift_frames[i].timestamp_ms;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace liftload::ingest
