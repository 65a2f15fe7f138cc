#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "liftload/dataset.hpp"
#include "liftload/dsp.hpp"
#include "liftload/ingest.hpp"
#include "liftload/synth.hpp"

using namespace liftload;
using namespace liftload::ingest;

namespace {

synth::SynthSession make(std::vector<double> ladder, double noise = 0.0) {
  return synth::generate_session(testutil::simple_spec(noise), PhaseSchedule{}, ladder, 1);
}

ErrorCode code_of(const std::function<void()>& f, std::optional<std::size_t>* line = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("three-cycle session round-trips through CSV and manifest") {
  testutil::TempDir dir;
  const auto s = make({2.0, 2.5, 3.0}, 200.0);
  const auto manifest = write_session(s.recording, dir.path(), "sess");
  const auto rec = parse_session(manifest);
  CHECK(rec.frames.size() == 3 * 3 * 15 * 20);
  CHECK(rec.subject_id == s.recording.subject_id);
  CHECK(rec.load_ladder == s.recording.load_ladder);
  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    REQUIRE(rec.frames[i].timestamp_ms == s.recording.frames[i].timestamp_ms);
    REQUIRE(rec.frames[i].channels == s.recording.frames[i].channels);  // bit-exact
  }
}

TEST_CASE("empty and header-only frame files are parse errors") {
  testutil::TempDir dir;
  testutil::write_file(dir / "empty.csv", "");
  CHECK(code_of([&] { parse_frames_csv(dir / "empty.csv"); }) == ErrorCode::ParseError);
  std::string header = "t_ms";
  for (std::size_t c = 0; c < kChannelCount; ++c) header += "," + channel_column_name(c);
  testutil::write_file(dir / "header.csv", header + "\n");
  CHECK(code_of([&] { parse_frames_csv(dir / "header.csv"); }) == ErrorCode::ParseError);
}

TEST_CASE("malformed rows carry their line number") {
  testutil::TempDir dir;
  std::string text = "t_ms";
  for (std::size_t c = 0; c < kChannelCount; ++c) text += "," + channel_column_name(c);
  text += "\n";
  for (int r = 0; r < 3; ++r) {
    text += std::to_string(r * 50);
    for (std::size_t c = 0; c < kChannelCount; ++c) text += ",100";
    text += "\n";
  }
  text += "150,1,2\n";
  testutil::write_file(dir / "short.csv", text);
  std::optional<std::size_t> line;
  CHECK(code_of([&] { parse_frames_csv(dir / "short.csv"); }, &line) == ErrorCode::ParseError);
  CHECK(line == 5u);
}

TEST_CASE("negative channel is a validation error at its CSV line") {
  testutil::TempDir dir;
  auto s = make({2.0});
  s.recording.frames[7].channels[3] = -5.0;
  const auto manifest = write_session(s.recording, dir.path(), "neg");
  std::optional<std::size_t> line;
  CHECK(code_of([&] { parse_session(manifest); }, &line) == ErrorCode::ValidationError);
  CHECK(line == 9u);  // header is line 1, frame 0 is line 2
}

TEST_CASE("column map and second-based timestamps") {
  testutil::TempDir dir;
  const auto s = make({2.0});
  std::string text = "time";
  for (std::size_t c = 0; c < kChannelCount; ++c) text += ",P" + std::to_string(c + 1);
  text += "\n";
  for (const auto& f : s.recording.frames) {
    text += format_double(static_cast<double>(f.timestamp_ms) / 1000.0);
    for (double v : f.channels) text += "," + format_double(v);
    text += "\n";
  }
  testutil::write_file(dir / "native.csv", text);
  std::string map = "{\"t_ms\": \"time\"";
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    map += ", \"" + channel_column_name(c) + "\": \"P" + std::to_string(c + 1) + "\"";
  }
  map += "}";
  testutil::write_file(dir / "native.json",
                       "{\"subject_id\": \"A\", \"session_index\": 2, \"phase_duration_s\": 15,"
                       " \"loads_kg\": [2.0], \"frames_csv\": \"native.csv\", \"time_unit\": \"s\","
                       " \"body_mass_kg\": 72.5, \"column_map\": " + map + "}");
  const auto m = read_manifest(dir / "native.json");
  CHECK(m.body_mass_kg == 72.5);
  const auto rec = parse_session(dir / "native.json");
  REQUIRE(rec.frames.size() == s.recording.frames.size());
  CHECK(rec.frames.back().timestamp_ms == s.recording.frames.back().timestamp_ms);
  CHECK(rec.frames[10].channels == s.recording.frames[10].channels);
}

TEST_CASE("single-cycle segmentation") {
  const auto s = make({2.0});
  const auto seg = segment_phases(s.recording);
  REQUIRE(seg.size() == 3);
  CHECK(seg[0].kind == PhaseKind::Baseline);
  CHECK(seg[1].kind == PhaseKind::Lift);
  CHECK(seg[2].kind == PhaseKind::Return);
  for (const auto& p : seg) CHECK(p.load_kg == 2.0);
}

TEST_CASE("full ladder gives 51 contiguous disjoint phases covering the span") {
  const auto s = make(full_load_ladder());
  const auto seg = segment_phases(s.recording);
  REQUIRE(seg.size() == 51);
  CHECK(seg.front().frames.begin == 0);
  CHECK(seg.back().frames.end == s.recording.frames.size());
  for (std::size_t i = 1; i < seg.size(); ++i) CHECK(seg[i].frames.begin == seg[i - 1].frames.end);
  for (const auto& p : seg) {
    CHECK(p.frames.size() == 300);
    if (p.kind == PhaseKind::Lift) CHECK(p.load_kg == full_load_ladder()[p.cycle]);
  }
}

TEST_CASE("truncated recording is a schedule mismatch") {
  auto s = make({2.0, 2.5, 3.0});
  s.recording.frames.resize(s.recording.frames.size() / 2);
  CHECK(code_of([&] { segment_phases(s.recording); }) == ErrorCode::ScheduleMismatch);
}

TEST_CASE("centred windows") {
  // Oracle by index enumeration: the window whose left and right margins
  // differ by at most one frame, the smaller margin on the left.
  auto oracle = [](std::size_t begin, std::size_t n, std::size_t w) {
    for (std::size_t start = begin; start + w <= begin + n; ++start) {
      const std::size_t left = start - begin, right = begin + n - (start + w);
      if (right >= left && right - left <= 1) return FrameRange{start, start + w};
    }
    return FrameRange{};
  };
  CHECK(centered_window({0, 300}, 100) == FrameRange{100, 200});
  CHECK(centered_window({300, 600}, 200) == FrameRange{350, 550});
  for (std::size_t n = 1; n < 40; ++n) {
    for (std::size_t w = 1; w <= n; ++w) CHECK(centered_window({7, 7 + n}, w) == oracle(7, n, w));
  }
  CHECK(code_of([] { centered_window({0, 80}, 100); }) == ErrorCode::WindowTooLarge);
}

TEST_CASE("short phases cannot hold the windows") {
  synth::SynthSpec spec = testutil::simple_spec();
  PhaseSchedule sched;
  sched.phase_duration_s = 4.0;
  const auto s = synth::generate_session(spec, sched, {2.0}, 1);
  const auto seg = segment_phases(s.recording);
  CHECK(code_of([&] { extract_windows(s.recording, seg, PipelineConfig{}); }) ==
        ErrorCode::WindowTooLarge);
}

TEST_CASE("windows pair with the same cycle and stay inside their phase") {
  const auto s = make({2.0, 2.5, 3.0, 3.5});
  const auto seg = segment_phases(s.recording);
  const auto win = extract_windows(s.recording, seg, PipelineConfig{});
  REQUIRE(win.size() == 4);
  for (const auto& w : win) {
    const auto& b = seg[w.cycle * 3];
    const auto& l = seg[w.cycle * 3 + 1];
    CHECK(w.baseline.begin > b.frames.begin);
    CHECK(w.baseline.end < b.frames.end);
    CHECK(w.lift.begin > l.frames.begin);
    CHECK(w.lift.end < l.frames.end);
    CHECK(w.baseline.size() == 100);
    CHECK(w.lift.size() == 200);
    CHECK(w.load_kg == l.load_kg);
  }
}

TEST_CASE("noiseless labelled features equal the planted response") {
  const auto spec = testutil::simple_spec();
  const auto s = synth::generate_session(spec, PhaseSchedule{}, {2.0, 2.5, 3.0}, 1);
  const auto samples = label_session(s.recording, PipelineConfig{});
  REQUIRE(samples.size() == 3 * 200);
  for (const auto& x : samples) {
    const auto expected = synth::load_response(spec, *x.label_kg);
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      // Residual filter transient 2.5 s after the step: below 5% of the step.
      CHECK(std::abs(x.features[c] - expected[c]) < 0.05 * expected[c]);
    }
  }
  // Deep inside the window the transient is gone.
  const auto& late = samples[199];
  const auto expected = synth::load_response(spec, 2.0);
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    CHECK(std::abs(late.features[c] - expected[c]) < 1e-3 * expected[c]);
  }
}

TEST_CASE("skip-filter labels pre-filtered data unchanged") {
  const auto s = make({2.0, 2.5}, 300.0);
  const auto filtered = dsp::filter_recording(s.recording, dsp::design_butterworth(0.3, 20.0));
  auto unflagged = filtered;
  unflagged.prefiltered = false;
  const auto a = label_session(filtered, PipelineConfig{});
  const auto b = label_session(unflagged, PipelineConfig{}, true);
  const auto c = label_session(s.recording, PipelineConfig{});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].features == b[i].features);
    CHECK(a[i].features == c[i].features);
  }
}

TEST_CASE("dataset file round-trips exactly") {
  testutil::TempDir dir;
  const auto samples = label_session(make({2.0, 2.5}, 300.0).recording, PipelineConfig{});
  auto with_unlabelled = samples;
  with_unlabelled[3].label_kg.reset();
  write_dataset(dir / "d.csv", with_unlabelled);
  const auto back = read_dataset(dir / "d.csv");
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].features == with_unlabelled[i].features);
    CHECK(back[i].label_kg == with_unlabelled[i].label_kg);
    CHECK(back[i].subject_id == with_unlabelled[i].subject_id);
    CHECK(back[i].frame_timestamp_ms == with_unlabelled[i].frame_timestamp_ms);
  }
}
