#include "liftload/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "liftload/ingest.hpp"

namespace liftload {

using nlohmann::json;

namespace {

std::size_t baseline_phase_index(const PhaseSchedule& s) {
  const auto it = std::find(s.sequence.begin(), s.sequence.end(), PhaseKind::Baseline);
  if (it == s.sequence.end()) {
    throw Error(ErrorCode::ScheduleMismatch, "schedule has no baseline phase");
  }
  return static_cast<std::size_t>(it - s.sequence.begin());
}

// Mean of the centred baseline window over the phase's frames.
FeatureVector window_reference(std::span<const Frame> phase_frames, const PipelineConfig& cfg) {
  const auto w = ingest::centered_window({0, phase_frames.size()}, cfg.baseline_window_frames());
  return dsp::baseline_mean(phase_frames.subspan(w.begin, w.size()));
}

void check_frame(const Frame& f) {
  if (f.channels.size() != kChannelCount) {
    throw Error(ErrorCode::NonFiniteInput, "frame at " + std::to_string(f.timestamp_ms) +
                                               " ms has " + std::to_string(f.channels.size()) +
                                               " channels");
  }
  for (double v : f.channels) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteInput,
                  "frame at " + std::to_string(f.timestamp_ms) + " ms has a non-finite channel");
    }
  }
}

double predict_frame(const Model& model, const Frame& filtered, const FeatureVector& reference) {
  FeatureVector x;
  for (std::size_t c = 0; c < kChannelCount; ++c) x[c] = filtered.channels[c] - reference[c];
  return predict(model, x);
}

}  // namespace

std::optional<PhaseKind> phase_at(const PhaseSchedule& schedule, std::int64_t t_ms) {
  const std::int64_t rel = t_ms - schedule.start_ms;
  if (rel < 0 || schedule.cycle_duration_ms() <= 0) return std::nullopt;
  const auto idx = static_cast<std::size_t>((rel % schedule.cycle_duration_ms()) /
                                            schedule.phase_duration_ms());
  return schedule.sequence[idx];
}

std::string estimate_to_json(const StreamEstimate& e) {
  json j;
  j["t_ms"] = e.t_ms;
  j["load_kg"] = e.window.load_kg;
  j["window_stats"] = {{"min", e.window.min},
                       {"max", e.window.max},
                       {"count", e.window.count},
                       {"kept", e.window.kept}};
  j["phase"] = e.phase ? json(std::string(to_string(*e.phase))) : json(nullptr);
  return j.dump();
}

StreamEstimate estimate_from_json(const std::string& line) {
  try {
    const auto j = json::parse(line);
    StreamEstimate e;
    e.t_ms = j.at("t_ms").get<std::int64_t>();
    e.window.load_kg = j.at("load_kg").get<double>();
    const auto& w = j.at("window_stats");
    e.window.min = w.at("min").get<double>();
    e.window.max = w.at("max").get<double>();
    e.window.count = w.at("count").get<std::size_t>();
    e.window.kept = w.at("kept").get<std::size_t>();
    if (!j.at("phase").is_null()) e.phase = phase_from_string(j.at("phase").get<std::string>());
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ParseError, std::string("estimate line: ") + ex.what());
  }
}

StreamEstimator::StreamEstimator(const Model& model, const PipelineConfig& cfg,
                                 const PhaseSchedule& schedule, bool prefiltered)
    : model_(model),
      cfg_(cfg),
      schedule_(schedule),
      prefiltered_(prefiltered),
      aggregator_(cfg.aggregation_count, cfg.trim_low, cfg.trim_high) {
  cfg_.validate();
  baseline_phase_index(schedule_);
  const auto coeffs = dsp::design_butterworth(cfg_.cutoff_hz, cfg_.sample_rate_hz);
  filters_.assign(kChannelCount, dsp::BiquadFilter(coeffs));
}

void StreamEstimator::close_baseline() {
  if (!baseline_buffer_.empty()) reference_ = window_reference(baseline_buffer_, cfg_);
  baseline_buffer_.clear();
  baseline_end_ms_.reset();
}

std::optional<StreamEstimate> StreamEstimator::push(const Frame& raw) {
  check_frame(raw);
  Frame filtered = raw;
  if (!prefiltered_) {
    if (!started_) {
      for (std::size_t c = 0; c < kChannelCount; ++c) filters_[c].prime(raw.channels[c]);
    }
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      filtered.channels[c] = filters_[c].step(raw.channels[c]);
    }
  }
  if (!started_) {
    std::copy(filtered.channels.begin(), filtered.channels.end(), reference_.begin());
    started_ = true;
  }

  if (baseline_end_ms_ && raw.timestamp_ms >= *baseline_end_ms_) close_baseline();

  const auto phase = phase_at(schedule_, raw.timestamp_ms);
  if (phase == PhaseKind::Baseline) {
    if (!baseline_end_ms_) {
      const std::int64_t rel = raw.timestamp_ms - schedule_.start_ms;
      const auto cycle = static_cast<std::size_t>(rel / schedule_.cycle_duration_ms());
      baseline_end_ms_ = schedule_.phase_start_ms(cycle, baseline_phase_index(schedule_)) +
                         schedule_.phase_duration_ms();
    }
    baseline_buffer_.push_back(filtered);
  }

  const double y = predict_frame(model_, filtered, reference_);
  if (auto w = aggregator_.push(y)) return StreamEstimate{raw.timestamp_ms, *w, phase};
  return std::nullopt;
}

std::vector<StreamEstimate> offline_estimates(const SessionRecording& rec, const Model& model,
                                              const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<StreamEstimate> out;
  if (rec.frames.empty()) return out;
  for (const auto& f : rec.frames) check_frame(f);
  const SessionRecording filtered =
      rec.prefiltered
          ? rec
          : dsp::filter_recording(rec, dsp::design_butterworth(cfg.cutoff_hz, cfg.sample_rate_hz));
  const auto& frames = filtered.frames;
  const auto& sched = rec.schedule;
  const std::size_t b_idx = baseline_phase_index(sched);

  auto first_at_or_after = [&](std::int64_t t) {
    return static_cast<std::size_t>(
        std::lower_bound(frames.begin(), frames.end(), t,
                         [](const Frame& f, std::int64_t v) { return f.timestamp_ms < v; }) -
        frames.begin());
  };

  // Reference switch points: (first frame index using it, reference).
  std::vector<std::pair<std::size_t, FeatureVector>> switches;
  FeatureVector first{};
  std::copy(frames.front().channels.begin(), frames.front().channels.end(), first.begin());
  switches.emplace_back(0, first);
  for (std::size_t c = 0;; ++c) {
    const std::int64_t start = sched.phase_start_ms(c, b_idx);
    const std::int64_t end = start + sched.phase_duration_ms();
    const std::size_t begin_i = first_at_or_after(start);
    const std::size_t end_i = first_at_or_after(end);
    if (end_i >= frames.size()) break;  // phase never closes inside the recording
    if (end_i > begin_i) {
      switches.emplace_back(
          end_i, window_reference(std::span<const Frame>(frames).subspan(begin_i, end_i - begin_i), cfg));
    }
  }

  Aggregator agg(cfg.aggregation_count, cfg.trim_low, cfg.trim_high);
  std::size_t s = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    while (s + 1 < switches.size() && switches[s + 1].first <= i) ++s;
    const double y = predict_frame(model, frames[i], switches[s].second);
    if (auto w = agg.push(y)) {
      out.push_back({frames[i].timestamp_ms, *w, phase_at(sched, frames[i].timestamp_ms)});
    }
  }
  return out;
}

}  // namespace liftload
