#include "liftload/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace liftload::synth {

namespace {

bool all_finite(const FeatureVector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void SynthSpec::validate() const {
  if (!all_finite(offset) || !all_finite(response) || !std::isfinite(noise_sigma) ||
      !std::isfinite(drift_per_s) || !std::isfinite(saturation_kg)) {
    throw Error(ErrorCode::InvalidSpec, "synthetic spec has non-finite values");
  }
  if (noise_sigma < 0.0) throw Error(ErrorCode::InvalidSpec, "noise sigma must be >= 0");
  if (kind == Response::Saturating && !(saturation_kg > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "saturation scale must be > 0");
  }
  for (double load : {0.0, kMinLoadKg, kMaxLoadKg}) {
    const auto inc = load_response(*this, load);
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const double p = offset[c] + inc[c];
      if (offset[c] < 0.0 || p < 0.0 || p > kFullScaleRaw) {
        throw Error(ErrorCode::InvalidSpec,
                    "channel " + std::to_string(c) + " leaves [0, full scale] at " +
                        std::to_string(load) + " kg");
      }
    }
  }
}

FeatureVector load_response(const SynthSpec& spec, double load_kg) {
  FeatureVector out{};
  const double effective = spec.kind == Response::Affine
                               ? load_kg
                               : spec.saturation_kg * (1.0 - std::exp(-load_kg / spec.saturation_kg));
  for (std::size_t c = 0; c < kChannelCount; ++c) out[c] = spec.response[c] * effective;
  return out;
}

SynthSession generate_session(const SynthSpec& spec, const PhaseSchedule& schedule,
                              const std::vector<double>& ladder, int session_index) {
  spec.validate();
  if (ladder.empty()) throw Error(ErrorCode::InvalidSpec, "load ladder is empty");
  if (schedule.sequence.empty() || schedule.phase_duration_ms() <= 0) {
    throw Error(ErrorCode::InvalidSpec, "schedule needs phases of positive duration");
  }

  SynthSession out;
  auto& rec = out.recording;
  rec.subject_id = spec.subject_id;
  rec.session_index = session_index;
  rec.schedule = schedule;
  rec.load_ladder = ladder;

  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(session_index)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::int64_t total_ms = schedule.cycle_duration_ms() * static_cast<std::int64_t>(ladder.size());
  const std::size_t n = static_cast<std::size_t>(total_ms / kFramePeriodMs);
  rec.frames.reserve(n);
  std::vector<FeatureVector> responses;
  for (double kg : ladder) responses.push_back(load_response(spec, kg));

  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t rel = static_cast<std::int64_t>(k) * kFramePeriodMs;
    const auto cycle = static_cast<std::size_t>(rel / schedule.cycle_duration_ms());
    const auto phase = static_cast<std::size_t>((rel % schedule.cycle_duration_ms()) /
                                                schedule.phase_duration_ms());
    const PhaseKind kind = schedule.sequence[phase];
    const bool loaded = kind == PhaseKind::Lift;
    const double t_s = static_cast<double>(rel) / 1000.0;

    Frame f;
    f.timestamp_ms = schedule.start_ms + rel;
    f.channels.resize(kChannelCount);
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      double v = spec.offset[c] + spec.drift_per_s * t_s;
      if (loaded) v += responses[cycle][c];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
      f.channels[c] = std::clamp(v, 0.0, kFullScaleRaw);
    }
    rec.frames.push_back(std::move(f));
    out.frame_load_kg.push_back(loaded ? ladder[cycle] : 0.0);
    out.frame_phase.push_back(kind);
  }
  return out;
}

std::vector<SynthSpec> make_archetypes(std::size_t count, std::uint64_t seed, double noise_sigma,
                                       Response kind) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Shared plantar pattern, perturbed per subject.
  FeatureVector base_offset{}, base_response{};
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    base_offset[c] = 4000.0 + 8000.0 * unit(rng);
    base_response[c] = 150.0 + 200.0 * unit(rng);
  }
  std::vector<SynthSpec> specs;
  for (std::size_t s = 0; s < count; ++s) {
    SynthSpec spec;
    spec.subject_id = "S" + std::to_string(s + 1);
    spec.kind = kind;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed * 1000003ULL + s + 1;
    const double mass = 0.8 + 0.4 * unit(rng);
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      spec.offset[c] = base_offset[c] * mass * (0.85 + 0.3 * unit(rng));
      spec.response[c] = base_response[c] * (0.7 + 0.6 * unit(rng));
    }
    spec.validate();
    specs.push_back(spec);
  }
  return specs;
}

std::vector<SynthSession> generate_corpus(const CorpusOptions& opts) {
  auto specs = make_archetypes(opts.subjects, opts.seed, opts.noise_sigma, opts.kind);
  std::vector<SynthSession> out;
  const auto ladder = full_load_ladder();
  for (auto& spec : specs) {
    spec.drift_per_s = opts.drift_per_s;
    for (std::size_t s = 1; s <= opts.sessions; ++s) {
      out.push_back(generate_session(spec, PhaseSchedule{}, ladder, static_cast<int>(s)));
    }
  }
  return out;
}

}  // namespace liftload::synth
