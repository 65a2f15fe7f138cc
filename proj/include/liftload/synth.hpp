#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "liftload/core.hpp"

namespace liftload::synth {

enum class Response { Affine, Saturating };

// One synthetic subject. Frames are
//   offset + response(load) + noise + drift * t
// with response(load) = L * load (affine) or
// L * s * (1 - exp(-load / s)) (saturating, s = saturation_kg).
struct SynthSpec {
  std::string subject_id = "S1";
  FeatureVector offset{};    // standing body-weight pressure, raw units
  FeatureVector response{};  // raw units per kg
  Response kind = Response::Affine;
  double saturation_kg = 15.0;
  double noise_sigma = 0.0;  // Gaussian, raw units, independent per frame and channel
  double drift_per_s = 0.0;  // raw units per second, every channel
  std::uint64_t seed = 1;

  // Throws InvalidSpec unless every value is finite, offsets and noise are
  // non-negative and the noiseless pressure stays within [0, full scale]
  // across the 2-10 kg ladder.
  void validate() const;
};

// Noiseless channel increment for `load_kg`.
FeatureVector load_response(const SynthSpec& spec, double load_kg);

struct SynthSession {
  SessionRecording recording;
  std::vector<double> frame_load_kg;  // load carried at each frame (0 outside lift)
  std::vector<PhaseKind> frame_phase;
};

// One frame every 50 ms covering every phase of every ladder cycle. Noisy
// samples are clamped into [0, full scale]. Deterministic in (spec.seed,
// session_index).
SynthSession generate_session(const SynthSpec& spec, const PhaseSchedule& schedule,
                              const std::vector<double>& ladder, int session_index);

// `count` subjects with distinct offsets and load-response directions.
std::vector<SynthSpec> make_archetypes(std::size_t count, std::uint64_t seed,
                                       double noise_sigma = 0.0,
                                       Response kind = Response::Affine);

struct CorpusOptions {
  std::size_t subjects = 5;
  std::size_t sessions = 3;
  double noise_sigma = 0.01 * kFullScaleRaw;
  double drift_per_s = 0.0;
  Response kind = Response::Affine;
  std::uint64_t seed = 2024;
};

// Every session of every archetype on the full ascending ladder.
std::vector<SynthSession> generate_corpus(const CorpusOptions& opts);

}  // namespace liftload::synth
