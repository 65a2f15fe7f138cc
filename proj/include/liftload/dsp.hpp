#pragma once

#include <complex>
#include <span>
#include <vector>

#include "liftload/core.hpp"

namespace liftload::dsp {

// Second-order section with a0 normalised to 1:
//   H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct BiquadCoefficients {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
  bool is_stable() const;
  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
  double magnitude_db(double freq_hz, double sample_rate_hz) const;
};

// Butterworth low-pass via the bilinear transform with prewarping.
// Throws InvalidCutoff unless 0 < cutoff_hz < sample_rate_hz / 2.
BiquadCoefficients design_butterworth(double cutoff_hz, double sample_rate_hz);

// Transposed direct-form II biquad.
class BiquadFilter {
public:
  explicit BiquadFilter(const BiquadCoefficients& c) : c_(c) {}

  // Loads the steady state for a constant input `x`, so feeding `x`
  // reproduces `x` from the first sample.
  void prime(double x) {
    z2_ = (c_.b2 - c_.a2) * x;
    z1_ = (1.0 - c_.b0) * x;
  }

  void reset() { z1_ = z2_ = 0.0; }

  double step(double x) {
    const double y = c_.b0 * x + z1_;
    z1_ = c_.b1 * x - c_.a1 * y + z2_;
    z2_ = c_.b2 * x - c_.a2 * y;
    return y;
  }

private:
  BiquadCoefficients c_;
  double z1_ = 0.0;
  double z2_ = 0.0;
};

// Causal filtering, state primed with the first sample.
std::vector<double> filter_channel(std::span<const double> signal, const BiquadCoefficients& c);

// Filters each channel of the recording independently.
SessionRecording filter_recording(const SessionRecording& rec, const BiquadCoefficients& c);

// Per-channel mean over a baseline window. Throws EmptyWindow.
FeatureVector baseline_mean(std::span<const Frame> baseline_frames);

// One feature vector per lift frame: channels minus baseline.
std::vector<FeatureVector> differential_features(std::span<const Frame> lift_frames,
                                                 const FeatureVector& baseline);

}  // namespace liftload::dsp
