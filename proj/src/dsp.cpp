#include "liftload/dsp.hpp"

#include <cmath>
#include <numbers>

namespace liftload::dsp {

bool BiquadCoefficients::is_stable() const {
  // Jury conditions for z^2 + a1 z + a2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

std::complex<double> BiquadCoefficients::response(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

double BiquadCoefficients::magnitude_db(double freq_hz, double sample_rate_hz) const {
  return 20.0 * std::log10(std::abs(response(freq_hz, sample_rate_hz)));
}

BiquadCoefficients design_butterworth(double cutoff_hz, double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff, "cutoff must satisfy 0 < fc < fs/2");
  }
  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
  const double k2 = k * k;
  const double q_inv = std::numbers::sqrt2;  // 1/Q for Q = 1/sqrt(2)
  const double norm = 1.0 / (1.0 + k * q_inv + k2);

  BiquadCoefficients c;
  c.b0 = k2 * norm;
  c.b1 = 2.0 * c.b0;
  c.b2 = c.b0;
  c.a1 = 2.0 * (k2 - 1.0) * norm;
  c.a2 = (1.0 - k * q_inv + k2) * norm;
  return c;
}

std::vector<double> filter_channel(std::span<const double> signal, const BiquadCoefficients& c) {
  std::vector<double> out;
  out.reserve(signal.size());
  if (signal.empty()) return out;
  BiquadFilter f(c);
  f.prime(signal.front());
  for (double x : signal) out.push_back(f.step(x));
  return out;
}

SessionRecording filter_recording(const SessionRecording& rec, const BiquadCoefficients& c) {
  SessionRecording out = rec;
  if (rec.frames.empty()) return out;
  std::vector<double> column(rec.frames.size());
  for (std::size_t ch = 0; ch < kChannelCount; ++ch) {
    for (std::size_t i = 0; i < rec.frames.size(); ++i) column[i] = rec.frames[i].channels[ch];
    const auto filtered = filter_channel(column, c);
    for (std::size_t i = 0; i < rec.frames.size(); ++i) out.frames[i].channels[ch] = filtered[i];
  }
  out.prefiltered = true;
  return out;
}

FeatureVector baseline_mean(std::span<const Frame> baseline_frames) {
  if (baseline_frames.empty()) throw Error(ErrorCode::EmptyWindow, "baseline window is empty");
  FeatureVector sum{};
  for (const auto& f : baseline_frames) {
    for (std::size_t ch = 0; ch < kChannelCount; ++ch) sum[ch] += f.channels[ch];
  }
  const double n = static_cast<double>(baseline_frames.size());
  for (auto& v : sum) v /= n;
  return sum;
}

std::vector<FeatureVector> differential_features(std::span<const Frame> lift_frames,
                                                 const FeatureVector& baseline) {
  std::vector<FeatureVector> out;
  out.reserve(lift_frames.size());
  for (const auto& f : lift_frames) {
    FeatureVector v;
    for (std::size_t ch = 0; ch < kChannelCount; ++ch) v[ch] = f.channels[ch] - baseline[ch];
    out.push_back(v);
  }
  return out;
}

}  // namespace liftload::dsp
