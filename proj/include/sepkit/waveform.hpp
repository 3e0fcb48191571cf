#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"

namespace sepkit {

// Single-channel time-domain signal.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  double& operator[](std::size_t i) { return samples[i]; }
  double operator[](std::size_t i) const { return samples[i]; }

  double energy() const {
    double e = 0.0;
    for (double v : samples) e += v * v;
    return e;
  }

  double rms() const { return samples.empty() ? 0.0 : std::sqrt(energy() / samples.size()); }

  bool all_finite() const {
    for (double v : samples)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double dot(const Waveform& a, const Waveform& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.samples[i] * b.samples[i];
  return s;
}

inline void require_same_length(const Waveform& a, const Waveform& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
}

// Equal-length channels sharing one sample rate.
struct MultichannelWaveform {
  std::vector<Waveform> channels;
  std::size_t reference_channel = 0;

  MultichannelWaveform() = default;
  explicit MultichannelWaveform(std::vector<Waveform> ch, std::size_t ref = 0)
      : channels(std::move(ch)), reference_channel(ref) {
    validate();
  }

  std::size_t num_channels() const { return channels.size(); }
  std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  int sample_rate() const { return channels.empty() ? 0 : channels.front().sample_rate; }

  const Waveform& reference() const { return channels[reference_channel]; }

  void validate() const {
    if (channels.empty()) throw ShapeError("multichannel waveform needs at least one channel");
    if (reference_channel >= channels.size())
      throw ShapeError("reference channel out of range");
    for (const Waveform& ch : channels) {
      if (ch.size() != channels.front().size())
        throw ShapeError("channel lengths differ");
      if (ch.sample_rate != channels.front().sample_rate)
        throw ShapeError("channel sample rates differ");
    }
  }
};

}  // namespace sepkit
