#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/fft.hpp"
#include "sepkit/rng.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

enum class SourceKind { kToneMix, kFilteredNoise, kArSpeechLike };

inline const char* source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::kToneMix: return "tone_mix";
    case SourceKind::kFilteredNoise: return "filtered_noise";
    case SourceKind::kArSpeechLike: return "ar_speechlike";
  }
  return "?";
}

inline SourceKind source_kind_from_name(const std::string& name) {
  if (name == "tone_mix") return SourceKind::kToneMix;
  if (name == "filtered_noise") return SourceKind::kFilteredNoise;
  if (name == "ar_speechlike") return SourceKind::kArSpeechLike;
  throw MalformedFile("unknown source kind '" + name + "'");
}

namespace detail {

// Two-pole resonator y(t) = x(t) + 2 r cos(theta) y(t-1) - r^2 y(t-2).
inline void biquad_pole_pair(std::vector<double>& samples, double radius, double angle) {
  const double a1 = 2.0 * radius * std::cos(angle);
  const double a2 = -radius * radius;
  double y1 = 0.0, y2 = 0.0;
  for (double& s : samples) {
    const double y = s + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    s = y;
  }
}

inline void normalize_rms(std::vector<double>& samples) {
  double energy = 0.0;
  for (double v : samples) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(samples.size()));
  if (rms > 0.0)
    for (double& v : samples) v /= rms;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace detail

// Deterministic synthetic test signals, always normalized to unit RMS.
//  - tone_mix: three random sinusoids.
//  - filtered_noise: white noise through two mild random resonators.
//  - ar_speechlike: order-8 all-pole filtered noise with a 4 Hz amplitude
//    modulation, mimicking a speech energy envelope.
inline Waveform synth_source(SourceKind kind, std::size_t length, int sample_rate,
                             std::uint64_t seed) {
  if (length == 0) throw ShapeError("synth_source: length must be positive");
  Rng rng(seed, 0x736f75726365ull);
  std::vector<double> samples(length, 0.0);
  const double fs = static_cast<double>(sample_rate);

  switch (kind) {
    case SourceKind::kToneMix: {
      for (int tone = 0; tone < 3; ++tone) {
        const double freq = rng.uniform(200.0, std::min(3400.0, 0.45 * fs));
        const double phase = rng.uniform(0.0, detail::kTwoPi);
        for (std::size_t t = 0; t < length; ++t)
          samples[t] += std::sin(detail::kTwoPi * freq * static_cast<double>(t) / fs + phase);
      }
      break;
    }
    case SourceKind::kFilteredNoise: {
      for (double& s : samples) s = rng.gaussian();
      for (int stage = 0; stage < 2; ++stage)
        detail::biquad_pole_pair(samples, rng.uniform(0.6, 0.9),
                                 rng.uniform(0.05 * detail::kTwoPi / 2, 0.8 * detail::kTwoPi / 2));
      break;
    }
    case SourceKind::kArSpeechLike: {
      for (double& s : samples) s = rng.gaussian();
      // Four conjugate pole pairs = order-8 all-pole shaping.
      for (int stage = 0; stage < 4; ++stage)
        detail::biquad_pole_pair(samples, rng.uniform(0.88, 0.97),
                                 rng.uniform(0.03 * detail::kTwoPi / 2, 0.85 * detail::kTwoPi / 2));
      const double mod_phase = rng.uniform(0.0, detail::kTwoPi);
      for (std::size_t t = 0; t < length; ++t) {
        const double envelope =
            0.55 + 0.45 * std::sin(detail::kTwoPi * 4.0 * static_cast<double>(t) / fs + mod_phase);
        samples[t] *= envelope;
      }
      break;
    }
  }
  detail::normalize_rms(samples);
  return Waveform(std::move(samples), sample_rate);
}

// Full linear convolution truncated to the source length, one output channel
// per impulse response. FFT-based; equals direct convolution to rounding.
inline MultichannelWaveform convolve_rir(const Waveform& source,
                                         const std::vector<Waveform>& channel_rirs) {
  if (channel_rirs.empty()) throw ShapeError("convolve_rir: need at least one channel");
  const std::size_t total = source.size();
  std::vector<Waveform> channels;
  channels.reserve(channel_rirs.size());
  for (const Waveform& rir : channel_rirs) {
    if (rir.size() == 0) throw ShapeError("convolve_rir: empty impulse response");
    if (!rir.all_finite()) throw NumericalFailure("convolve_rir: non-finite impulse response");
    const std::size_t fft_size = next_power_of_two(total + rir.size() - 1);
    std::vector<std::complex<double>> a(fft_size), b(fft_size);
    for (std::size_t i = 0; i < total; ++i) a[i] = source.samples[i];
    for (std::size_t i = 0; i < rir.size(); ++i) b[i] = rir.samples[i];
    fft_inplace(a);
    fft_inplace(b);
    for (std::size_t i = 0; i < fft_size; ++i) a[i] *= b[i];
    ifft_inplace(a);
    Waveform out(std::vector<double>(total, 0.0), source.sample_rate);
    for (std::size_t i = 0; i < total; ++i) out.samples[i] = a[i].real();
    channels.push_back(std::move(out));
  }
  return MultichannelWaveform(std::move(channels));
}

// Exponential-decay echo model: a unit direct-path impulse at the per-channel
// delay plus sparse reflections whose amplitude falls off geometrically.
inline std::vector<Waveform> synth_rir(std::size_t num_channels,
                                       const std::vector<std::size_t>& delays, double decay,
                                       std::size_t length, int sample_rate, std::uint64_t seed) {
  if (num_channels == 0) throw ShapeError("synth_rir: need at least one channel");
  if (delays.size() != num_channels)
    throw ShapeError("synth_rir: one direct-path delay per channel required");
  if (!(decay >= 0.0 && decay < 1.0)) throw ShapeError("synth_rir: decay must be in [0, 1)");
  std::vector<Waveform> rirs;
  rirs.reserve(num_channels);
  for (std::size_t d = 0; d < num_channels; ++d) {
    Rng rng(seed, 0x726972ull + d);
    if (delays[d] >= length) throw ShapeError("synth_rir: delay beyond impulse response length");
    std::vector<double> taps(length, 0.0);
    taps[delays[d]] = 1.0;
    double amplitude = decay;
    std::size_t pos = delays[d];
    constexpr int kReflections = 12;
    for (int m = 0; m < kReflections; ++m) {
      pos += 1 + rng.next_below(16);
      if (pos >= length || amplitude < 1e-12) break;
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      taps[pos] += sign * amplitude;
      amplitude *= decay;
    }
    rirs.emplace_back(std::move(taps), sample_rate);
  }
  return rirs;
}

struct MixtureScenario {
  std::size_t num_sources = 2;
  double target_sdr_min_db = -2.5;
  double target_sdr_max_db = 2.5;
  double snr_min_db = 20.0;
  double snr_max_db = 30.0;
  bool noiseless = false;
  // rirs[source][channel]; empty means single-channel anechoic mixing.
  std::vector<std::vector<Waveform>> rirs;
  std::size_t reference_channel = 0;
  std::uint64_t seed = 0;
};

struct MixtureExample {
  MultichannelWaveform mixture;
  std::vector<MultichannelWaveform> clean_images;
  MultichannelWaveform noise;
  struct Metadata {
    std::vector<double> source_gains;
    std::vector<double> drawn_sdr_db;  // [0] is the 0 dB anchor
    double drawn_snr_db = 0.0;
    double noise_gain = 0.0;
    std::uint64_t seed = 0;
    std::size_t reference_channel = 0;
  } metadata;
};

// Mixes K dry sources following the scenario: sources are zero-padded to the
// longest, source 1 anchors the mixing SDR at 0 dB, each further source is
// scaled so the reference-channel image energies meet the drawn SDR, and
// white noise is scaled against the summed sources. The stored mixture is
// exactly sum(images) + noise, accumulated in ascending source order.
inline MixtureExample mix(const std::vector<Waveform>& sources, const MixtureScenario& scenario) {
  if (sources.empty()) throw ShapeError("mix: no sources");
  if (scenario.num_sources != sources.size())
    throw ShapeError("mix: scenario expects " + std::to_string(scenario.num_sources) +
                     " sources, got " + std::to_string(sources.size()));
  if (!scenario.rirs.empty() && scenario.rirs.size() != sources.size())
    throw ShapeError("mix: need one impulse-response set per source");
  if (scenario.target_sdr_min_db > scenario.target_sdr_max_db ||
      scenario.snr_min_db > scenario.snr_max_db)
    throw ShapeError("mix: scenario ranges must be ordered");

  const int sample_rate = sources.front().sample_rate;
  std::size_t longest = 0;
  for (const Waveform& s : sources) longest = std::max(longest, s.size());

  std::vector<Waveform> padded;
  padded.reserve(sources.size());
  for (const Waveform& s : sources) {
    if (s.sample_rate != sample_rate) throw ShapeError("mix: sources disagree on sample rate");
    Waveform p = s;
    p.samples.resize(longest, 0.0);
    padded.push_back(std::move(p));
  }

  const std::size_t num_channels = scenario.rirs.empty() ? 1 : scenario.rirs.front().size();
  const std::size_t reference = scenario.reference_channel;
  if (reference >= num_channels) throw ShapeError("mix: reference channel out of range");

  // Raw (unscaled) images.
  std::vector<MultichannelWaveform> images;
  images.reserve(padded.size());
  for (std::size_t k = 0; k < padded.size(); ++k) {
    if (scenario.rirs.empty()) {
      images.emplace_back(std::vector<Waveform>{padded[k]}, reference);
    } else {
      if (scenario.rirs[k].size() != num_channels)
        throw ShapeError("mix: impulse-response channel counts differ");
      MultichannelWaveform image = convolve_rir(padded[k], scenario.rirs[k]);
      image.reference_channel = reference;
      images.push_back(std::move(image));
    }
  }

  Rng rng(scenario.seed, 0x6d6978ull);
  MixtureExample out;
  out.metadata.seed = scenario.seed;
  out.metadata.reference_channel = reference;
  out.metadata.drawn_sdr_db.assign(padded.size(), 0.0);
  out.metadata.source_gains.assign(padded.size(), 1.0);

  const double anchor_energy = images.front().reference().energy();
  if (anchor_energy <= 0.0) throw DegenerateSource("mix: source 1 has zero energy");
  for (std::size_t k = 1; k < images.size(); ++k) {
    const double energy = images[k].reference().energy();
    if (energy <= 0.0)
      throw DegenerateSource("mix: source " + std::to_string(k + 1) + " has zero energy");
    const double sdr_db = rng.uniform(scenario.target_sdr_min_db, scenario.target_sdr_max_db);
    out.metadata.drawn_sdr_db[k] = sdr_db;
    out.metadata.source_gains[k] =
        std::sqrt(anchor_energy * std::pow(10.0, -sdr_db / 10.0) / energy);
  }
  for (std::size_t k = 0; k < images.size(); ++k) {
    const double gain = out.metadata.source_gains[k];
    for (Waveform& ch : images[k].channels)
      for (double& v : ch.samples) v *= gain;
  }

  // Noise against the summed sources at the reference channel.
  std::vector<Waveform> noise_channels(num_channels,
                                       Waveform(std::vector<double>(longest, 0.0), sample_rate));
  if (scenario.noiseless) {
    out.metadata.drawn_snr_db = std::numeric_limits<double>::infinity();
    out.metadata.noise_gain = 0.0;
  } else {
    for (std::size_t d = 0; d < num_channels; ++d)
      for (double& v : noise_channels[d].samples) v = rng.gaussian();
    double sum_energy = 0.0;
    for (std::size_t t = 0; t < longest; ++t) {
      double acc = 0.0;
      for (const MultichannelWaveform& img : images)
        acc += img.channels[reference].samples[t];
      sum_energy += acc * acc;
    }
    const double snr_db = rng.uniform(scenario.snr_min_db, scenario.snr_max_db);
    const double noise_energy = noise_channels[reference].energy();
    if (noise_energy <= 0.0) throw DegenerateSource("mix: generated noise has zero energy");
    out.metadata.drawn_snr_db = snr_db;
    out.metadata.noise_gain =
        std::sqrt(sum_energy * std::pow(10.0, -snr_db / 10.0) / noise_energy);
    for (Waveform& ch : noise_channels)
      for (double& v : ch.samples) v *= out.metadata.noise_gain;
  }

  // Fixed summation order: ascending source index, then noise.
  std::vector<Waveform> mixture_channels(num_channels,
                                         Waveform(std::vector<double>(longest, 0.0), sample_rate));
  for (std::size_t d = 0; d < num_channels; ++d) {
    for (std::size_t t = 0; t < longest; ++t) {
      double acc = 0.0;
      for (const MultichannelWaveform& img : images) acc += img.channels[d].samples[t];
      acc += noise_channels[d].samples[t];
      mixture_channels[d].samples[t] = acc;
    }
  }

  out.mixture = MultichannelWaveform(std::move(mixture_channels), reference);
  out.clean_images = std::move(images);
  out.noise = MultichannelWaveform(std::move(noise_channels), reference);
  return out;
}

}  // namespace sepkit
