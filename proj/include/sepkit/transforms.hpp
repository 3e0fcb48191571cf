#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/framing.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/rng.hpp"
#include "sepkit/stft.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

enum class TransformKind { kStft, kLearned };

enum class LatentLayout { kMagnitude, kRealImagSplit, kLearned };

inline const char* layout_name(LatentLayout l) {
  switch (l) {
    case LatentLayout::kMagnitude: return "magnitude";
    case LatentLayout::kRealImagSplit: return "realimag_split";
    case LatentLayout::kLearned: return "learned";
  }
  return "?";
}

inline LatentLayout layout_from_name(const std::string& name) {
  if (name == "magnitude") return LatentLayout::kMagnitude;
  if (name == "realimag_split") return LatentLayout::kRealImagSplit;
  if (name == "learned") return LatentLayout::kLearned;
  throw MalformedFile("unknown latent layout '" + name + "'");
}

// Fixed STFT codec or a learned filterbank codec. For the learned kind the
// frames are rectangular-windowed; the kernels subsume any windowing.
struct TransformSpec {
  TransformKind kind = TransformKind::kStft;
  FrameSpec frame;
  std::size_t feature_dim = 0;  // F
  std::size_t fft_size = 0;     // stft only
  Matrix encoder_kernels;       // learned only, F x window_len
  Matrix decoder_kernels;       // learned only, window_len x F

  static TransformSpec stft_spec(const FrameSpec& frame_spec, std::size_t fft_size) {
    if (fft_size < frame_spec.window_len)
      throw ShapeError("stft transform: fft_size must be >= window_len");
    TransformSpec spec;
    spec.kind = TransformKind::kStft;
    spec.frame = frame_spec;
    spec.fft_size = fft_size;
    spec.feature_dim = fft_size / 2 + 1;
    return spec;
  }

  void require_learned_shapes() const {
    if (kind != TransformKind::kLearned)
      throw ShapeError("transform: learned codec required");
    if (encoder_kernels.rows != feature_dim || encoder_kernels.cols != frame.window_len)
      throw ShapeError("transform: encoder kernels must be feature_dim x window_len");
    if (decoder_kernels.rows != frame.window_len || decoder_kernels.cols != feature_dim)
      throw ShapeError("transform: decoder kernels must be window_len x feature_dim");
  }
};

// Transform-domain frames. realimag_split stores real parts in columns
// [0, F) and imaginary parts in [F, 2F).
struct LatentSignal {
  Matrix values;  // num_frames x F'
  LatentLayout layout = LatentLayout::kMagnitude;
  int sample_rate = 8000;
};

struct StftMagnitude {
  LatentSignal magnitude;
  Matrix phase;  // num_frames x F, radians
};

inline StftMagnitude encode_stft_mag(const Waveform& signal, const TransformSpec& spec) {
  const ComplexSpectrogram y = stft(signal, spec.frame, spec.fft_size);
  StftMagnitude out;
  out.magnitude.layout = LatentLayout::kMagnitude;
  out.magnitude.sample_rate = signal.sample_rate;
  out.magnitude.values = Matrix(y.num_frames(), y.num_bins());
  out.phase = Matrix(y.num_frames(), y.num_bins());
  for (std::size_t l = 0; l < y.num_frames(); ++l)
    for (std::size_t f = 0; f < y.num_bins(); ++f) {
      out.magnitude.values(l, f) = std::abs(y.bins(l, f));
      out.phase(l, f) = std::arg(y.bins(l, f));
    }
  return out;
}

inline LatentSignal encode_stft_ri(const Waveform& signal, const TransformSpec& spec) {
  const ComplexSpectrogram y = stft(signal, spec.frame, spec.fft_size);
  LatentSignal out;
  out.layout = LatentLayout::kRealImagSplit;
  out.sample_rate = signal.sample_rate;
  out.values = Matrix(y.num_frames(), 2 * y.num_bins());
  for (std::size_t l = 0; l < y.num_frames(); ++l)
    for (std::size_t f = 0; f < y.num_bins(); ++f) {
      out.values(l, f) = y.bins(l, f).real();
      out.values(l, f + y.num_bins()) = y.bins(l, f).imag();
    }
  return out;
}

inline ComplexSpectrogram latent_ri_to_spectrogram(const LatentSignal& latent,
                                                   const TransformSpec& spec) {
  if (latent.layout != LatentLayout::kRealImagSplit)
    throw ShapeError("latent_ri_to_spectrogram: realimag_split layout required");
  if (latent.values.cols % 2 != 0)
    throw ShapeError("latent_ri_to_spectrogram: odd column count");
  const std::size_t bins = latent.values.cols / 2;
  ComplexSpectrogram out;
  out.frame_spec = spec.frame;
  out.fft_size = spec.fft_size;
  out.sample_rate = latent.sample_rate;
  out.bins = ComplexMatrix(latent.values.rows, bins);
  for (std::size_t l = 0; l < latent.values.rows; ++l)
    for (std::size_t f = 0; f < bins; ++f)
      out.bins(l, f) = {latent.values(l, f), latent.values(l, f + bins)};
  return out;
}

// Pre-activation learned encoding: values(l, f) = sum_i frame(l, i) * u(f, i).
inline Matrix encode_learned_pre(const Waveform& signal, const TransformSpec& spec) {
  spec.require_learned_shapes();
  const FramedSignal framed = frame(signal, spec.frame);
  Matrix out(framed.num_frames(), spec.feature_dim);
  for (std::size_t l = 0; l < framed.num_frames(); ++l) {
    const double* y = framed.frames.row(l);
    for (std::size_t f = 0; f < spec.feature_dim; ++f) {
      const double* u = spec.encoder_kernels.row(f);
      double acc = 0.0;
      for (std::size_t i = 0; i < spec.frame.window_len; ++i) acc += y[i] * u[i];
      out(l, f) = acc;
    }
  }
  return out;
}

inline LatentSignal encode_learned(const Waveform& signal, const TransformSpec& spec) {
  LatentSignal out;
  out.layout = LatentLayout::kLearned;
  out.sample_rate = signal.sample_rate;
  out.values = encode_learned_pre(signal, spec);
  for (double& v : out.values.data) v = std::max(0.0, v);
  return out;
}

// Per-frame synthesis frame(l, i) = sum_f du(i, f) * latent(l, f), summed by
// plain overlap-add (no normalization: the decoder formula has none).
inline Waveform decode_learned(const LatentSignal& latent, const TransformSpec& spec,
                               std::size_t out_len) {
  spec.require_learned_shapes();
  if (latent.values.cols != spec.feature_dim)
    throw ShapeError("decode_learned: latent feature dim does not match kernels");
  FramedSignal synth;
  synth.spec = spec.frame;
  synth.sample_rate = latent.sample_rate;
  synth.frames = Matrix(latent.values.rows, spec.frame.window_len);
  for (std::size_t l = 0; l < latent.values.rows; ++l) {
    const double* z = latent.values.row(l);
    for (std::size_t i = 0; i < spec.frame.window_len; ++i) {
      const double* du = spec.decoder_kernels.row(i);
      double acc = 0.0;
      for (std::size_t f = 0; f < spec.feature_dim; ++f) acc += du[f] * z[f];
      synth.frames(l, i) = acc;
    }
  }
  return overlap_add(synth, out_len);
}

// Assembles a complex spectrogram from the latent (magnitude needs the
// mixture phase; realimag_split carries its own) and inverts it.
inline Waveform decode_stft(const LatentSignal& latent, const TransformSpec& spec,
                            std::size_t out_len, const Matrix* mixture_phase = nullptr) {
  if (spec.kind != TransformKind::kStft)
    throw ShapeError("decode_stft: stft transform required");
  ComplexSpectrogram spectrum;
  if (latent.layout == LatentLayout::kMagnitude) {
    if (mixture_phase == nullptr)
      throw MissingPhase("decode_stft: magnitude layout requires a phase matrix");
    require_same_shape(latent.values, *mixture_phase, "decode_stft");
    spectrum.frame_spec = spec.frame;
    spectrum.fft_size = spec.fft_size;
    spectrum.sample_rate = latent.sample_rate;
    spectrum.bins = ComplexMatrix(latent.values.rows, latent.values.cols);
    for (std::size_t l = 0; l < latent.values.rows; ++l)
      for (std::size_t f = 0; f < latent.values.cols; ++f)
        spectrum.bins(l, f) = std::polar(latent.values(l, f), (*mixture_phase)(l, f));
  } else if (latent.layout == LatentLayout::kRealImagSplit) {
    spectrum = latent_ri_to_spectrogram(latent, spec);
  } else {
    throw ShapeError("decode_stft: latent has learned layout");
  }
  if (spectrum.num_bins() != spec.fft_size / 2 + 1)
    throw ShapeError("decode_stft: latent width does not match fft_size");
  return istft(spectrum, out_len);
}

// Kernels i.i.d. uniform(-k, k) with k = sqrt(1/window_len); deterministic
// per seed.
inline TransformSpec init_learned(std::size_t feature_dim, std::size_t window_len,
                                  std::size_t advance, std::uint64_t seed) {
  if (feature_dim == 0 || window_len == 0)
    throw ShapeError("init_learned: feature_dim and window_len must be positive");
  TransformSpec spec;
  spec.kind = TransformKind::kLearned;
  spec.frame.window_len = window_len;
  spec.frame.advance = advance;
  spec.frame.window = Window::kRect;
  spec.feature_dim = feature_dim;
  const double bound = std::sqrt(1.0 / static_cast<double>(window_len));
  Rng rng(seed, /*stream=*/0x6b65726e656c73ull);
  spec.encoder_kernels = Matrix(feature_dim, window_len);
  for (double& v : spec.encoder_kernels.data) v = rng.uniform(-bound, bound);
  spec.decoder_kernels = Matrix(window_len, feature_dim);
  for (double& v : spec.decoder_kernels.data) v = rng.uniform(-bound, bound);
  return spec;
}

}  // namespace sepkit
