#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/fft.hpp"
#include "sepkit/framing.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

// One-sided short-time spectrum, num_bins = fft_size/2 + 1.
struct ComplexSpectrogram {
  ComplexMatrix bins;  // num_frames x num_bins
  FrameSpec frame_spec;
  std::size_t fft_size = 0;
  int sample_rate = 8000;

  std::size_t num_frames() const { return bins.rows; }
  std::size_t num_bins() const { return bins.cols; }
};

inline ComplexSpectrogram stft(const Waveform& signal, const FrameSpec& spec,
                               std::size_t fft_size) {
  if (fft_size < spec.window_len)
    throw ShapeError("stft: fft_size must be >= window_len");
  if (!is_power_of_two(fft_size))
    throw UnsupportedSize("stft: fft_size must be a power of two");

  const FramedSignal framed = frame(signal, spec);
  const std::vector<double> window = make_window(spec.window, spec.window_len);

  ComplexSpectrogram out;
  out.frame_spec = spec;
  out.fft_size = fft_size;
  out.sample_rate = signal.sample_rate;
  out.bins = ComplexMatrix(framed.num_frames(), fft_size / 2 + 1);

  std::vector<double> padded(fft_size);
  for (std::size_t l = 0; l < framed.num_frames(); ++l) {
    std::fill(padded.begin(), padded.end(), 0.0);
    const double* src = framed.frames.row(l);
    for (std::size_t i = 0; i < spec.window_len; ++i) padded[i] = src[i] * window[i];
    const std::vector<std::complex<double>> spectrum = dft(padded);
    for (std::size_t f = 0; f < out.num_bins(); ++f) out.bins(l, f) = spectrum[f];
  }
  return out;
}

// Per-frame inverse DFT, synthesis window, overlap-add, then division by the
// summed squared-window envelope. The envelope is floored at 1e-8 so the
// partially covered edge samples do not blow up; an (effectively) zero
// envelope at a fully covered sample means the window/advance combination
// cannot reconstruct anything there and is reported instead.
inline Waveform istft(const ComplexSpectrogram& spec, std::size_t out_len) {
  const FrameSpec& fs = spec.frame_spec;
  if (spec.num_bins() != spec.fft_size / 2 + 1)
    throw ShapeError("istft: spectrogram bin count does not match fft_size");
  const std::vector<double> window = make_window(fs.window, fs.window_len);

  std::vector<double> acc(out_len, 0.0);
  std::vector<double> envelope(out_len, 0.0);
  std::vector<std::complex<double>> one_sided(spec.num_bins());
  for (std::size_t l = 0; l < spec.num_frames(); ++l) {
    for (std::size_t f = 0; f < spec.num_bins(); ++f) one_sided[f] = spec.bins(l, f);
    const std::vector<double> time = idft(one_sided, spec.fft_size);
    const std::size_t start = l * fs.advance;
    for (std::size_t i = 0; i < fs.window_len; ++i) {
      const std::size_t t = start + i;
      if (t >= out_len) break;
      acc[t] += time[i] * window[i];
      envelope[t] += window[i] * window[i];
    }
  }

  const std::size_t covered = std::min(out_len, fs.span(spec.num_frames()));
  constexpr double kEnvelopeFloor = 1e-8;
  Waveform out(std::vector<double>(out_len, 0.0), spec.sample_rate);
  for (std::size_t t = 0; t < out_len; ++t) {
    const bool interior = t >= fs.window_len && t + fs.window_len <= covered;
    if (interior && envelope[t] < kEnvelopeFloor)
      throw DegenerateWindow("istft: window envelope vanishes at interior sample " +
                             std::to_string(t));
    out.samples[t] = acc[t] / std::max(envelope[t], kEnvelopeFloor);
  }
  return out;
}

}  // namespace sepkit
