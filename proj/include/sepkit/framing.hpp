#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

enum class Window { kHann, kSqrtHann, kRect };

inline const char* window_name(Window w) {
  switch (w) {
    case Window::kHann: return "hann";
    case Window::kSqrtHann: return "sqrt_hann";
    case Window::kRect: return "rect";
  }
  return "?";
}

// Periodic definition: hann sums to a constant under 50% overlap, which makes
// sqrt_hann analysis + sqrt_hann synthesis exactly invertible away from the
// signal edges.
inline std::vector<double> make_window(Window kind, std::size_t len) {
  std::vector<double> w(len, 1.0);
  if (kind == Window::kRect) return w;
  for (std::size_t i = 0; i < len; ++i) {
    const double hann =
        0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * static_cast<double>(i) /
                              static_cast<double>(len)));
    w[i] = (kind == Window::kHann) ? hann : std::sqrt(hann);
  }
  return w;
}

struct FrameSpec {
  std::size_t window_len = 512;  // samples per frame
  std::size_t advance = 128;     // samples between frame starts
  Window window = Window::kSqrtHann;

  // floor((T - window_len)/advance) + 1; trailing samples that do not fill a
  // whole frame are dropped.
  std::size_t num_frames(std::size_t total_samples) const {
    if (total_samples < window_len) return 0;
    return (total_samples - window_len) / advance + 1;
  }

  std::size_t span(std::size_t frames) const {
    return frames == 0 ? 0 : window_len + (frames - 1) * advance;
  }
};

// Raw (pre-windowing) frames: frames(l, i) = signal[i + l*advance].
struct FramedSignal {
  Matrix frames;  // num_frames x window_len
  FrameSpec spec;
  int sample_rate = 8000;

  std::size_t num_frames() const { return frames.rows; }
};

inline FramedSignal frame(const Waveform& signal, const FrameSpec& spec) {
  if (spec.advance == 0 || spec.advance > spec.window_len)
    throw ShapeError("frame: need 0 < advance <= window_len");
  if (signal.size() < spec.window_len)
    throw SignalTooShort("frame: signal of " + std::to_string(signal.size()) +
                         " samples is shorter than one window of " +
                         std::to_string(spec.window_len));
  const std::size_t count = spec.num_frames(signal.size());
  FramedSignal out;
  out.spec = spec;
  out.sample_rate = signal.sample_rate;
  out.frames = Matrix(count, spec.window_len);
  for (std::size_t l = 0; l < count; ++l)
    for (std::size_t i = 0; i < spec.window_len; ++i)
      out.frames(l, i) = signal.samples[i + l * spec.advance];
  return out;
}

// Plain overlap-add: out[t] = sum over frames covering t. No normalization
// here; dividing by a window envelope is the caller's decision.
inline Waveform overlap_add(const FramedSignal& framed, std::size_t out_len) {
  const FrameSpec& spec = framed.spec;
  Waveform out(std::vector<double>(out_len, 0.0), framed.sample_rate);
  for (std::size_t l = 0; l < framed.num_frames(); ++l) {
    const std::size_t start = l * spec.advance;
    const double* src = framed.frames.row(l);
    for (std::size_t i = 0; i < spec.window_len; ++i) {
      const std::size_t t = start + i;
      if (t < out_len) out.samples[t] += src[i];
    }
  }
  return out;
}

}  // namespace sepkit
