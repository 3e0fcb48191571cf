#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/stft.hpp"
#include "sepkit/transforms.hpp"

namespace sepkit {

// Signed masks (phase-sensitive and friends) are clamped to this range;
// ratio masks stay in [0, 1] by construction.
constexpr double kMaskClamp = 5.0;
constexpr double kMaskEps = 1e-10;

// Per-source multiplicative gains in the latent domain. For realimag_split
// there are two entries per time-frequency bin, one for the real and one for
// the imaginary column.
struct Mask {
  Matrix values;  // num_frames x F'
  LatentLayout layout = LatentLayout::kMagnitude;
};

// Elementwise product per source.
inline std::vector<LatentSignal> apply_mask(const LatentSignal& mixture,
                                            const std::vector<Mask>& masks) {
  std::vector<LatentSignal> out;
  out.reserve(masks.size());
  for (const Mask& mask : masks) {
    if (mask.layout != mixture.layout) throw ShapeError("apply_mask: layout mismatch");
    require_same_shape(mixture.values, mask.values, "apply_mask");
    LatentSignal extracted = mixture;
    for (std::size_t i = 0; i < extracted.values.data.size(); ++i)
      extracted.values.data[i] *= mask.values.data[i];
    out.push_back(std::move(extracted));
  }
  return out;
}

namespace detail {

// |X_k| per bin from clean source spectrograms.
inline std::vector<Matrix> magnitudes_of(const std::vector<ComplexSpectrogram>& sources) {
  std::vector<Matrix> mags;
  mags.reserve(sources.size());
  for (const ComplexSpectrogram& s : sources) {
    Matrix m(s.num_frames(), s.num_bins());
    for (std::size_t i = 0; i < s.bins.data.size(); ++i) m.data[i] = std::abs(s.bins.data[i]);
    mags.push_back(std::move(m));
  }
  return mags;
}

// A real per-bin gain scales a complex bin, so the realimag layout carries
// the same value in the real and imaginary columns.
inline Mask expand_to_layout(const Matrix& per_bin, LatentLayout layout) {
  Mask mask;
  mask.layout = layout;
  if (layout == LatentLayout::kRealImagSplit) {
    mask.values = Matrix(per_bin.rows, 2 * per_bin.cols);
    for (std::size_t l = 0; l < per_bin.rows; ++l)
      for (std::size_t f = 0; f < per_bin.cols; ++f) {
        mask.values(l, f) = per_bin(l, f);
        mask.values(l, f + per_bin.cols) = per_bin(l, f);
      }
  } else {
    mask.values = per_bin;
  }
  return mask;
}

}  // namespace detail

// Ideal ratio mask |X_k| / (sum_j |X_j| + eps) from clean STFT images.
inline std::vector<Mask> oracle_irm(const std::vector<ComplexSpectrogram>& sources,
                                    LatentLayout target_layout = LatentLayout::kMagnitude) {
  if (sources.empty()) throw ShapeError("oracle_irm: no sources");
  if (target_layout == LatentLayout::kLearned)
    throw ShapeError("oracle_irm: use the latent overload for learned layouts");
  const std::vector<Matrix> mags = detail::magnitudes_of(sources);
  for (const Matrix& m : mags) require_same_shape(mags.front(), m, "oracle_irm");

  Matrix denom(mags.front().rows, mags.front().cols, kMaskEps);
  for (const Matrix& m : mags)
    for (std::size_t i = 0; i < denom.data.size(); ++i) denom.data[i] += m.data[i];

  std::vector<Mask> masks;
  masks.reserve(sources.size());
  for (const Matrix& m : mags) {
    Matrix ratio(m.rows, m.cols);
    for (std::size_t i = 0; i < ratio.data.size(); ++i) ratio.data[i] = m.data[i] / denom.data[i];
    masks.push_back(detail::expand_to_layout(ratio, target_layout));
  }
  return masks;
}

// Ratio mask directly in a nonnegative learned latent space.
inline std::vector<Mask> oracle_irm(const std::vector<LatentSignal>& source_latents) {
  if (source_latents.empty()) throw ShapeError("oracle_irm: no sources");
  const Matrix& first = source_latents.front().values;
  Matrix denom(first.rows, first.cols, kMaskEps);
  for (const LatentSignal& s : source_latents) {
    require_same_shape(first, s.values, "oracle_irm");
    for (std::size_t i = 0; i < denom.data.size(); ++i)
      denom.data[i] += std::abs(s.values.data[i]);
  }
  std::vector<Mask> masks;
  masks.reserve(source_latents.size());
  for (const LatentSignal& s : source_latents) {
    Mask mask;
    mask.layout = s.layout;
    mask.values = Matrix(first.rows, first.cols);
    for (std::size_t i = 0; i < denom.data.size(); ++i)
      mask.values.data[i] = std::abs(s.values.data[i]) / denom.data[i];
    masks.push_back(std::move(mask));
  }
  return masks;
}

// Phase-sensitive mask (|X_k|/|Y|) cos(theta_y - theta_k), computed as
// Re(X_k conj(Y)) / |Y|^2 and clamped; bins where the mixture vanishes get 0.
inline std::vector<Mask> oracle_psm(const std::vector<ComplexSpectrogram>& sources,
                                    const ComplexSpectrogram& mixture,
                                    LatentLayout target_layout = LatentLayout::kMagnitude) {
  if (sources.empty()) throw ShapeError("oracle_psm: no sources");
  if (target_layout == LatentLayout::kLearned)
    throw ShapeError("oracle_psm: phase-sensitive masks require an stft latent");
  std::vector<Mask> masks;
  masks.reserve(sources.size());
  for (const ComplexSpectrogram& s : sources) {
    if (s.bins.rows != mixture.bins.rows || s.bins.cols != mixture.bins.cols)
      throw ShapeError("oracle_psm: source/mixture shape mismatch");
    Matrix per_bin(s.bins.rows, s.bins.cols);
    for (std::size_t i = 0; i < per_bin.data.size(); ++i) {
      const std::complex<double> y = mixture.bins.data[i];
      const double y_mag = std::abs(y);
      if (y_mag < kMaskEps) {
        per_bin.data[i] = 0.0;
      } else {
        const double value = (s.bins.data[i] * std::conj(y)).real() / (y_mag * y_mag);
        per_bin.data[i] = std::clamp(value, -kMaskClamp, kMaskClamp);
      }
    }
    masks.push_back(detail::expand_to_layout(per_bin, target_layout));
  }
  return masks;
}

}  // namespace sepkit
