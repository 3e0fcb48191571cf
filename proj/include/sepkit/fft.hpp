#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"

namespace sepkit {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// Iterative radix-2 Cooley-Tukey. inverse=true omits the 1/N scaling; callers
// that want a true inverse divide afterwards.
inline void fft_radix2(std::vector<std::complex<double>>& v, bool inverse) {
  const std::size_t n = v.size();
  if (!is_power_of_two(n))
    throw UnsupportedSize("fft: size " + std::to_string(n) + " is not a power of two");
  if (n == 1) return;

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(v[i], v[j]);
  }

  const double pi = 3.14159265358979323846;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * pi / static_cast<double>(len);
    for (std::size_t block = 0; block < n; block += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        // Twiddle from the exact angle each time; accuracy over speed.
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(j));
        const std::complex<double> a = v[block + j];
        const std::complex<double> b = v[block + j + len / 2] * w;
        v[block + j] = a + b;
        v[block + j + len / 2] = a - b;
      }
    }
  }
}

}  // namespace detail

inline void fft_inplace(std::vector<std::complex<double>>& v) { detail::fft_radix2(v, false); }

inline void ifft_inplace(std::vector<std::complex<double>>& v) {
  detail::fft_radix2(v, true);
  const double scale = 1.0 / static_cast<double>(v.size());
  for (auto& z : v) z *= scale;
}

// One-sided spectrum of a real frame: bins 0 .. N/2 inclusive, where
// bin f = sum_i v[i] * exp(-j 2 pi i f / N).
inline std::vector<std::complex<double>> dft(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  if (!is_power_of_two(n))
    throw UnsupportedSize("dft: size " + std::to_string(n) + " is not a power of two");
  std::vector<std::complex<double>> v(frame.begin(), frame.end());
  fft_inplace(v);
  v.resize(n / 2 + 1);
  return v;
}

// Inverse of dft(): conjugate-symmetric extension of the one-sided spectrum,
// inverse FFT, real part.
inline std::vector<double> idft(const std::vector<std::complex<double>>& spectrum,
                                std::size_t fft_size) {
  if (!is_power_of_two(fft_size))
    throw UnsupportedSize("idft: size " + std::to_string(fft_size) + " is not a power of two");
  if (spectrum.size() != fft_size / 2 + 1)
    throw ShapeError("idft: one-sided spectrum must hold fft_size/2 + 1 bins");
  std::vector<std::complex<double>> v(fft_size);
  for (std::size_t f = 0; f <= fft_size / 2; ++f) v[f] = spectrum[f];
  for (std::size_t f = fft_size / 2 + 1; f < fft_size; ++f)
    v[f] = std::conj(spectrum[fft_size - f]);
  ifft_inplace(v);
  std::vector<double> out(fft_size);
  for (std::size_t i = 0; i < fft_size; ++i) out[i] = v[i].real();
  return out;
}

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace sepkit
