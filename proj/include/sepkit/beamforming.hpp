#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/linalg.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

// Multichannel samples stacked with history taps. Row t is
//   [y_1(t-L_f), ..., y_D(t-L_f), ..., y_1(t), ..., y_D(t)]
// (lags oldest first, channels consecutive within a lag). Samples before the
// start of the signal are zero.
struct StackedObservation {
  Matrix vectors;  // num_samples x D*(history+1)
  std::size_t num_channels = 0;
  std::size_t history = 0;  // L_f
  int sample_rate = 8000;

  std::size_t dim() const { return num_channels * (history + 1); }
  std::size_t num_samples() const { return vectors.rows; }
};

inline StackedObservation stack(const MultichannelWaveform& observation, std::size_t history) {
  observation.validate();
  const std::size_t channels = observation.num_channels();
  const std::size_t total = observation.num_samples();
  StackedObservation out;
  out.num_channels = channels;
  out.history = history;
  out.sample_rate = observation.sample_rate();
  out.vectors = Matrix(total, channels * (history + 1));
  for (std::size_t t = 0; t < total; ++t) {
    double* row = out.vectors.row(t);
    for (std::size_t lag_block = 0; lag_block <= history; ++lag_block) {
      const std::size_t lag = history - lag_block;  // oldest first
      if (t < lag) continue;                        // zero-padded head
      const std::size_t src = t - lag;
      for (std::size_t d = 0; d < channels; ++d)
        row[lag_block * channels + d] = observation.channels[d].samples[src];
    }
  }
  return out;
}

// One FIR filter across all channels and lags per source.
struct BeamformerDesign {
  std::vector<double> taps;  // D*(history+1)
  std::size_t num_channels = 0;
  std::size_t history = 0;
  double diagonal_loading = 0.0;
};

namespace detail {

// R = (1/T) sum_t y(t) y(t)^T, exploiting symmetry.
inline Matrix time_averaged_covariance(const StackedObservation& stacked) {
  const std::size_t dim = stacked.dim();
  const std::size_t total = stacked.num_samples();
  Matrix cov(dim, dim);
  for (std::size_t t = 0; t < total; ++t) {
    const double* row = stacked.vectors.row(t);
    for (std::size_t i = 0; i < dim; ++i) {
      const double yi = row[i];
      if (yi == 0.0) continue;
      double* cov_row = cov.row(i);
      for (std::size_t j = i; j < dim; ++j) cov_row[j] += yi * row[j];
    }
  }
  const double scale = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      cov(i, j) *= scale;
      cov(j, i) = cov(i, j);
    }
  return cov;
}

inline std::vector<double> cross_correlation(const StackedObservation& stacked,
                                             const Waveform& target) {
  const std::size_t dim = stacked.dim();
  const std::size_t total = stacked.num_samples();
  std::vector<double> crosscorr(dim, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    const double* row = stacked.vectors.row(t);
    const double x = target.samples[t];
    if (x == 0.0) continue;
    for (std::size_t i = 0; i < dim; ++i) crosscorr[i] += row[i] * x;
  }
  for (double& v : crosscorr) v /= static_cast<double>(total);
  return crosscorr;
}

inline BeamformerDesign solve_wiener(const Matrix& cov, const std::vector<double>& crosscorr,
                                     const StackedObservation& stacked, double loading) {
  const std::size_t dim = stacked.dim();
  double trace = 0.0;
  for (std::size_t i = 0; i < dim; ++i) trace += cov(i, i);
  const double delta = loading * trace / static_cast<double>(dim);
  Matrix regularized = cov;
  for (std::size_t i = 0; i < dim; ++i) regularized(i, i) += delta;

  BeamformerDesign design;
  design.taps = cholesky_solve_spd(regularized, crosscorr);
  design.num_channels = stacked.num_channels;
  design.history = stacked.history;
  design.diagonal_loading = delta;
  return design;
}

}  // namespace detail

// Time-invariant multichannel Wiener filter: solves
//   (R + delta I) f = r,  R = (1/T) sum y y^T,  r = (1/T) sum y(t) x(t),
// with delta = loading * trace(R)/dim guaranteeing an SPD solve.
inline BeamformerDesign design_wiener(const StackedObservation& stacked, const Waveform& target,
                                      double loading = 1e-5) {
  const std::size_t dim = stacked.dim();
  if (stacked.num_samples() != target.size())
    throw ShapeError("design_wiener: observation/target length mismatch");
  if (stacked.num_samples() <= dim)
    throw InsufficientData("design_wiener: need more samples than filter dimensions");
  if (!stacked.vectors.all_finite() || !target.all_finite())
    throw NumericalFailure("design_wiener: non-finite input");
  if (loading <= 0.0) throw NumericalFailure("design_wiener: loading must be positive");

  const Matrix cov = detail::time_averaged_covariance(stacked);
  const std::vector<double> crosscorr = detail::cross_correlation(stacked, target);
  return detail::solve_wiener(cov, crosscorr, stacked, loading);
}

// Per-sample dot product of the taps with the stacked observation.
inline Waveform apply_beamformer(const BeamformerDesign& design,
                                 const StackedObservation& stacked) {
  if (design.taps.size() != stacked.dim())
    throw ShapeError("apply_beamformer: tap/stack dimension mismatch");
  Waveform out(std::vector<double>(stacked.num_samples(), 0.0), stacked.sample_rate);
  for (std::size_t t = 0; t < stacked.num_samples(); ++t) {
    const double* row = stacked.vectors.row(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < design.taps.size(); ++i) acc += design.taps[i] * row[i];
    out.samples[t] = acc;
  }
  return out;
}

// Designs and applies one Wiener filter per source, each using the given
// single-channel estimate as the target proxy. The covariance is shared
// across sources; only the cross-correlation differs.
inline std::vector<Waveform> beamform_from_estimates(const MultichannelWaveform& observation,
                                                     const std::vector<Waveform>& estimates,
                                                     std::size_t history,
                                                     double loading = 1e-5,
                                                     std::vector<BeamformerDesign>* designs_out =
                                                         nullptr) {
  const StackedObservation stacked = stack(observation, history);
  const std::size_t dim = stacked.dim();
  if (stacked.num_samples() <= dim)
    throw InsufficientData("beamform_from_estimates: need more samples than filter dimensions");
  if (!stacked.vectors.all_finite())
    throw NumericalFailure("beamform_from_estimates: non-finite observation");
  if (loading <= 0.0) throw NumericalFailure("beamform_from_estimates: loading must be positive");

  const Matrix cov = detail::time_averaged_covariance(stacked);
  std::vector<Waveform> out;
  out.reserve(estimates.size());
  for (const Waveform& estimate : estimates) {
    if (estimate.size() != stacked.num_samples())
      throw ShapeError("beamform_from_estimates: estimate length mismatch");
    if (!estimate.all_finite())
      throw NumericalFailure("beamform_from_estimates: non-finite estimate");
    const std::vector<double> crosscorr = detail::cross_correlation(stacked, estimate);
    const BeamformerDesign design = detail::solve_wiener(cov, crosscorr, stacked, loading);
    out.push_back(apply_beamformer(design, stacked));
    if (designs_out != nullptr) designs_out->push_back(design);
  }
  return out;
}

}  // namespace sepkit
