#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/linalg.hpp"
#include "sepkit/losses.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

// Scale-invariant SDR in dB, capped at +-60. Higher is better; the loss-side
// twin is the negated value.
inline double metric_sisdr(const Waveform& estimate, const Waveform& reference) {
  require_same_length(estimate, reference, "metric_sisdr");
  const double ref_energy = reference.energy();
  if (ref_energy <= 0.0)
    throw DegenerateReference("metric_sisdr: reference signal has zero energy");
  const double alpha = dot(estimate, reference) / ref_energy;
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < reference.size(); ++t) {
    const double scaled = alpha * reference.samples[t];
    const double err = scaled - estimate.samples[t];
    num += scaled * scaled;
    den += err * err;
  }
  if (den < 1e-12 * estimate.energy()) return kSdrCapDb;
  if (num == 0.0) return -kSdrCapDb;
  return std::clamp(10.0 * (std::log10(num) - std::log10(den)), -kSdrCapDb, kSdrCapDb);
}

// BSSEval-style SDR: least-squares projection of the estimate onto the
// reference and its delays 0..filter_len-1 (Toeplitz-structured normal
// equations with light diagonal loading), then the energy ratio of the
// projection against the residual. Distortion-only; no interference/artifact
// split.
inline double metric_sdr(const Waveform& estimate, const Waveform& reference,
                         std::size_t filter_len = 512) {
  require_same_length(estimate, reference, "metric_sdr");
  if (filter_len == 0) throw ShapeError("metric_sdr: filter_len must be >= 1");
  const std::size_t total = reference.size();
  if (total < filter_len)
    throw InsufficientData("metric_sdr: signal shorter than projection filter");
  const double ref_energy = reference.energy();
  if (ref_energy <= 0.0)
    throw DegenerateReference("metric_sdr: reference signal has zero energy");

  const std::vector<double>& x = reference.samples;
  const std::vector<double>& e = estimate.samples;
  const std::size_t n = filter_len;

  // gram(i, j) = sum_t x(t-i) x(t-j) over t in [0, T); out-of-range samples
  // are zero. For lag d = j-i this is a prefix sum over products read at
  // u = T-1-min(i,j), so one pass per lag fills a whole diagonal.
  Matrix gram(n, n);
  std::vector<double> prefix(total);
  for (std::size_t d = 0; d < n; ++d) {
    double acc = 0.0;
    for (std::size_t u = d; u < total; ++u) {
      acc += x[u] * x[u - d];
      prefix[u] = acc;
    }
    for (std::size_t i = 0; i + d < n; ++i) {
      const std::size_t j = i + d;
      const double value = prefix[total - 1 - i];
      gram(i, j) = value;
      gram(j, i) = value;
    }
  }

  std::vector<double> rhs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t u = 0; u + i < total; ++u) acc += e[u + i] * x[u];
    rhs[i] = acc;
  }

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += gram(i, i);
  const double loading = 1e-8 * trace / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) gram(i, i) += loading;

  const std::vector<double> taps = cholesky_solve_spd(gram, rhs);

  double den = 0.0, est_energy = 0.0;
  for (std::size_t t = 0; t < total; ++t) {
    double proj = 0.0;
    const std::size_t max_lag = std::min(t + 1, n);
    for (std::size_t i = 0; i < max_lag; ++i) proj += taps[i] * x[t - i];
    const double residual = e[t] - proj;
    den += residual * residual;
    est_energy += e[t] * e[t];
  }
  // Projection energy by Pythagoras: the residual is stationary at the exact
  // least-squares solution, so the loading bias enters only at second order.
  const double num = est_energy - den;
  if (den < 1e-12 * est_energy) return kSdrCapDb;
  if (num <= 0.0) return -kSdrCapDb;
  return std::clamp(10.0 * (std::log10(num) - std::log10(den)), -kSdrCapDb, kSdrCapDb);
}

struct EvalReport {
  std::vector<std::size_t> permutation;  // estimate index per reference
  std::vector<double> si_sdr_db;
  std::vector<double> sdr_db;
  double mean_si_sdr_db = 0.0;
  double mean_sdr_db = 0.0;
  // Present only when the mixture was supplied.
  std::vector<double> input_si_sdr_db;
  std::vector<double> input_sdr_db;
  std::vector<double> si_sdr_improvement_db;
  std::vector<double> sdr_improvement_db;
  // How the SDR was computed; recorded because BSSEval variants differ.
  std::string sdr_definition =
      "distortion-only least-squares projection onto reference delays (bsseval-style)";
  std::size_t sdr_filter_len = 512;

  bool has_input_scores() const { return !input_si_sdr_db.empty(); }
};

// Aligns estimates to references with the permutation that maximizes mean
// SI-SDR, then reports both metrics under that single permutation. Passing
// the mixture adds input scores and improvements (output minus input).
inline EvalReport evaluate(const std::vector<Waveform>& estimates,
                           const std::vector<Waveform>& references,
                           const Waveform* mixture = nullptr,
                           std::size_t sdr_filter_len = 512) {
  const std::size_t k = references.size();
  if (estimates.size() != k) throw ShapeError("evaluate: estimate/reference count mismatch");
  if (k == 0) throw ShapeError("evaluate: no sources");
  if (k > kMaxPitSources) throw TooManySources("evaluate: more than 6 sources");

  const LossValue assignment =
      pit([](const Waveform& e, const Waveform& r) { return -metric_sisdr(e, r); }, estimates,
          references);

  EvalReport report;
  report.permutation = assignment.best_permutation;
  report.sdr_filter_len = sdr_filter_len;
  report.si_sdr_db.resize(k);
  report.sdr_db.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Waveform& est = estimates[report.permutation[j]];
    report.si_sdr_db[j] = metric_sisdr(est, references[j]);
    report.sdr_db[j] = metric_sdr(est, references[j], sdr_filter_len);
  }
  report.mean_si_sdr_db = 0.0;
  report.mean_sdr_db = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    report.mean_si_sdr_db += report.si_sdr_db[j] / static_cast<double>(k);
    report.mean_sdr_db += report.sdr_db[j] / static_cast<double>(k);
  }

  if (mixture != nullptr) {
    report.input_si_sdr_db.resize(k);
    report.input_sdr_db.resize(k);
    report.si_sdr_improvement_db.resize(k);
    report.sdr_improvement_db.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      report.input_si_sdr_db[j] = metric_sisdr(*mixture, references[j]);
      report.input_sdr_db[j] = metric_sdr(*mixture, references[j], sdr_filter_len);
      report.si_sdr_improvement_db[j] = report.si_sdr_db[j] - report.input_si_sdr_db[j];
      report.sdr_improvement_db[j] = report.sdr_db[j] - report.input_sdr_db[j];
    }
  }
  return report;
}

}  // namespace sepkit
