#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

// SI-SDR style values are clamped here once the log leaves this range;
// clamped points report a zero gradient.
constexpr double kSdrCapDb = 60.0;
// 10*log10 of the smallest error energy loss_tlmse distinguishes.
constexpr double kLogMseFloorDb = -240.0;

struct LossAux {
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
};

struct LossValue {
  double value = 0.0;
  std::vector<double> per_source;
  std::vector<std::size_t> best_permutation;  // estimate index assigned to each reference
  std::vector<LossAux> aux;
};

struct GradientBundle {
  Matrix d_estimate;  // same shape as the estimate (1 x T for waveforms)
};

namespace detail {

inline LossValue single_source(double value, LossAux aux = {}) {
  LossValue lv;
  lv.value = value;
  lv.per_source = {value};
  lv.best_permutation = {0};
  lv.aux = {aux};
  return lv;
}

constexpr double kTenOverLn10 = 4.3429448190325182765;  // 10 / ln(10)

}  // namespace detail

// Phase-sensitive MSE on magnitude spectra for one source: the target
// magnitude is attenuated by cos of the mixture-source phase difference.
inline std::pair<LossValue, GradientBundle> loss_pmse(const Matrix& estimate_mag,
                                                      const Matrix& target_mag,
                                                      const Matrix& mixture_phase,
                                                      const Matrix& target_phase) {
  require_same_shape(estimate_mag, target_mag, "loss_pmse");
  require_same_shape(estimate_mag, mixture_phase, "loss_pmse");
  require_same_shape(estimate_mag, target_phase, "loss_pmse");
  const double n = static_cast<double>(estimate_mag.data.size());
  GradientBundle grad{Matrix(estimate_mag.rows, estimate_mag.cols)};
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate_mag.data.size(); ++i) {
    const double delta = mixture_phase.data[i] - target_phase.data[i];
    const double residual = estimate_mag.data[i] - target_mag.data[i] * std::cos(delta);
    acc += residual * residual;
    grad.d_estimate.data[i] = 2.0 * residual / n;
  }
  return {detail::single_source(acc / n), std::move(grad)};
}

// Plain elementwise MSE over whatever matrix layout the latent uses.
inline std::pair<LossValue, GradientBundle> loss_mse(const Matrix& estimate,
                                                     const Matrix& target) {
  require_same_shape(estimate, target, "loss_mse");
  const double n = static_cast<double>(estimate.data.size());
  GradientBundle grad{Matrix(estimate.rows, estimate.cols)};
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.data.size(); ++i) {
    const double residual = estimate.data[i] - target.data[i];
    acc += residual * residual;
    grad.d_estimate.data[i] = 2.0 * residual / n;
  }
  return {detail::single_source(acc / n), std::move(grad)};
}

// Negated SI-SDR for one source:
//   value = -10 log10( sum(alpha x)^2 / sum(alpha x - xhat)^2 ),
//   alpha = <xhat, x> / ||x||^2.
// The gradient runs through alpha as well; the cross term cancels because
// the residual alpha*x - xhat is orthogonal to x.
inline std::pair<LossValue, GradientBundle> loss_sisdr(const Waveform& estimate,
                                                       const Waveform& target) {
  require_same_length(estimate, target, "loss_sisdr");
  const std::size_t n = target.size();
  const double ref_energy = target.energy();
  if (ref_energy <= 0.0)
    throw DegenerateReference("loss_sisdr: reference signal has zero energy");

  const double inner = dot(estimate, target);
  const double alpha = inner / ref_energy;
  const double est_energy = estimate.energy();

  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double scaled = alpha * target.samples[t];
    const double err = scaled - estimate.samples[t];
    num += scaled * scaled;
    den += err * err;
  }

  LossAux aux;
  aux.alpha = alpha;
  if (alpha != 0.0) aux.beta = 1.0 / alpha;

  GradientBundle grad{Matrix(1, n)};
  double value;
  if (den < 1e-12 * est_energy) {
    value = -kSdrCapDb;  // estimate is (a scaled copy of) the reference
  } else if (num == 0.0) {
    value = kSdrCapDb;  // zero projection: estimate orthogonal to reference
  } else {
    value = -10.0 * (std::log10(num) - std::log10(den));
    if (value <= -kSdrCapDb) {
      value = -kSdrCapDb;
    } else if (value >= kSdrCapDb) {
      value = kSdrCapDb;
    } else {
      const double g_num = 2.0 * alpha / num;
      const double g_den = 2.0 / den;
      for (std::size_t t = 0; t < n; ++t) {
        const double x = target.samples[t];
        const double err_neg = estimate.samples[t] - alpha * x;  // xhat - alpha x
        grad.d_estimate.data[t] = -detail::kTenOverLn10 * (g_num * x - g_den * err_neg);
      }
    }
  }
  return {detail::single_source(value, aux), std::move(grad)};
}

// Logarithmic time-domain MSE: 10 log10 sum_t (x - xhat)^2. Note the sum is
// not normalized by length; the log turns scale factors into offsets.
inline std::pair<LossValue, GradientBundle> loss_tlmse(const Waveform& estimate,
                                                       const Waveform& target) {
  require_same_length(estimate, target, "loss_tlmse");
  const std::size_t n = target.size();
  double err_energy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = target.samples[t] - estimate.samples[t];
    err_energy += d * d;
  }
  GradientBundle grad{Matrix(1, n)};
  double value;
  if (err_energy < 1e-24) {
    value = kLogMseFloorDb;
  } else {
    value = 10.0 * std::log10(err_energy);
    for (std::size_t t = 0; t < n; ++t)
      grad.d_estimate.data[t] =
          detail::kTenOverLn10 * 2.0 * (estimate.samples[t] - target.samples[t]) / err_energy;
  }
  return {detail::single_source(value), std::move(grad)};
}

// Time-domain MSE, mean over samples.
inline std::pair<LossValue, GradientBundle> loss_tmse(const Waveform& estimate,
                                                      const Waveform& target) {
  require_same_length(estimate, target, "loss_tmse");
  const std::size_t n = target.size();
  GradientBundle grad{Matrix(1, n)};
  double acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double residual = estimate.samples[t] - target.samples[t];
    acc += residual * residual;
    grad.d_estimate.data[t] = 2.0 * residual / static_cast<double>(n);
  }
  return {detail::single_source(acc / static_cast<double>(n)), std::move(grad)};
}

constexpr std::size_t kMaxPitSources = 6;

// Permutation-invariant wrapper. Evaluates the pairwise loss once per
// (estimate, reference) pair (K^2 calls), then searches all K! assignments
// for the smallest mean. Valid for any loss that is a per-pair sum. Ties go
// to the lexicographically smallest permutation.
//
// best_permutation[k] is the estimate index assigned to reference k.
template <typename Signal, typename PairLossFn>
LossValue pit(PairLossFn&& pair_loss, const std::vector<Signal>& estimates,
              const std::vector<Signal>& references) {
  const std::size_t k = references.size();
  if (estimates.size() != k)
    throw ShapeError("pit: estimate and reference counts differ");
  if (k == 0) throw ShapeError("pit: need at least one source");
  if (k > kMaxPitSources)
    throw TooManySources("pit: more than " + std::to_string(kMaxPitSources) + " sources");

  Matrix pair_values(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      pair_values(i, j) = pair_loss(estimates[i], references[j]);

  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best_perm = perm;
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += pair_values(perm[j], j);
    if (sum < best_sum) {
      best_sum = sum;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  LossValue out;
  out.best_permutation = best_perm;
  out.per_source.resize(k);
  for (std::size_t j = 0; j < k; ++j) out.per_source[j] = pair_values(best_perm[j], j);
  out.value = best_sum / static_cast<double>(k);
  return out;
}

}  // namespace sepkit
