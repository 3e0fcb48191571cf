#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/framing.hpp"
#include "sepkit/losses.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/transforms.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

enum class TrainLoss { kTimeLogMse, kTimeMse, kSiSdr };

inline const char* train_loss_name(TrainLoss l) {
  switch (l) {
    case TrainLoss::kTimeLogMse: return "tlmse";
    case TrainLoss::kTimeMse: return "tmse";
    case TrainLoss::kSiSdr: return "sisdr";
  }
  return "?";
}

inline TrainLoss train_loss_from_name(const std::string& name) {
  if (name == "tlmse") return TrainLoss::kTimeLogMse;
  if (name == "tmse") return TrainLoss::kTimeMse;
  if (name == "sisdr") return TrainLoss::kSiSdr;
  throw MalformedFile("unknown training loss '" + name + "'");
}

struct TrainConfig {
  std::size_t steps = 2000;
  double step_size = 1e-3;
  std::size_t plateau_patience = 10;  // steps without improvement before halving
  TrainLoss loss = TrainLoss::kTimeLogMse;
  std::vector<Waveform> batch;
  std::size_t feature_dim = 128;
  std::size_t window_len = 32;
  std::size_t advance = 16;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> loss_per_step;  // loss at the parameters before each update
  TransformSpec final_transform;
  double final_step_size = 0.0;
};

namespace detail {

struct ForwardState {
  FramedSignal framed;     // raw input frames
  Matrix preactivation;    // L x F
  Matrix latent;           // ReLU(preactivation)
  Waveform reconstruction;
};

inline ForwardState autoencoder_forward(const Waveform& x, const TransformSpec& spec) {
  ForwardState state;
  state.framed = frame(x, spec.frame);
  state.preactivation = Matrix(state.framed.num_frames(), spec.feature_dim);
  for (std::size_t l = 0; l < state.framed.num_frames(); ++l) {
    const double* y = state.framed.frames.row(l);
    for (std::size_t f = 0; f < spec.feature_dim; ++f) {
      const double* u = spec.encoder_kernels.row(f);
      double acc = 0.0;
      for (std::size_t i = 0; i < spec.frame.window_len; ++i) acc += y[i] * u[i];
      state.preactivation(l, f) = acc;
    }
  }
  state.latent = state.preactivation;
  for (double& v : state.latent.data) v = std::max(0.0, v);

  FramedSignal synth;
  synth.spec = spec.frame;
  synth.sample_rate = x.sample_rate;
  synth.frames = Matrix(state.latent.rows, spec.frame.window_len);
  for (std::size_t l = 0; l < state.latent.rows; ++l) {
    const double* z = state.latent.row(l);
    for (std::size_t i = 0; i < spec.frame.window_len; ++i) {
      const double* du = spec.decoder_kernels.row(i);
      double acc = 0.0;
      for (std::size_t f = 0; f < spec.feature_dim; ++f) acc += du[f] * z[f];
      synth.frames(l, i) = acc;
    }
  }
  state.reconstruction = overlap_add(synth, x.size());
  return state;
}

// Backpropagates d(loss)/d(reconstruction) into kernel gradients; the ReLU
// subgradient at exactly zero is zero.
inline void autoencoder_backward(const ForwardState& state, const TransformSpec& spec,
                                 const std::vector<double>& d_reconstruction,
                                 Matrix& d_encoder, Matrix& d_decoder) {
  const std::size_t window_len = spec.frame.window_len;
  const std::size_t advance = spec.frame.advance;
  const std::size_t frames = state.latent.rows;
  const std::size_t out_len = d_reconstruction.size();

  Matrix d_synth(frames, window_len);
  for (std::size_t l = 0; l < frames; ++l)
    for (std::size_t i = 0; i < window_len; ++i) {
      const std::size_t t = l * advance + i;
      d_synth(l, i) = t < out_len ? d_reconstruction[t] : 0.0;
    }

  Matrix d_latent(frames, spec.feature_dim);
  for (std::size_t l = 0; l < frames; ++l) {
    const double* ds = d_synth.row(l);
    const double* z = state.latent.row(l);
    for (std::size_t i = 0; i < window_len; ++i) {
      const double* du = spec.decoder_kernels.row(i);
      double* dd = d_decoder.row(i);
      const double g = ds[i];
      if (g == 0.0) continue;
      for (std::size_t f = 0; f < spec.feature_dim; ++f) {
        dd[f] += g * z[f];
        d_latent(l, f) += g * du[f];
      }
    }
  }

  for (std::size_t l = 0; l < frames; ++l) {
    const double* y = state.framed.frames.row(l);
    for (std::size_t f = 0; f < spec.feature_dim; ++f) {
      if (state.preactivation(l, f) <= 0.0) continue;
      const double g = d_latent(l, f);
      if (g == 0.0) continue;
      double* de = d_encoder.row(f);
      for (std::size_t i = 0; i < window_len; ++i) de[i] += g * y[i];
    }
  }
}

inline std::pair<double, std::vector<double>> reconstruction_loss(TrainLoss which,
                                                                  const Waveform& estimate,
                                                                  const Waveform& target) {
  std::pair<LossValue, GradientBundle> result = [&] {
    switch (which) {
      case TrainLoss::kTimeMse: return loss_tmse(estimate, target);
      case TrainLoss::kSiSdr: return loss_sisdr(estimate, target);
      case TrainLoss::kTimeLogMse:
      default: return loss_tlmse(estimate, target);
    }
  }();
  return {result.first.value, std::move(result.second.d_estimate.data)};
}

}  // namespace detail

// Batch loss (mean over examples) and mean kernel gradients at the given
// parameters. Exposed so the analytic gradient can be checked directly.
inline double autoencoder_loss_and_gradient(const TransformSpec& spec,
                                            const std::vector<Waveform>& batch, TrainLoss which,
                                            Matrix* d_encoder = nullptr,
                                            Matrix* d_decoder = nullptr) {
  spec.require_learned_shapes();
  if (batch.empty()) throw ShapeError("autoencoder: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  if (d_encoder != nullptr) *d_encoder = Matrix(spec.feature_dim, spec.frame.window_len);
  if (d_decoder != nullptr) *d_decoder = Matrix(spec.frame.window_len, spec.feature_dim);

  double total = 0.0;
  for (const Waveform& x : batch) {
    const detail::ForwardState state = detail::autoencoder_forward(x, spec);
    auto [value, d_recon] = detail::reconstruction_loss(which, state.reconstruction, x);
    total += value * inv;
    if (d_encoder != nullptr && d_decoder != nullptr) {
      for (double& g : d_recon) g *= inv;
      detail::autoencoder_backward(state, spec, d_recon, *d_encoder, *d_decoder);
    }
  }
  return total;
}

// Full-batch gradient descent on the learned codec kernels. The step size is
// halved whenever the loss fails to improve on its best value for
// plateau_patience consecutive steps. Deterministic for a fixed config.
inline TrainTrace train_autoencoder(const TrainConfig& config) {
  if (config.steps == 0) throw ShapeError("train_autoencoder: steps must be positive");
  if (config.step_size < 0.0) throw ShapeError("train_autoencoder: negative step size");
  if (config.batch.empty()) throw ShapeError("train_autoencoder: empty batch");
  if (config.feature_dim < config.window_len)
    throw ShapeError("train_autoencoder: overcomplete codec required (feature_dim >= window_len)");

  TransformSpec spec =
      init_learned(config.feature_dim, config.window_len, config.advance, config.seed);

  TrainTrace trace;
  trace.loss_per_step.reserve(config.steps);
  double step_size = config.step_size;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale_steps = 0;

  Matrix d_encoder, d_decoder;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const double value =
        autoencoder_loss_and_gradient(spec, config.batch, config.loss, &d_encoder, &d_decoder);
    if (!std::isfinite(value) || value > 1e6)
      throw Diverged("train_autoencoder: loss " + std::to_string(value) + " at step " +
                     std::to_string(step));
    trace.loss_per_step.push_back(value);

    if (value < best_loss - 1e-12) {
      best_loss = value;
      stale_steps = 0;
    } else if (++stale_steps >= config.plateau_patience) {
      step_size *= 0.5;
      stale_steps = 0;
    }

    for (std::size_t i = 0; i < spec.encoder_kernels.data.size(); ++i)
      spec.encoder_kernels.data[i] -= step_size * d_encoder.data[i];
    for (std::size_t i = 0; i < spec.decoder_kernels.data.size(); ++i)
      spec.decoder_kernels.data[i] -= step_size * d_decoder.data[i];
  }

  trace.final_transform = std::move(spec);
  trace.final_step_size = step_size;
  return trace;
}

}  // namespace sepkit
