// sepkit — source-separation toolkit command line.
//
// Subcommands: simulate, separate, beamform, evaluate, losscheck, toytrain,
// rerun. Exit codes: 0 success, 1 check/assertion failure, 2 usage or input
// error. Every command writes a run manifest sufficient to reproduce its
// outputs bit-identically via `sepkit rerun`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepkit/sepkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sepkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// small helpers

WavFormat wav_format_from_name(const std::string& name) {
  if (name == "pcm16") return WavFormat::kPcm16;
  if (name == "float32") return WavFormat::kFloat32;
  if (name == "float64") return WavFormat::kFloat64;
  throw UsageError("unknown wav format '" + name + "'");
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("invalid JSON in '" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw UsageError("cannot create directory '" + path + "': " + ec.message());
}

// Sorted s0.wav, s1.wav, ... in a directory.
std::vector<std::string> source_wavs(const std::string& dir) {
  std::vector<std::string> files;
  for (std::size_t k = 0;; ++k) {
    const fs::path p = fs::path(dir) / ("s" + std::to_string(k) + ".wav");
    if (!fs::exists(p)) break;
    files.push_back(p.string());
  }
  return files;
}

std::vector<std::string> subdirectories(const std::string& dir) {
  std::vector<std::string> subs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subs.push_back(entry.path().filename().string());
  std::sort(subs.begin(), subs.end());
  return subs;
}

// "64/16" or "4/2" in milliseconds -> samples at the given rate.
FrameSpec parse_frame_preset(const std::string& preset, int sample_rate) {
  const std::size_t slash = preset.find('/');
  if (slash == std::string::npos)
    throw UsageError("frame preset must look like '64/16' (ms/ms)");
  double width_ms = 0.0, advance_ms = 0.0;
  try {
    width_ms = std::stod(preset.substr(0, slash));
    advance_ms = std::stod(preset.substr(slash + 1));
  } catch (const std::exception&) {
    throw UsageError("cannot parse frame preset '" + preset + "'");
  }
  FrameSpec spec;
  spec.window_len = static_cast<std::size_t>(std::lround(width_ms * sample_rate / 1000.0));
  spec.advance = static_cast<std::size_t>(std::lround(advance_ms * sample_rate / 1000.0));
  spec.window = Window::kSqrtHann;
  if (spec.window_len == 0 || spec.advance == 0 || spec.advance > spec.window_len)
    throw UsageError("frame preset '" + preset + "' gives an unusable window/advance pair");
  return spec;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return base * 1000003ull + index;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t j = 0; j < std::min(jobs, count); ++j)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// run manifests

class ManifestTimer {
 public:
  ManifestTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_manifest(const std::string& out_dir, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_s) {
  json manifest;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["config"] = config;
  manifest["inputs"] = inputs;
  manifest["outputs"] = outputs;
  manifest["wall_time_s"] = wall_s;
  write_json_file((fs::path(out_dir) / "manifest.json").string(), manifest);
}

// ---------------------------------------------------------------------------
// simulate

int run_simulate(const json& config) {
  const ManifestTimer timer;
  const std::string out_dir = config.at("out").get<std::string>();
  const std::size_t count = config.value("n", std::size_t{1});
  const std::size_t jobs = config.value("jobs", std::size_t{1});
  const WavFormat format = wav_format_from_name(config.value("format", std::string("float32")));
  const SimulationScenario scenario = scenario_from_json(config.at("scenario"));
  ensure_dir(out_dir);

  std::vector<std::string> outputs(count);
  parallel_for(count, jobs, [&](std::size_t index) {
    const std::uint64_t example_seed = derive_seed(scenario.mixing.seed, index);

    std::vector<Waveform> sources;
    for (std::size_t k = 0; k < scenario.mixing.num_sources; ++k)
      sources.push_back(synth_source(scenario.source_kind, scenario.duration_samples,
                                     scenario.sample_rate, derive_seed(example_seed, k)));

    MixtureScenario mixing = scenario.mixing;
    mixing.seed = example_seed;
    if (scenario.use_rir || scenario.channels > 1) {
      Rng delay_rng(example_seed, 0x64656c6179ull);
      for (std::size_t k = 0; k < sources.size(); ++k) {
        std::vector<std::size_t> delays(scenario.channels);
        if (k < scenario.rir_delays.size() && scenario.rir_delays[k].size() == scenario.channels) {
          delays = scenario.rir_delays[k];
        } else {
          for (std::size_t d = 0; d < scenario.channels; ++d)
            delays[d] = delay_rng.next_below(8);
        }
        mixing.rirs.push_back(synth_rir(scenario.channels, delays,
                                        scenario.use_rir ? scenario.rir_decay : 0.0,
                                        std::max<std::size_t>(scenario.rir_length, 9),
                                        scenario.sample_rate, derive_seed(example_seed, 100 + k)));
      }
    }

    const MixtureExample example = mix(sources, mixing);

    char name[16];
    std::snprintf(name, sizeof(name), "ex%04zu", index);
    const fs::path example_dir = fs::path(out_dir) / name;
    ensure_dir(example_dir.string());
    write_wav((example_dir / "mixture.wav").string(), example.mixture, format);
    for (std::size_t k = 0; k < example.clean_images.size(); ++k)
      write_wav((example_dir / ("s" + std::to_string(k) + ".wav")).string(),
                example.clean_images[k], format);
    write_wav((example_dir / "noise.wav").string(), example.noise, format);

    json metadata;
    metadata["seed"] = example.metadata.seed;
    metadata["source_gains"] = example.metadata.source_gains;
    metadata["drawn_sdr_db"] = example.metadata.drawn_sdr_db;
    metadata["drawn_snr_db"] = std::isinf(example.metadata.drawn_snr_db)
                                   ? json("inf")
                                   : json(example.metadata.drawn_snr_db);
    metadata["noise_gain"] = example.metadata.noise_gain;
    metadata["reference_channel"] = example.metadata.reference_channel;
    metadata["sample_rate"] = scenario.sample_rate;
    write_json_file((example_dir / "metadata.json").string(), metadata);
    outputs[index] = example_dir.string();
  });

  write_manifest(out_dir, "simulate", config, {}, outputs, timer.seconds());
  std::cout << "simulate: wrote " << count << " example(s) to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// separate

struct TransformChoice {
  std::string name;  // stft-mag | stft-ri | learned:<prefix>
  TransformSpec spec;
  LatentLayout layout = LatentLayout::kMagnitude;
};

TransformChoice make_transform(const std::string& name, const std::string& frame_preset,
                               std::size_t fft_size_override, int sample_rate) {
  TransformChoice choice;
  choice.name = name;
  if (name == "stft-mag" || name == "stft-ri") {
    const FrameSpec frame = parse_frame_preset(frame_preset, sample_rate);
    const std::size_t fft_size =
        fft_size_override != 0 ? fft_size_override : next_power_of_two(frame.window_len);
    choice.spec = TransformSpec::stft_spec(frame, fft_size);
    choice.layout = name == "stft-mag" ? LatentLayout::kMagnitude : LatentLayout::kRealImagSplit;
  } else if (name.rfind("learned:", 0) == 0) {
    choice.spec = load_learned_transform(name.substr(8));
    choice.layout = LatentLayout::kLearned;
  } else {
    throw UsageError("unknown transform '" + name + "'");
  }
  return choice;
}

// dB energy per (frame, bin); realimag pairs are folded to one complex bin.
Matrix latent_energy_db(const LatentSignal& latent) {
  const bool folded = latent.layout == LatentLayout::kRealImagSplit;
  const std::size_t bins = folded ? latent.values.cols / 2 : latent.values.cols;
  Matrix energy(latent.values.rows, bins);
  for (std::size_t l = 0; l < latent.values.rows; ++l)
    for (std::size_t f = 0; f < bins; ++f) {
      double e = latent.values(l, f) * latent.values(l, f);
      if (folded) e += latent.values(l, f + bins) * latent.values(l, f + bins);
      energy(l, f) = 10.0 * std::log10(e + 1e-12);
    }
  return energy;
}

void write_csv_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.precision(10);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c != 0) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

int run_separate(const json& config) {
  const ManifestTimer timer;
  const std::string mixture_path = config.at("mixture").get<std::string>();
  const std::string out_dir = config.at("out").get<std::string>();
  const std::string mask_mode = config.value("masks", std::string("identity"));
  const std::string transform_name = config.value("transform", std::string("stft-mag"));
  const std::string frame_preset = config.value("frame", std::string("64/16"));
  const std::size_t fft_size = config.value("fft_size", std::size_t{0});
  const std::string refs_dir = config.value("refs", std::string());
  const std::size_t ref_channel = config.value("ref_channel", std::size_t{0});
  const WavFormat out_format = wav_format_from_name(config.value("format", std::string("float32")));

  const MultichannelWaveform mixture_file = read_wav(mixture_path);
  if (ref_channel >= mixture_file.num_channels())
    throw UsageError("reference channel out of range");
  const Waveform& mixture = mixture_file.channels[ref_channel];

  const TransformChoice transform =
      make_transform(transform_name, frame_preset, fft_size, mixture.sample_rate);

  // Clean references for the oracle modes.
  std::vector<Waveform> references;
  if (mask_mode == "oracle-irm" || mask_mode == "oracle-psm") {
    if (refs_dir.empty())
      throw UsageError("mask mode '" + mask_mode + "' needs --refs with clean sources");
    for (const std::string& path : source_wavs(refs_dir)) {
      const MultichannelWaveform ref = read_wav(path);
      if (ref_channel >= ref.num_channels())
        throw UsageError("reference channel out of range in '" + path + "'");
      references.push_back(ref.channels[ref_channel]);
    }
    if (references.empty())
      throw UsageError("no s<k>.wav references found in '" + refs_dir + "'");
    for (const Waveform& r : references)
      if (r.size() != mixture.size())
        throw UsageError("reference length does not match the mixture");
  }

  // Encode the mixture.
  LatentSignal mixture_latent;
  Matrix mixture_phase;
  if (transform.layout == LatentLayout::kMagnitude) {
    StftMagnitude enc = encode_stft_mag(mixture, transform.spec);
    mixture_latent = std::move(enc.magnitude);
    mixture_phase = std::move(enc.phase);
  } else if (transform.layout == LatentLayout::kRealImagSplit) {
    mixture_latent = encode_stft_ri(mixture, transform.spec);
  } else {
    mixture_latent = encode_learned(mixture, transform.spec);
  }

  // Build masks.
  std::vector<Mask> masks;
  if (mask_mode == "identity") {
    masks.push_back(
        Mask{Matrix(mixture_latent.values.rows, mixture_latent.values.cols, 1.0),
             mixture_latent.layout});
  } else if (mask_mode == "oracle-irm") {
    if (transform.layout == LatentLayout::kLearned) {
      std::vector<LatentSignal> latents;
      for (const Waveform& r : references) latents.push_back(encode_learned(r, transform.spec));
      masks = oracle_irm(latents);
    } else {
      std::vector<ComplexSpectrogram> spectra;
      for (const Waveform& r : references)
        spectra.push_back(stft(r, transform.spec.frame, transform.spec.fft_size));
      masks = oracle_irm(spectra, transform.layout);
    }
  } else if (mask_mode == "oracle-psm") {
    if (transform.layout == LatentLayout::kLearned)
      throw UsageError("oracle-psm needs an stft transform (phases are undefined in a learned "
                       "latent space)");
    std::vector<ComplexSpectrogram> spectra;
    for (const Waveform& r : references)
      spectra.push_back(stft(r, transform.spec.frame, transform.spec.fft_size));
    const ComplexSpectrogram mixture_spectrum =
        stft(mixture, transform.spec.frame, transform.spec.fft_size);
    masks = oracle_psm(spectra, mixture_spectrum, transform.layout);
  } else if (mask_mode.rfind("file:", 0) == 0) {
    masks = load_masks(mask_mode.substr(5));
    if (masks.front().layout != mixture_latent.layout)
      throw UsageError("mask file layout does not match the transform");
    if (!masks.front().values.same_shape(mixture_latent.values))
      throw UsageError("mask file shape does not match the encoded mixture");
  } else {
    throw UsageError("unknown mask mode '" + mask_mode + "'");
  }

  // Extract and decode.
  ensure_dir(out_dir);
  const std::vector<LatentSignal> extracted = apply_mask(mixture_latent, masks);
  std::vector<std::string> outputs;
  for (std::size_t k = 0; k < extracted.size(); ++k) {
    Waveform estimate;
    if (transform.layout == LatentLayout::kLearned) {
      estimate = decode_learned(extracted[k], transform.spec, mixture.size());
    } else if (transform.layout == LatentLayout::kMagnitude) {
      estimate = decode_stft(extracted[k], transform.spec, mixture.size(), &mixture_phase);
    } else {
      estimate = decode_stft(extracted[k], transform.spec, mixture.size());
    }
    const std::string wav_path =
        (fs::path(out_dir) / ("s" + std::to_string(k) + ".wav")).string();
    write_wav(wav_path, estimate, out_format);
    outputs.push_back(wav_path);

    const std::string csv_path =
        (fs::path(out_dir) / ("latent_energy_s" + std::to_string(k) + ".csv")).string();
    write_csv_matrix(csv_path, latent_energy_db(extracted[k]));
    outputs.push_back(csv_path);
  }
  const std::string mask_path = (fs::path(out_dir) / "masks.tensor").string();
  save_masks(mask_path, masks);
  outputs.push_back(mask_path);

  std::vector<std::string> inputs = {mixture_path};
  if (!refs_dir.empty()) inputs.push_back(refs_dir);
  write_manifest(out_dir, "separate", config, inputs, outputs, timer.seconds());
  std::cout << "separate: wrote " << extracted.size() << " source(s) to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// beamform

int run_beamform(const json& config) {
  const ManifestTimer timer;
  const std::string mixture_path = config.at("mixture").get<std::string>();
  const std::string estimates_dir = config.at("estimates").get<std::string>();
  const std::string out_dir = config.at("out").get<std::string>();
  const std::size_t history = config.value("history", std::size_t{255});
  const double loading = config.value("loading", 1e-5);

  const MultichannelWaveform mixture = read_wav(mixture_path);
  std::vector<Waveform> estimates;
  for (const std::string& path : source_wavs(estimates_dir)) {
    const MultichannelWaveform est = read_wav(path);
    estimates.push_back(est.channels[est.reference_channel]);
  }
  if (estimates.empty())
    throw UsageError("no s<k>.wav estimates found in '" + estimates_dir + "'");
  for (const Waveform& e : estimates)
    if (e.size() != mixture.num_samples())
      throw UsageError("estimate length does not match the mixture");

  std::vector<BeamformerDesign> designs;
  const std::vector<Waveform> beamformed =
      beamform_from_estimates(mixture, estimates, history, loading, &designs);

  ensure_dir(out_dir);
  std::vector<std::string> outputs;
  for (std::size_t k = 0; k < beamformed.size(); ++k) {
    const std::string wav_path =
        (fs::path(out_dir) / ("s" + std::to_string(k) + ".wav")).string();
    write_wav(wav_path, beamformed[k], WavFormat::kFloat32);
    const std::string design_path =
        (fs::path(out_dir) / ("design_s" + std::to_string(k) + ".tensor")).string();
    save_beamformer_design(design_path, designs[k]);
    outputs.push_back(wav_path);
    outputs.push_back(design_path);
  }
  write_manifest(out_dir, "beamform", config, {mixture_path, estimates_dir}, outputs,
                 timer.seconds());
  std::cout << "beamform: wrote " << beamformed.size() << " source(s) to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

int run_evaluate(const json& config) {
  const ManifestTimer timer;
  const std::string estimates_dir = config.at("estimates").get<std::string>();
  const std::string references_dir = config.at("references").get<std::string>();
  const std::string report_path = config.at("out").get<std::string>();
  const std::string mixtures = config.value("mixtures", std::string());
  const std::size_t filter_len = config.value("filter_len", std::size_t{512});

  // Either one example (s*.wav directly inside) or one subdirectory per
  // example.
  std::vector<std::string> examples;
  if (!source_wavs(estimates_dir).empty()) {
    examples.push_back("");
  } else {
    examples = subdirectories(estimates_dir);
    if (examples.empty())
      throw UsageError("no estimates found in '" + estimates_dir + "'");
  }

  const auto load_sources = [](const std::string& dir) {
    std::vector<Waveform> sources;
    for (const std::string& path : source_wavs(dir)) {
      const MultichannelWaveform w = read_wav(path);
      sources.push_back(w.channels[w.reference_channel]);
    }
    return sources;
  };

  json per_example = json::object();
  double aggregate_si_sdr = 0.0, aggregate_sdr = 0.0, aggregate_improvement = 0.0;
  bool have_improvements = !mixtures.empty();
  for (const std::string& name : examples) {
    const fs::path est_dir = name.empty() ? fs::path(estimates_dir)
                                          : fs::path(estimates_dir) / name;
    const fs::path ref_dir = name.empty() ? fs::path(references_dir)
                                          : fs::path(references_dir) / name;
    const std::vector<Waveform> estimates = load_sources(est_dir.string());
    const std::vector<Waveform> references = load_sources(ref_dir.string());
    if (estimates.empty() || estimates.size() != references.size())
      throw UsageError("estimate/reference counts differ for example '" +
                       (name.empty() ? est_dir.string() : name) + "'");

    std::optional<Waveform> mixture;
    if (!mixtures.empty()) {
      fs::path mixture_path(mixtures);
      if (fs::is_directory(mixture_path))
        mixture_path = name.empty() ? mixture_path / "mixture.wav"
                                    : mixture_path / name / "mixture.wav";
      const MultichannelWaveform w = read_wav(mixture_path.string());
      mixture = w.channels[w.reference_channel];
    }

    const EvalReport report =
        evaluate(estimates, references, mixture ? &*mixture : nullptr, filter_len);
    per_example[name.empty() ? "." : name] = report_to_json(report);
    aggregate_si_sdr += report.mean_si_sdr_db / static_cast<double>(examples.size());
    aggregate_sdr += report.mean_sdr_db / static_cast<double>(examples.size());
    if (report.has_input_scores()) {
      double mean_improvement = 0.0;
      for (double v : report.si_sdr_improvement_db)
        mean_improvement += v / static_cast<double>(report.si_sdr_improvement_db.size());
      aggregate_improvement += mean_improvement / static_cast<double>(examples.size());
    }
  }

  json report_json;
  report_json["examples"] = std::move(per_example);
  report_json["aggregate"] = {{"si_sdr_db", aggregate_si_sdr}, {"sdr_db", aggregate_sdr}};
  if (have_improvements) report_json["aggregate"]["si_sdr_improvement_db"] = aggregate_improvement;
  report_json["version"] = kVersion;
  write_json_file(report_path, report_json);

  const fs::path manifest_dir = fs::path(report_path).parent_path();
  write_manifest(manifest_dir.empty() ? "." : manifest_dir.string(), "evaluate", config,
                 {estimates_dir, references_dir}, {report_path}, timer.seconds());
  std::cout << "evaluate: mean SI-SDR " << aggregate_si_sdr << " dB, mean SDR " << aggregate_sdr
            << " dB";
  if (have_improvements) std::cout << ", mean SI-SDR improvement " << aggregate_improvement << " dB";
  std::cout << " (" << examples.size() << " example(s)) -> " << report_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// losscheck

struct CheckFailure {
  std::string suite;
  std::uint64_t seed;
  double error;
  std::string details;
};

int run_losscheck(const json& config) {
  const ManifestTimer timer;
  const std::string out_dir = config.value("out", std::string("losscheck_out"));
  const std::uint64_t seed = config.value("seed", std::uint64_t{0});
  const std::size_t trials = config.value("trials", std::size_t{100});
  const std::size_t length = config.value("length", std::size_t{256});
  const std::size_t frames = config.value("frames", std::size_t{8});
  const std::size_t features = config.value("features", std::size_t{16});
  const bool inject_broken_gradient = config.value("inject_broken_gradient", false);

  std::vector<CheckFailure> failures;
  double max_identity_error = 0.0;
  double max_gradient_error = 0.0;

  const auto estimate_pair = [&](std::uint64_t s) {
    Rng rng(seed, 10'000 + s);
    Waveform x(std::vector<double>(length), 8000);
    Waveform noise(std::vector<double>(length), 8000);
    for (double& v : x.samples) v = rng.gaussian();
    for (double& v : noise.samples) v = rng.gaussian();
    const double gain = rng.uniform(0.3, 2.0);
    const double noise_gain = rng.uniform(0.05, 1.0);
    Waveform xhat = x;
    for (std::size_t t = 0; t < length; ++t)
      xhat.samples[t] = gain * x[t] + noise_gain * noise.samples[t];
    return std::make_pair(std::move(x), std::move(xhat));
  };

  // Identity suite: the alpha form against the beta = 1/alpha rewrite, and
  // the logarithmic-MSE relation.
  for (std::uint64_t s = 0; s < trials * 10; ++s) {
    const auto [x, xhat] = estimate_pair(s);
    const auto [value, grad] = loss_sisdr(xhat, x);
    const double beta = value.aux[0].beta;
    double ref_energy = 0.0, beta_residual = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      ref_energy += x[t] * x[t];
      const double r = x[t] - beta * xhat.samples[t];
      beta_residual += r * r;
    }
    const double beta_form = -10.0 * std::log10(ref_energy / beta_residual);
    const double identity_error = std::abs(value.value - beta_form);
    max_identity_error = std::max(max_identity_error, identity_error);
    if (identity_error >= 1e-9)
      failures.push_back({"sisdr-beta-identity", s, identity_error,
                          "alpha form " + std::to_string(value.value) + " vs beta form " +
                              std::to_string(beta_form)});

    Waveform rescaled = xhat;
    for (double& v : rescaled.samples) v *= beta;
    const double relation =
        loss_tlmse(rescaled, x).first.value - 10.0 * std::log10(ref_energy);
    const double relation_error = std::abs(value.value - relation);
    max_identity_error = std::max(max_identity_error, relation_error);
    if (relation_error >= 1e-9)
      failures.push_back({"sisdr-tlmse-relation", s, relation_error,
                          "sisdr " + std::to_string(value.value) + " vs tlmse form " +
                              std::to_string(relation)});
  }

  // Gradient suite: every loss against central finite differences.
  const auto check_gradient = [&](const std::string& name, std::uint64_t s,
                                  const std::function<std::pair<double, std::vector<double>>(
                                      const std::vector<double>&)>& fn,
                                  const std::vector<double>& point) {
    std::vector<double> analytic = fn(point).second;
    if (inject_broken_gradient && !analytic.empty()) analytic[0] += 1e-3;
    std::vector<double> numeric(point.size());
    std::vector<double> probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
      const double original = probe[i];
      const double step = 1e-5 * std::max(1.0, std::abs(original));
      probe[i] = original + step;
      const double upper = fn(probe).first;
      probe[i] = original - step;
      const double lower = fn(probe).first;
      probe[i] = original;
      numeric[i] = (upper - lower) / (2.0 * step);
    }
    double scale = 0.0;
    for (double v : numeric) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i)
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    max_gradient_error = std::max(max_gradient_error, worst);
    if (worst >= 1e-5)
      failures.push_back({name + "-gradient", s, worst, "relative error vs finite differences"});
  };

  const std::size_t grad_length = std::min<std::size_t>(length, 64);
  for (std::uint64_t s = 0; s < trials; ++s) {
    Rng rng(seed, 50'000 + s);

    {  // time-domain losses on an estimate-like pair
      Waveform x(std::vector<double>(grad_length), 8000);
      for (double& v : x.samples) v = rng.gaussian();
      std::vector<double> xhat(grad_length);
      for (double& v : xhat) v = rng.gaussian();
      for (std::size_t t = 0; t < grad_length; ++t) xhat[t] = x[t] + 0.5 * xhat[t];

      check_gradient("sisdr", s,
                     [&](const std::vector<double>& p) {
                       auto [value, grad] = loss_sisdr(Waveform(p, 8000), x);
                       return std::make_pair(value.value, grad.d_estimate.data);
                     },
                     xhat);
      check_gradient("tlmse", s,
                     [&](const std::vector<double>& p) {
                       auto [value, grad] = loss_tlmse(Waveform(p, 8000), x);
                       return std::make_pair(value.value, grad.d_estimate.data);
                     },
                     xhat);
      check_gradient("tmse", s,
                     [&](const std::vector<double>& p) {
                       auto [value, grad] = loss_tmse(Waveform(p, 8000), x);
                       return std::make_pair(value.value, grad.d_estimate.data);
                     },
                     xhat);
    }

    {  // spectral losses
      Matrix target(frames, features), mixture_phase(frames, features),
          target_phase(frames, features);
      std::vector<double> estimate(frames * features);
      for (double& v : target.data) v = std::abs(rng.gaussian());
      for (double& v : mixture_phase.data) v = rng.uniform(-3.0, 3.0);
      for (double& v : target_phase.data) v = rng.uniform(-3.0, 3.0);
      for (double& v : estimate) v = std::abs(rng.gaussian());

      check_gradient("pmse", s,
                     [&](const std::vector<double>& p) {
                       Matrix est(frames, features);
                       est.data = p;
                       auto [value, grad] = loss_pmse(est, target, mixture_phase, target_phase);
                       return std::make_pair(value.value, grad.d_estimate.data);
                     },
                     estimate);
      check_gradient("mse", s,
                     [&](const std::vector<double>& p) {
                       Matrix est(frames, features);
                       est.data = p;
                       auto [value, grad] = loss_mse(est, target);
                       return std::make_pair(value.value, grad.d_estimate.data);
                     },
                     estimate);
    }
  }

  // PIT suite against exhaustive enumeration.
  for (std::uint64_t s = 0; s < trials; ++s) {
    Rng rng(seed, 90'000 + s);
    const std::size_t k = 2 + s % 3;  // 2..4 sources
    std::vector<Waveform> estimates, references;
    for (std::size_t i = 0; i < k; ++i) {
      Waveform e(std::vector<double>(64), 8000), r(std::vector<double>(64), 8000);
      for (double& v : e.samples) v = rng.gaussian();
      for (double& v : r.samples) v = rng.gaussian();
      estimates.push_back(std::move(e));
      references.push_back(std::move(r));
    }
    const auto pair_fn = [](const Waveform& e, const Waveform& r) {
      return loss_tmse(e, r).first.value;
    };
    const LossValue got = pit(pair_fn, estimates, references);

    Matrix pair_matrix(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        pair_matrix(i, j) = pair_fn(estimates[i], references[j]);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_perm = perm;
    do {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += pair_matrix(perm[j], j);
      if (sum < best) {
        best = sum;
        best_perm = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (got.value != best / static_cast<double>(k) || got.best_permutation != best_perm)
      failures.push_back({"pit-enumeration", s, std::abs(got.value - best / k),
                          "pit disagrees with exhaustive search"});
  }

  ensure_dir(out_dir);
  json report;
  report["max_identity_error_db"] = max_identity_error;
  report["max_relative_gradient_error"] = max_gradient_error;
  report["violations"] = json::array();
  for (const CheckFailure& f : failures)
    report["violations"].push_back(
        {{"suite", f.suite}, {"case", f.seed}, {"error", f.error}, {"details", f.details}});
  const std::string report_path = (fs::path(out_dir) / "report.json").string();
  write_json_file(report_path, report);
  write_manifest(out_dir, "losscheck", config, {}, {report_path}, timer.seconds());

  std::cout << "losscheck: max identity error " << max_identity_error << " dB\n";
  std::cout << "losscheck: max relative gradient error " << max_gradient_error << "\n";
  if (!failures.empty()) {
    std::cout << "losscheck: " << failures.size() << " violation(s)\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 10); ++i)
      std::cout << "  [" << failures[i].suite << "] case " << failures[i].seed << ": error "
                << failures[i].error << " (" << failures[i].details << ")\n";
    return kExitCheckFailed;
  }
  std::cout << "losscheck: all checks passed\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// toytrain

int run_toytrain(const json& config) {
  const ManifestTimer timer;
  const std::string out_dir = config.value("out", std::string("toytrain_out"));

  TrainConfig train = train_config_from_json(config);
  if (train.steps == 0) throw UsageError("steps must be positive");

  const json batch_spec = config.value("batch", json::object());
  const SourceKind kind =
      source_kind_from_name(batch_spec.value("kind", std::string("filtered_noise")));
  const std::size_t count = batch_spec.value("count", std::size_t{2});
  const std::size_t batch_length = batch_spec.value("length", std::size_t{2048});
  const int sample_rate = batch_spec.value("sample_rate", 8000);
  if (count == 0 || batch_length == 0) throw UsageError("batch needs count and length >= 1");
  for (std::size_t i = 0; i < count; ++i)
    train.batch.push_back(
        synth_source(kind, batch_length, sample_rate, derive_seed(train.seed, 1 + i)));

  const TrainTrace trace = train_autoencoder(train);

  ensure_dir(out_dir);
  const std::string trace_path = (fs::path(out_dir) / "trace.csv").string();
  {
    std::ofstream out(trace_path);
    out.precision(17);
    out << "step,loss\n";
    for (std::size_t s = 0; s < trace.loss_per_step.size(); ++s)
      out << s << "," << trace.loss_per_step[s] << "\n";
  }
  const std::string prefix = (fs::path(out_dir) / "codec").string();
  save_learned_transform(prefix, trace.final_transform);

  double mean_sisdr = 0.0;
  for (const Waveform& x : train.batch) {
    const LatentSignal z = encode_learned(x, trace.final_transform);
    const Waveform recon = decode_learned(z, trace.final_transform, x.size());
    mean_sisdr += metric_sisdr(recon, x) / static_cast<double>(train.batch.size());
  }

  write_manifest(out_dir, "toytrain", config, {},
                 {trace_path, prefix + ".encoder.tensor", prefix + ".decoder.tensor"},
                 timer.seconds());
  std::cout << "toytrain: final loss " << trace.loss_per_step.back()
            << ", reconstruction SI-SDR " << mean_sisdr << " dB after "
            << trace.loss_per_step.size() << " step(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatch + rerun

int dispatch(const std::string& command, const json& config) {
  if (command == "simulate") return run_simulate(config);
  if (command == "separate") return run_separate(config);
  if (command == "beamform") return run_beamform(config);
  if (command == "evaluate") return run_evaluate(config);
  if (command == "losscheck") return run_losscheck(config);
  if (command == "toytrain") return run_toytrain(config);
  throw UsageError("unknown command '" + command + "' in manifest");
}

int run_rerun(const std::string& manifest_path, const std::string& out_override) {
  const json manifest = load_json_file(manifest_path);
  if (!manifest.contains("command") || !manifest.contains("config"))
    throw UsageError("manifest '" + manifest_path + "' is missing command/config");
  json config = manifest["config"];
  if (!out_override.empty()) config["out"] = out_override;
  return dispatch(manifest["command"].get<std::string>(), config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sepkit: desk-scale source separation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate synthetic mixtures");
  std::string sim_scenario, sim_out = "sim_out";
  std::size_t sim_n = 1, sim_jobs = 1;
  std::string sim_format = "float32";
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--scenario", sim_scenario, "scenario JSON file")->required();
  simulate->add_option("--out", sim_out, "output directory");
  simulate->add_option("--n", sim_n, "number of examples");
  simulate->add_option("--jobs", sim_jobs, "worker threads");
  simulate->add_option("--seed", sim_seed, "override the scenario seed");
  simulate->add_option("--format", sim_format, "wav sample format (float32|pcm16|float64)")
      ->check(CLI::IsMember({"float32", "pcm16", "float64"}));

  // separate
  auto* separate = app.add_subcommand("separate", "mask-based source extraction");
  std::string sep_mixture, sep_out = "sep_out", sep_masks = "identity";
  std::string sep_transform = "stft-mag", sep_frame = "64/16", sep_refs;
  std::string sep_format = "float32";
  std::size_t sep_fft = 0, sep_ref_channel = 0;
  separate->add_option("--mixture", sep_mixture, "mixture wav")->required();
  separate->add_option("--out", sep_out, "output directory");
  separate->add_option("--masks", sep_masks,
                       "identity | oracle-irm | oracle-psm | file:<path>");
  separate->add_option("--transform", sep_transform, "stft-mag | stft-ri | learned:<prefix>");
  separate->add_option("--frame", sep_frame, "window/advance in ms, e.g. 64/16 or 4/2");
  separate->add_option("--fft-size", sep_fft, "DFT size (default: next power of two)");
  separate->add_option("--refs", sep_refs, "directory with clean s<k>.wav for oracle masks");
  separate->add_option("--ref-channel", sep_ref_channel, "input channel to separate");
  separate->add_option("--format", sep_format, "output wav format (float32|pcm16|float64)")
      ->check(CLI::IsMember({"float32", "pcm16", "float64"}));

  // beamform
  auto* beamform = app.add_subcommand("beamform", "time-domain multichannel Wiener filtering");
  std::string bf_mixture, bf_estimates, bf_out = "bf_out";
  std::size_t bf_history = 255;
  double bf_loading = 1e-5;
  beamform->add_option("--mixture", bf_mixture, "multichannel mixture wav")->required();
  beamform->add_option("--estimates", bf_estimates, "directory with s<k>.wav target estimates")
      ->required();
  beamform->add_option("--out", bf_out, "output directory");
  beamform->add_option("--history", bf_history, "history taps per channel (L_f)");
  beamform->add_option("--loading", bf_loading, "relative diagonal loading");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "SI-SDR / SDR scoring");
  std::string ev_estimates, ev_references, ev_out = "report.json", ev_mixtures;
  std::size_t ev_filter_len = 512;
  evaluate_cmd->add_option("--estimates", ev_estimates, "estimates directory")->required();
  evaluate_cmd->add_option("--references", ev_references, "references directory")->required();
  evaluate_cmd->add_option("--out", ev_out, "report JSON path");
  evaluate_cmd->add_option("--mixtures", ev_mixtures,
                           "mixture wav or directory (enables improvement scores)");
  evaluate_cmd->add_option("--filter-len", ev_filter_len, "SDR projection filter length");

  // losscheck
  auto* losscheck = app.add_subcommand("losscheck", "loss identity and gradient suites");
  losscheck->alias("loss");
  std::uint64_t lc_seed = 0;
  std::size_t lc_trials = 100, lc_length = 256, lc_frames = 8, lc_features = 16;
  std::string lc_out = "losscheck_out";
  bool lc_inject = false;
  losscheck->add_option("--seed", lc_seed, "random seed");
  losscheck->add_option("--out", lc_out, "report directory");
  losscheck->add_option("--trials", lc_trials, "instances per suite");
  losscheck->add_option("--length", lc_length, "time-domain signal length");
  losscheck->add_option("--frames", lc_frames, "spectral rows");
  losscheck->add_option("--features", lc_features, "spectral columns");
  losscheck->add_flag("--inject-broken-gradient", lc_inject,
                      "negative-control hook: corrupt one gradient entry");

  // toytrain
  auto* toytrain = app.add_subcommand("toytrain", "fit a learned codec by gradient descent");
  std::string tt_config, tt_out = "toytrain_out";
  toytrain->add_option("--config", tt_config, "training config JSON (optional)");
  toytrain->add_option("--out", tt_out, "output directory");

  // rerun
  auto* rerun = app.add_subcommand("rerun", "re-execute a command from its manifest");
  std::string rr_manifest, rr_out;
  rerun->add_option("manifest", rr_manifest, "manifest.json of a previous run")->required();
  rerun->add_option("--out", rr_out, "redirect outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      json config;
      config["scenario"] = load_json_file(sim_scenario);
      if (sim_seed) config["scenario"]["seed"] = *sim_seed;
      config["out"] = sim_out;
      config["n"] = sim_n;
      config["jobs"] = sim_jobs;
      config["format"] = sim_format;
      return run_simulate(config);
    }
    if (separate->parsed()) {
      json config;
      config["mixture"] = sep_mixture;
      config["out"] = sep_out;
      config["masks"] = sep_masks;
      config["transform"] = sep_transform;
      config["frame"] = sep_frame;
      config["fft_size"] = sep_fft;
      if (!sep_refs.empty()) config["refs"] = sep_refs;
      config["ref_channel"] = sep_ref_channel;
      config["format"] = sep_format;
      return run_separate(config);
    }
    if (beamform->parsed()) {
      json config;
      config["mixture"] = bf_mixture;
      config["estimates"] = bf_estimates;
      config["out"] = bf_out;
      config["history"] = bf_history;
      config["loading"] = bf_loading;
      return run_beamform(config);
    }
    if (evaluate_cmd->parsed()) {
      json config;
      config["estimates"] = ev_estimates;
      config["references"] = ev_references;
      config["out"] = ev_out;
      if (!ev_mixtures.empty()) config["mixtures"] = ev_mixtures;
      config["filter_len"] = ev_filter_len;
      return run_evaluate(config);
    }
    if (losscheck->parsed()) {
      json config;
      config["seed"] = lc_seed;
      config["trials"] = lc_trials;
      config["length"] = lc_length;
      config["frames"] = lc_frames;
      config["features"] = lc_features;
      config["inject_broken_gradient"] = lc_inject;
      return run_losscheck(config);
    }
    if (toytrain->parsed()) {
      json config = tt_config.empty() ? json::object() : load_json_file(tt_config);
      config["out"] = tt_out;
      return run_toytrain(config);
    }
    if (rerun->parsed()) return run_rerun(rr_manifest, rr_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MalformedFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
