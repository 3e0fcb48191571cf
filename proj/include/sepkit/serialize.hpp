#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepkit/errors.hpp"
#include "sepkit/metrics.hpp"
#include "sepkit/simulation.hpp"
#include "sepkit/toytrain.hpp"

namespace sepkit {

// Everything a `simulate` run needs: source synthesis plus mixing protocol.
struct SimulationScenario {
  MixtureScenario mixing;
  SourceKind source_kind = SourceKind::kArSpeechLike;
  std::size_t duration_samples = 64000;
  int sample_rate = 8000;
  std::size_t channels = 1;
  bool use_rir = false;
  double rir_decay = 0.5;
  std::size_t rir_length = 256;
  std::vector<std::vector<std::size_t>> rir_delays;  // [source][channel]
};

inline SimulationScenario scenario_from_json(const nlohmann::json& j) {
  SimulationScenario s;
  s.mixing.num_sources = j.value("num_sources", std::size_t{2});
  if (j.contains("target_sdr_range_db")) {
    const auto range = j.at("target_sdr_range_db").get<std::vector<double>>();
    if (range.size() != 2) throw MalformedFile("scenario: target_sdr_range_db needs two values");
    s.mixing.target_sdr_min_db = range[0];
    s.mixing.target_sdr_max_db = range[1];
  }
  if (j.contains("snr_range_db")) {
    const auto range = j.at("snr_range_db").get<std::vector<double>>();
    if (range.size() != 2) throw MalformedFile("scenario: snr_range_db needs two values");
    s.mixing.snr_min_db = range[0];
    s.mixing.snr_max_db = range[1];
  }
  s.mixing.noiseless = j.value("noiseless", false);
  s.mixing.seed = j.value("seed", std::uint64_t{0});
  s.source_kind = source_kind_from_name(j.value("source_kind", std::string("ar_speechlike")));
  s.duration_samples = j.value("duration_samples", std::size_t{64000});
  s.sample_rate = j.value("sample_rate", 8000);
  s.channels = j.value("channels", std::size_t{1});
  s.mixing.reference_channel = j.value("reference_channel", std::size_t{0});
  if (j.contains("rir")) {
    const nlohmann::json& r = j.at("rir");
    s.use_rir = true;
    s.rir_decay = r.value("decay", 0.5);
    s.rir_length = r.value("length", std::size_t{256});
    if (r.contains("delays"))
      s.rir_delays = r.at("delays").get<std::vector<std::vector<std::size_t>>>();
  }
  if (s.duration_samples == 0) throw MalformedFile("scenario: duration_samples must be positive");
  if (s.channels == 0) throw MalformedFile("scenario: channels must be positive");
  return s;
}

inline nlohmann::json scenario_to_json(const SimulationScenario& s) {
  nlohmann::json j;
  j["num_sources"] = s.mixing.num_sources;
  j["target_sdr_range_db"] = {s.mixing.target_sdr_min_db, s.mixing.target_sdr_max_db};
  j["snr_range_db"] = {s.mixing.snr_min_db, s.mixing.snr_max_db};
  j["noiseless"] = s.mixing.noiseless;
  j["seed"] = s.mixing.seed;
  j["source_kind"] = source_kind_name(s.source_kind);
  j["duration_samples"] = s.duration_samples;
  j["sample_rate"] = s.sample_rate;
  j["channels"] = s.channels;
  j["reference_channel"] = s.mixing.reference_channel;
  if (s.use_rir) {
    j["rir"] = {{"decay", s.rir_decay}, {"length", s.rir_length}};
    if (!s.rir_delays.empty()) j["rir"]["delays"] = s.rir_delays;
  }
  return j;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["permutation"] = report.permutation;
  nlohmann::json per_source = nlohmann::json::array();
  for (std::size_t k = 0; k < report.si_sdr_db.size(); ++k) {
    nlohmann::json row;
    row["si_sdr_db"] = report.si_sdr_db[k];
    row["sdr_db"] = report.sdr_db[k];
    if (report.has_input_scores()) {
      row["input_si_sdr_db"] = report.input_si_sdr_db[k];
      row["input_sdr_db"] = report.input_sdr_db[k];
      row["si_sdr_improvement_db"] = report.si_sdr_improvement_db[k];
      row["sdr_improvement_db"] = report.sdr_improvement_db[k];
    }
    per_source.push_back(std::move(row));
  }
  j["per_source"] = std::move(per_source);
  j["mean"] = {{"si_sdr_db", report.mean_si_sdr_db}, {"sdr_db", report.mean_sdr_db}};
  if (report.has_input_scores()) {
    double mean_improvement = 0.0;
    for (double v : report.si_sdr_improvement_db)
      mean_improvement += v / static_cast<double>(report.si_sdr_improvement_db.size());
    j["mean"]["si_sdr_improvement_db"] = mean_improvement;
  }
  j["sdr_definition"] = report.sdr_definition;
  j["sdr_filter_len"] = report.sdr_filter_len;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig config;
  config.steps = j.value("steps", std::size_t{2000});
  config.step_size = j.value("step_size", 1e-3);
  config.plateau_patience = j.value("plateau_patience", std::size_t{10});
  config.loss = train_loss_from_name(j.value("loss", std::string("tlmse")));
  config.feature_dim = j.value("feature_dim", std::size_t{128});
  config.window_len = j.value("window_len", std::size_t{32});
  config.advance = j.value("advance", std::size_t{16});
  config.seed = j.value("seed", std::uint64_t{0});
  return config;
}

}  // namespace sepkit
