#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepkit/beamforming.hpp"
#include "sepkit/errors.hpp"
#include "sepkit/extraction.hpp"
#include "sepkit/matrix.hpp"
#include "sepkit/transforms.hpp"

namespace sepkit {

static_assert(std::endian::native == std::endian::little,
              "tensor io assumes a little-endian host");

// Flat binary tensor file: one JSON header line (terminated by '\n')
// followed by the raw little-endian payload, row-major. The header always
// carries "shape", "dtype" and "endianness"; writers may add fields.
struct TensorFile {
  nlohmann::json header;
  std::vector<std::size_t> shape;
  std::string dtype;
  std::vector<double> data;  // converted to double regardless of stored dtype

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }
};

inline void write_tensor(const std::string& path, const std::vector<std::size_t>& shape,
                         const std::vector<double>& data, const std::string& dtype = "float64",
                         const nlohmann::json& extra = nlohmann::json::object()) {
  std::size_t expected = 1;
  for (std::size_t s : shape) expected *= s;
  if (expected != data.size())
    throw ShapeError("write_tensor: shape does not match data size");
  if (dtype != "float32" && dtype != "float64")
    throw ShapeError("write_tensor: dtype must be float32 or float64");

  nlohmann::json header = extra;
  header["shape"] = shape;
  header["dtype"] = dtype;
  header["endianness"] = "little";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_tensor: cannot open '" + path + "'");
  const std::string line = header.dump();
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  if (dtype == "float32") {
    for (double v : data) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  } else {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw IoError("write_tensor: failed writing '" + path + "'");
}

inline TensorFile read_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw MalformedFile("read_tensor: '" + path + "' has no header line");

  TensorFile tensor;
  try {
    tensor.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedFile("read_tensor: bad JSON header in '" + path + "': " + e.what());
  }
  if (!tensor.header.contains("shape") || !tensor.header.contains("dtype"))
    throw MalformedFile("read_tensor: header missing shape/dtype in '" + path + "'");
  if (tensor.header.value("endianness", "little") != "little")
    throw MalformedFile("read_tensor: only little-endian payloads supported");
  tensor.shape = tensor.header["shape"].get<std::vector<std::size_t>>();
  tensor.dtype = tensor.header["dtype"].get<std::string>();
  if (tensor.dtype != "float32" && tensor.dtype != "float64")
    throw MalformedFile("read_tensor: unsupported dtype '" + tensor.dtype + "'");

  const std::size_t count = tensor.element_count();
  const std::size_t elem_bytes = tensor.dtype == "float32" ? 4 : 8;
  std::vector<char> payload(count * elem_bytes);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw MalformedFile("read_tensor: payload shorter than header shape in '" + path + "'");
  char probe;
  if (in.read(&probe, 1) && in.gcount() == 1)
    throw MalformedFile("read_tensor: payload longer than header shape in '" + path + "'");

  tensor.data.resize(count);
  if (tensor.dtype == "float32") {
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (std::size_t i = 0; i < count; ++i) tensor.data[i] = static_cast<double>(src[i]);
  } else {
    const double* src = reinterpret_cast<const double*>(payload.data());
    for (std::size_t i = 0; i < count; ++i) tensor.data[i] = src[i];
  }
  return tensor;
}

// ---- learned-codec kernels ----------------------------------------------

// Writes <prefix>.encoder.tensor and <prefix>.decoder.tensor.
inline void save_learned_transform(const std::string& prefix, const TransformSpec& spec) {
  spec.require_learned_shapes();
  nlohmann::json extra;
  extra["window_len"] = spec.frame.window_len;
  extra["advance"] = spec.frame.advance;
  extra["feature_dim"] = spec.feature_dim;
  extra["layout"] = "encoder";
  write_tensor(prefix + ".encoder.tensor", {spec.feature_dim, spec.frame.window_len},
               spec.encoder_kernels.data, "float64", extra);
  extra["layout"] = "decoder";
  write_tensor(prefix + ".decoder.tensor", {spec.frame.window_len, spec.feature_dim},
               spec.decoder_kernels.data, "float64", extra);
}

inline TransformSpec load_learned_transform(const std::string& prefix) {
  const TensorFile enc = read_tensor(prefix + ".encoder.tensor");
  const TensorFile dec = read_tensor(prefix + ".decoder.tensor");
  if (enc.shape.size() != 2 || dec.shape.size() != 2)
    throw MalformedFile("load_learned_transform: kernels must be rank-2");
  TransformSpec spec;
  spec.kind = TransformKind::kLearned;
  spec.feature_dim = enc.shape[0];
  spec.frame.window_len = enc.shape[1];
  spec.frame.advance = enc.header.value("advance", spec.frame.window_len / 2);
  spec.frame.window = Window::kRect;
  if (dec.shape[0] != spec.frame.window_len || dec.shape[1] != spec.feature_dim)
    throw MalformedFile("load_learned_transform: encoder/decoder shapes disagree");
  spec.encoder_kernels = Matrix(spec.feature_dim, spec.frame.window_len);
  spec.encoder_kernels.data = enc.data;
  spec.decoder_kernels = Matrix(spec.frame.window_len, spec.feature_dim);
  spec.decoder_kernels.data = dec.data;
  spec.require_learned_shapes();
  return spec;
}

// ---- mask files -----------------------------------------------------------

// All masks of one separation run in a single file: float32 payload,
// row-major, sources outermost.
inline void save_masks(const std::string& path, const std::vector<Mask>& masks) {
  if (masks.empty()) throw ShapeError("save_masks: no masks");
  const Matrix& first = masks.front().values;
  std::vector<double> payload;
  payload.reserve(masks.size() * first.data.size());
  for (const Mask& m : masks) {
    require_same_shape(first, m.values, "save_masks");
    if (m.layout != masks.front().layout) throw ShapeError("save_masks: layouts differ");
    payload.insert(payload.end(), m.values.data.begin(), m.values.data.end());
  }
  nlohmann::json extra;
  extra["sources"] = masks.size();
  extra["frames"] = first.rows;
  extra["features"] = first.cols;
  extra["layout"] = layout_name(masks.front().layout);
  write_tensor(path, {masks.size(), first.rows, first.cols}, payload, "float32", extra);
}

inline std::vector<Mask> load_masks(const std::string& path) {
  const TensorFile tensor = read_tensor(path);
  if (tensor.shape.size() != 3)
    throw MalformedFile("load_masks: expected shape [sources, frames, features]");
  if (!tensor.header.contains("layout"))
    throw MalformedFile("load_masks: header missing layout");
  const LatentLayout layout = layout_from_name(tensor.header["layout"].get<std::string>());
  const std::size_t sources = tensor.shape[0];
  const std::size_t frames = tensor.shape[1];
  const std::size_t features = tensor.shape[2];
  if (tensor.header.value("sources", sources) != sources ||
      tensor.header.value("frames", frames) != frames ||
      tensor.header.value("features", features) != features)
    throw MalformedFile("load_masks: header fields disagree with shape");
  std::vector<Mask> masks(sources);
  for (std::size_t k = 0; k < sources; ++k) {
    masks[k].layout = layout;
    masks[k].values = Matrix(frames, features);
    const std::size_t base = k * frames * features;
    for (std::size_t i = 0; i < frames * features; ++i)
      masks[k].values.data[i] = tensor.data[base + i];
  }
  return masks;
}

// ---- beamformer designs ---------------------------------------------------

inline void save_beamformer_design(const std::string& path, const BeamformerDesign& design) {
  nlohmann::json extra;
  extra["layout"] = "beamformer";
  extra["num_channels"] = design.num_channels;
  extra["history"] = design.history;
  extra["diagonal_loading"] = design.diagonal_loading;
  write_tensor(path, {design.taps.size()}, design.taps, "float64", extra);
}

inline BeamformerDesign load_beamformer_design(const std::string& path) {
  const TensorFile tensor = read_tensor(path);
  if (tensor.shape.size() != 1)
    throw MalformedFile("load_beamformer_design: expected a rank-1 tensor");
  BeamformerDesign design;
  design.taps = tensor.data;
  design.num_channels = tensor.header.value("num_channels", std::size_t{1});
  design.history = tensor.header.value("history", std::size_t{0});
  design.diagonal_loading = tensor.header.value("diagonal_loading", 0.0);
  if (design.num_channels * (design.history + 1) != design.taps.size())
    throw MalformedFile("load_beamformer_design: tap count does not match header");
  return design;
}

}  // namespace sepkit
