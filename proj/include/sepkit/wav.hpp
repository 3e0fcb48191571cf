#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sepkit/errors.hpp"
#include "sepkit/waveform.hpp"

namespace sepkit {

static_assert(std::endian::native == std::endian::little,
              "wav io assumes a little-endian host");

enum class WavFormat { kPcm16, kFloat32, kFloat64 };

namespace detail {

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(const std::vector<char>& bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace detail

// RIFF/WAVE writer: PCM16 or IEEE float32, channels interleaved.
inline void write_wav(const std::string& path, const MultichannelWaveform& audio,
                      WavFormat format = WavFormat::kFloat32) {
  audio.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_wav: cannot open '" + path + "'");

  const std::uint16_t channels = static_cast<std::uint16_t>(audio.num_channels());
  const std::uint32_t rate = static_cast<std::uint32_t>(audio.sample_rate());
  const std::uint16_t bytes_per_sample =
      format == WavFormat::kPcm16 ? 2 : (format == WavFormat::kFloat32 ? 4 : 8);
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bytes_per_sample);
  const std::uint32_t frames = static_cast<std::uint32_t>(audio.num_samples());
  const std::uint32_t data_bytes = frames * block_align;
  const bool is_float = format != WavFormat::kPcm16;
  // Non-PCM formats carry the cbSize field and a fact chunk.
  const std::uint32_t fmt_bytes = is_float ? 18 : 16;
  const std::uint32_t riff_bytes =
      4 + (8 + fmt_bytes) + (is_float ? 12 : 0) + (8 + data_bytes);

  out.write("RIFF", 4);
  detail::put<std::uint32_t>(out, riff_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::put<std::uint32_t>(out, fmt_bytes);
  detail::put<std::uint16_t>(out, is_float ? 3 : 1);
  detail::put<std::uint16_t>(out, channels);
  detail::put<std::uint32_t>(out, rate);
  detail::put<std::uint32_t>(out, rate * block_align);
  detail::put<std::uint16_t>(out, block_align);
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  if (is_float) {
    detail::put<std::uint16_t>(out, 0);  // cbSize
    out.write("fact", 4);
    detail::put<std::uint32_t>(out, 4);
    detail::put<std::uint32_t>(out, frames);
  }
  out.write("data", 4);
  detail::put<std::uint32_t>(out, data_bytes);

  for (std::uint32_t t = 0; t < frames; ++t) {
    for (std::uint16_t d = 0; d < channels; ++d) {
      const double v = audio.channels[d].samples[t];
      if (format == WavFormat::kFloat64) {
        detail::put<double>(out, v);
      } else if (is_float) {
        detail::put<float>(out, static_cast<float>(v));
      } else {
        const long q = std::lrint(std::clamp(v, -1.0, 1.0) * 32768.0);
        detail::put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp<long>(q, -32768, 32767)));
      }
    }
  }
  if (!out) throw IoError("write_wav: failed writing '" + path + "'");
}

inline void write_wav(const std::string& path, const Waveform& audio,
                      WavFormat format = WavFormat::kFloat32) {
  write_wav(path, MultichannelWaveform({audio}), format);
}

// Chunk-scanning reader for the formats the writer emits.
inline MultichannelWaveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw MalformedFile("read_wav: '" + path + "' is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_offset = 0, data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    char id[4];
    std::memcpy(id, bytes.data() + pos, 4);
    const std::uint32_t size = detail::get<std::uint32_t>(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size())
      throw MalformedFile("read_wav: truncated chunk in '" + path + "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw MalformedFile("read_wav: short fmt chunk");
      format = detail::get<std::uint16_t>(bytes, body);
      channels = detail::get<std::uint16_t>(bytes, body + 2);
      rate = detail::get<std::uint32_t>(bytes, body + 4);
      bits = detail::get<std::uint16_t>(bytes, body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_offset = body;
      data_size = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_offset == 0)
    throw MalformedFile("read_wav: missing fmt or data chunk in '" + path + "'");
  if (channels == 0) throw MalformedFile("read_wav: zero channels");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  const bool float64 = format == 3 && bits == 64;
  if (!pcm16 && !float32 && !float64)
    throw MalformedFile("read_wav: unsupported encoding (format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bit)");

  const std::size_t bytes_per_sample = pcm16 ? 2 : (float32 ? 4 : 8);
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;

  std::vector<Waveform> out(channels,
                            Waveform(std::vector<double>(frames, 0.0), static_cast<int>(rate)));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::uint16_t d = 0; d < channels; ++d) {
      const std::size_t offset = data_offset + t * frame_bytes + d * bytes_per_sample;
      out[d].samples[t] = pcm16 ? detail::get<std::int16_t>(bytes, offset) / 32768.0
                                : float32
                                      ? static_cast<double>(detail::get<float>(bytes, offset))
                                      : detail::get<double>(bytes, offset);
    }
  }
  return MultichannelWaveform(std::move(out));
}

}  // namespace sepkit
