#include <catch2/catch_amalgamated.hpp>

#include "sepkit/transforms.hpp"

#include "sepkit/linalg.hpp"

#include "oracle_helpers.hpp"

using namespace sepkit;

namespace {

TransformSpec small_stft() {
  return TransformSpec::stft_spec(FrameSpec{32, 16, Window::kSqrtHann}, 32);
}

}  // namespace

TEST_CASE("encode_stft_mag matches the spectrogram magnitudes") {
  const Waveform x = oracle::random_waveform(512, 21);
  const TransformSpec spec = small_stft();
  const StftMagnitude enc = encode_stft_mag(x, spec);
  const ComplexSpectrogram s = stft(x, spec.frame, spec.fft_size);
  REQUIRE(enc.magnitude.values.rows == s.num_frames());
  REQUIRE(enc.magnitude.values.cols == s.num_bins());
  for (std::size_t i = 0; i < s.bins.data.size(); ++i)
    REQUIRE(enc.magnitude.values.data[i] ==
            Catch::Approx(std::abs(s.bins.data[i])).margin(1e-12));
}

TEST_CASE("encode_stft_mag of silence is zero") {
  const StftMagnitude enc =
      encode_stft_mag(Waveform(std::vector<double>(256, 0.0), 8000), small_stft());
  for (double v : enc.magnitude.values.data) REQUIRE(v == 0.0);
}

TEST_CASE("encode_stft_mag of a bin-centered cosine has one dominant column") {
  const std::size_t n = 32;
  TransformSpec spec = TransformSpec::stft_spec(FrameSpec{n, n, Window::kRect}, n);
  std::vector<double> v(8 * n);
  for (std::size_t t = 0; t < v.size(); ++t)
    v[t] = std::cos(2.0 * 3.14159265358979323846 * 3.0 * static_cast<double>(t) /
                    static_cast<double>(n));
  const StftMagnitude enc = encode_stft_mag(Waveform(v, 8000), spec);
  for (std::size_t l = 0; l < enc.magnitude.values.rows; ++l) {
    double total = 0.0;
    for (std::size_t f = 0; f < enc.magnitude.values.cols; ++f)
      total += enc.magnitude.values(l, f) * enc.magnitude.values(l, f);
    const double peak = enc.magnitude.values(l, 3) * enc.magnitude.values(l, 3);
    REQUIRE(peak / total > 0.999);
  }
}

TEST_CASE("encode_stft_ri layout round-trips to the spectrogram") {
  const Waveform x = oracle::random_waveform(512, 22);
  const TransformSpec spec = small_stft();
  const LatentSignal latent = encode_stft_ri(x, spec);
  REQUIRE(latent.layout == LatentLayout::kRealImagSplit);
  const ComplexSpectrogram direct = stft(x, spec.frame, spec.fft_size);
  const ComplexSpectrogram rebuilt = latent_ri_to_spectrogram(latent, spec);
  REQUIRE(rebuilt.bins.data == direct.bins.data);
}

TEST_CASE("encode_stft_ri of an even-symmetric frame has vanishing imaginary columns") {
  // v[i] = v[(N - i) mod N] makes the DFT purely real; rect window, no pad.
  const std::size_t n = 32;
  TransformSpec spec = TransformSpec::stft_spec(FrameSpec{n, n, Window::kRect}, n);
  std::vector<double> v(n);
  std::mt19937_64 gen(3);
  for (std::size_t i = 0; i <= n / 2; ++i) {
    const double r = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
    v[i] = r;
    v[(n - i) % n] = r;
  }
  const LatentSignal latent = encode_stft_ri(Waveform(v, 8000), spec);
  const std::size_t bins = latent.values.cols / 2;
  for (std::size_t f = 0; f < bins; ++f)
    REQUIRE(std::abs(latent.values(0, f + bins)) < 1e-12);
}

TEST_CASE("encode_stft_ri of silence is zero") {
  const LatentSignal latent =
      encode_stft_ri(Waveform(std::vector<double>(256, 0.0), 8000), small_stft());
  for (double v : latent.values.data) REQUIRE(v == 0.0);
}

TEST_CASE("encode_learned equals the per-frame matrix product oracle") {
  TransformSpec spec = init_learned(24, 8, 4, 7);
  const Waveform x = oracle::random_waveform(64, 30);
  const LatentSignal latent = encode_learned(x, spec);
  for (std::size_t l = 0; l < latent.values.rows; ++l)
    for (std::size_t f = 0; f < 24; ++f) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 8; ++i) acc += x[l * 4 + i] * spec.encoder_kernels(f, i);
      REQUIRE(latent.values(l, f) == Catch::Approx(std::max(0.0, acc)).margin(1e-12));
    }
}

TEST_CASE("encode_learned clips at zero") {
  TransformSpec spec = init_learned(8, 4, 2, 1);
  SECTION("zero kernels give zero latents") {
    for (double& v : spec.encoder_kernels.data) v = 0.0;
    const LatentSignal latent = encode_learned(oracle::random_waveform(32, 2), spec);
    for (double v : latent.values.data) REQUIRE(v == 0.0);
  }
  SECTION("negative kernels on positive input are killed by the ReLU") {
    for (double& v : spec.encoder_kernels.data) v = -1.0;
    const LatentSignal latent =
        encode_learned(Waveform(std::vector<double>(32, 0.5), 8000), spec);
    for (double v : latent.values.data) REQUIRE(v == 0.0);
  }
  SECTION("output is never negative") {
    const LatentSignal latent = encode_learned(oracle::random_waveform(64, 3), spec);
    for (double v : latent.values.data) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("decode_learned basics") {
  TransformSpec spec = init_learned(8, 4, 4, 11);
  SECTION("zero latent decodes to silence") {
    LatentSignal latent;
    latent.layout = LatentLayout::kLearned;
    latent.values = Matrix(3, 8);
    const Waveform out = decode_learned(latent, spec, 12);
    for (double v : out.samples) REQUIRE(v == 0.0);
  }
  SECTION("a single frame is one decoder matrix product") {
    LatentSignal latent;
    latent.layout = LatentLayout::kLearned;
    latent.values = Matrix(1, 8);
    for (std::size_t f = 0; f < 8; ++f) latent.values(0, f) = static_cast<double>(f) - 3.0;
    const Waveform out = decode_learned(latent, spec, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (std::size_t f = 0; f < 8; ++f) acc += spec.decoder_kernels(i, f) * latent.values(0, f);
      REQUIRE(out[i] == Catch::Approx(acc).margin(1e-15));
    }
  }
  SECTION("shape mismatch is rejected") {
    LatentSignal latent;
    latent.layout = LatentLayout::kLearned;
    latent.values = Matrix(1, 9);
    REQUIRE_THROWS_AS(decode_learned(latent, spec, 4), ShapeError);
  }
}

TEST_CASE("pseudo-inverse decoder inverts a positive encoder") {
  // Positive kernels and positive input keep every pre-activation positive,
  // so the ReLU is inactive and decode(encode(x)) is linear. With the
  // decoder set to pinv(u) via the normal equations and no frame overlap the
  // reconstruction is exact to least-squares accuracy.
  const std::size_t feature_dim = 12;
  const std::size_t window_len = 8;
  TransformSpec spec = init_learned(feature_dim, window_len, window_len, 17);
  for (double& v : spec.encoder_kernels.data) v = std::abs(v) + 0.05;

  Matrix gram(window_len, window_len);
  for (std::size_t a = 0; a < window_len; ++a)
    for (std::size_t b = 0; b < window_len; ++b) {
      double acc = 0.0;
      for (std::size_t f = 0; f < feature_dim; ++f)
        acc += spec.encoder_kernels(f, a) * spec.encoder_kernels(f, b);
      gram(a, b) = acc;
    }
  for (std::size_t f = 0; f < feature_dim; ++f) {
    std::vector<double> col(window_len);
    for (std::size_t i = 0; i < window_len; ++i) col[i] = spec.encoder_kernels(f, i);
    const std::vector<double> solved = cholesky_solve_spd(gram, col);
    for (std::size_t i = 0; i < window_len; ++i) spec.decoder_kernels(i, f) = solved[i];
  }

  Waveform x(std::vector<double>(64), 8000);
  std::mt19937_64 gen(5);
  for (double& v : x.samples) v = 0.2 + static_cast<double>(gen() >> 11) * 0x1.0p-53;

  const LatentSignal latent = encode_learned(x, spec);
  const Waveform recon = decode_learned(latent, spec, x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    REQUIRE(recon[t] == Catch::Approx(x[t]).margin(1e-6));
}

TEST_CASE("decode_stft round trips") {
  const Waveform x = oracle::random_waveform(1024, 40);
  const TransformSpec spec = small_stft();
  SECTION("realimag layout") {
    const LatentSignal latent = encode_stft_ri(x, spec);
    const Waveform recon = decode_stft(latent, spec, x.size());
    for (std::size_t t = spec.frame.window_len; t + spec.frame.window_len < x.size(); ++t)
      REQUIRE(std::abs(recon[t] - x[t]) < 1e-10 * oracle::max_abs(x.samples));
  }
  SECTION("magnitude layout with mixture phase is the identity-mask case") {
    const StftMagnitude enc = encode_stft_mag(x, spec);
    const Waveform recon = decode_stft(enc.magnitude, spec, x.size(), &enc.phase);
    for (std::size_t t = spec.frame.window_len; t + spec.frame.window_len < x.size(); ++t)
      REQUIRE(std::abs(recon[t] - x[t]) < 1e-10 * oracle::max_abs(x.samples));
  }
  SECTION("magnitude layout without phase is rejected") {
    const StftMagnitude enc = encode_stft_mag(x, spec);
    REQUIRE_THROWS_AS(decode_stft(enc.magnitude, spec, x.size()), MissingPhase);
  }
  SECTION("zero latent decodes to silence") {
    LatentSignal latent = encode_stft_ri(x, spec);
    for (double& v : latent.values.data) v = 0.0;
    const Waveform out = decode_stft(latent, spec, x.size());
    for (double v : out.samples) REQUIRE(v == 0.0);
  }
}

TEST_CASE("init_learned is deterministic per seed") {
  const TransformSpec a = init_learned(16, 8, 4, 9);
  const TransformSpec b = init_learned(16, 8, 4, 9);
  const TransformSpec c = init_learned(16, 8, 4, 10);
  REQUIRE(a.encoder_kernels.data == b.encoder_kernels.data);
  REQUIRE(a.decoder_kernels.data == b.decoder_kernels.data);
  REQUIRE(a.encoder_kernels.data != c.encoder_kernels.data);
}

TEST_CASE("init_learned entries are centered and bounded") {
  const std::size_t feature_dim = 200;
  const std::size_t window_len = 64;  // 12800 entries
  const TransformSpec spec = init_learned(feature_dim, window_len, 32, 123);
  const double bound = std::sqrt(1.0 / static_cast<double>(window_len));
  double mean = 0.0;
  for (double v : spec.encoder_kernels.data) {
    REQUIRE(std::abs(v) <= bound);
    mean += v;
  }
  const std::size_t n = spec.encoder_kernels.data.size();
  mean /= static_cast<double>(n);
  // Var of uniform(-k, k) is k^2/3; the sample mean should sit within 3 sigma.
  const double sigma = bound / std::sqrt(3.0 * static_cast<double>(n));
  REQUIRE(std::abs(mean) < 3.0 * sigma);
}

TEST_CASE("linear encoders superpose latents") {
  const Waveform x1 = oracle::random_waveform(512, 51);
  const Waveform x2 = oracle::random_waveform(512, 52);
  Waveform sum(std::vector<double>(512), 8000);
  for (std::size_t t = 0; t < 512; ++t) sum.samples[t] = x1[t] + x2[t];

  SECTION("stft realimag") {
    const TransformSpec spec = small_stft();
    const LatentSignal a = encode_stft_ri(x1, spec);
    const LatentSignal b = encode_stft_ri(x2, spec);
    const LatentSignal c = encode_stft_ri(sum, spec);
    double scale = oracle::max_abs(c.values.data);
    for (std::size_t i = 0; i < c.values.data.size(); ++i)
      REQUIRE(std::abs(c.values.data[i] - (a.values.data[i] + b.values.data[i])) <=
              1e-12 * scale);
  }
  SECTION("learned codec with the ReLU disabled") {
    const TransformSpec spec = init_learned(24, 16, 8, 53);
    const Matrix a = encode_learned_pre(x1, spec);
    const Matrix b = encode_learned_pre(x2, spec);
    const Matrix c = encode_learned_pre(sum, spec);
    double scale = oracle::max_abs(c.data);
    for (std::size_t i = 0; i < c.data.size(); ++i)
      REQUIRE(std::abs(c.data[i] - (a.data[i] + b.data[i])) <= 1e-12 * scale);
  }
}

TEST_CASE("decode_learned is linear in the latent") {
  const TransformSpec spec = init_learned(16, 8, 4, 60);
  LatentSignal z1, z2;
  z1.layout = z2.layout = LatentLayout::kLearned;
  z1.values = Matrix(5, 16);
  z2.values = Matrix(5, 16);
  std::mt19937_64 gen(8);
  for (double& v : z1.values.data) v = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
  for (double& v : z2.values.data) v = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
  const double a = 1.3, b = -0.7;
  LatentSignal mixed = z1;
  for (std::size_t i = 0; i < mixed.values.data.size(); ++i)
    mixed.values.data[i] = a * z1.values.data[i] + b * z2.values.data[i];
  const std::size_t out_len = 8 + 4 * 4;
  const Waveform d1 = decode_learned(z1, spec, out_len);
  const Waveform d2 = decode_learned(z2, spec, out_len);
  const Waveform dm = decode_learned(mixed, spec, out_len);
  for (std::size_t t = 0; t < out_len; ++t)
    REQUIRE(dm[t] == Catch::Approx(a * d1[t] + b * d2[t]).margin(1e-12));
}
