#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "mcem/stft.hpp"

using mcem::ComplexSpectrogram;
using mcem::StftConfig;
using mcem::Waveform;
using mcem::Window;

namespace {

Waveform make_wave(std::vector<double> s, int sr = 16000) {
  Waveform w;
  w.samples = std::move(s);
  w.sample_rate = sr;
  return w;
}

double roundtrip_rel_error(const Waveform& w, const StftConfig& cfg) {
  const ComplexSpectrogram s = mcem::stft(w, cfg);
  const Waveform back = mcem::istft(s, cfg, w.sample_rate,
                                    static_cast<Eigen::Index>(w.samples.size()));
  REQUIRE(back.samples.size() == w.samples.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double d = back.samples[i] - w.samples[i];
    num += d * d;
    den += w.samples[i] * w.samples[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("spectrogram storage is single precision complex") {
  static_assert(std::is_same_v<mcem::CMat::Scalar, std::complex<float>>);
  SUCCEED();
}

TEST_CASE("frame count is len/hop + 1") {
  StftConfig cfg;
  cfg.fft_size = 64;
  cfg.hop = 16;
  for (std::size_t len : {64u, 65u, 79u, 80u, 81u, 160u, 1000u}) {
    const Waveform w = make_wave(testutil::white_noise(len, 1));
    const ComplexSpectrogram s = mcem::stft(w, cfg);
    REQUIRE(s.frames() == static_cast<Eigen::Index>(len) / cfg.hop + 1);
    REQUIRE(s.bins() == cfg.fft_size / 2 + 1);
  }
}

TEST_CASE("stft matches a naive windowed DFT with center reflection padding") {
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.hop = 8;
  cfg.window = Window::kSqrtHann;

  const std::size_t len = 40;
  const std::vector<double> x = testutil::white_noise(len, 7);
  const Waveform w = make_wave(x);
  const ComplexSpectrogram s = mcem::stft(w, cfg);

  // oracle padding: reflect both sides, zeros beyond
  const int pad = cfg.fft_size / 2;
  auto sample_at = [&](long i) -> double {
    if (i < 0) i = -i;
    if (i >= static_cast<long>(len)) i = 2 * static_cast<long>(len) - 2 - i;
    return (i >= 0 && i < static_cast<long>(len)) ? x[static_cast<std::size_t>(i)]
                                                  : 0.0;
  };
  const std::vector<double> win = mcem::make_window(cfg.window, cfg.fft_size);
  for (Eigen::Index t = 0; t < s.frames(); ++t) {
    std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
    for (int n = 0; n < cfg.fft_size; ++n)
      frame[static_cast<std::size_t>(n)] =
          sample_at(static_cast<long>(t) * cfg.hop + n - pad) *
          win[static_cast<std::size_t>(n)];
    const auto ref = testutil::naive_dft(frame);
    for (Eigen::Index f = 0; f < s.bins(); ++f) {
      const std::complex<double> got(s.data(t, f));
      REQUIRE(std::abs(got - ref[static_cast<std::size_t>(f)]) < 1e-5);
    }
  }
}

TEST_CASE("round trip is exact to single precision") {
  StftConfig cfg;  // 1024 / 256 sqrt-Hann
  const std::vector<std::vector<double>> signals = {
      testutil::white_noise(16000, 3),
      testutil::ar2_signal(12345, 1.6, -0.8, 4),
      [] {
        std::vector<double> s(8192);
        for (std::size_t i = 0; i < s.size(); ++i)
          s[i] = std::sin(2.0 * std::numbers::pi_v<double> * 440.0 *
                          static_cast<double>(i) / 16000.0);
        return s;
      }(),
  };
  for (const auto& sig : signals)
    REQUIRE(roundtrip_rel_error(make_wave(sig), cfg) < 1e-6);
}

TEST_CASE("round trip holds for other COLA configurations") {
  const std::vector<double> sig = testutil::ar2_signal(5000, 1.2, -0.5, 9);

  StftConfig a;
  a.fft_size = 512;
  a.hop = 128;
  a.window = Window::kSqrtHann;
  REQUIRE(roundtrip_rel_error(make_wave(sig), a) < 1e-6);

  StftConfig b;
  b.fft_size = 256;
  b.hop = 64;
  b.window = Window::kHann;
  REQUIRE(roundtrip_rel_error(make_wave(sig), b) < 1e-6);

  // length not a multiple of the hop
  StftConfig c;
  c.fft_size = 128;
  c.hop = 64;
  c.window = Window::kSqrtHann;
  REQUIRE(roundtrip_rel_error(make_wave(testutil::white_noise(999, 11)), c) < 1e-6);
}

TEST_CASE("energy matches Parseval with the overlap gain factor") {
  StftConfig cfg;
  const std::size_t len = 1u << 21;
  const std::vector<double> x = testutil::ar2_signal(len, 1.0, -0.4, 5);
  const ComplexSpectrogram s = mcem::stft(make_wave(x), cfg);
  const mcem::Mat p = mcem::power(s);

  double spec_energy = 0.0;
  for (Eigen::Index t = 0; t < p.rows(); ++t) {
    spec_energy += p(t, 0) + p(t, p.cols() - 1);
    for (Eigen::Index f = 1; f < p.cols() - 1; ++f) spec_energy += 2.0 * p(t, f);
  }
  spec_energy /= cfg.fft_size;

  double sig_energy = 0.0;
  for (double v : x) sig_energy += v * v;
  sig_energy *= mcem::overlap_power_gain(cfg);

  REQUIRE(std::abs(spec_energy - sig_energy) < 1e-3 * sig_energy);
}

TEST_CASE("istft honours the requested output length") {
  StftConfig cfg;
  cfg.fft_size = 128;
  cfg.hop = 32;
  const Waveform w = make_wave(testutil::white_noise(801, 2));
  const ComplexSpectrogram s = mcem::stft(w, cfg);

  const Waveform def = mcem::istft(s, cfg);
  REQUIRE(def.samples.size() == static_cast<std::size_t>((s.frames() - 1) * cfg.hop));

  const Waveform exact = mcem::istft(s, cfg, 8000, 801);
  REQUIRE(exact.samples.size() == 801);
  REQUIRE(exact.sample_rate == 8000);

  REQUIRE_THROWS_AS(mcem::istft(s, cfg, 8000, 1 << 20), mcem::InvalidInput);
}

TEST_CASE("synthesis of a modified spectrogram stays finite") {
  StftConfig cfg;
  cfg.fft_size = 256;
  cfg.hop = 64;
  ComplexSpectrogram s = mcem::stft(make_wave(testutil::white_noise(4096, 6)), cfg);
  s.data.rightCols(s.bins() / 2).setZero();
  const Waveform y = mcem::istft(s, cfg);
  for (double v : y.samples) REQUIRE(std::isfinite(v));
}

TEST_CASE("configuration validation") {
  StftConfig bad_hop;
  bad_hop.fft_size = 256;
  bad_hop.hop = 512;
  REQUIRE_THROWS_AS(bad_hop.validate(), mcem::InvalidInput);

  // plain Hann squared does not tile at half overlap
  StftConfig hann_half;
  hann_half.fft_size = 256;
  hann_half.hop = 128;
  hann_half.window = Window::kHann;
  REQUIRE_THROWS_AS(hann_half.validate(), mcem::InvalidInput);

  StftConfig odd;
  odd.fft_size = 255;
  odd.hop = 64;
  REQUIRE_THROWS_AS(odd.validate(), mcem::InvalidInput);

  StftConfig ok;  // defaults
  REQUIRE_NOTHROW(ok.validate());

  const Waveform tiny = make_wave(std::vector<double>(100, 0.5));
  REQUIRE_THROWS_AS(mcem::stft(tiny, ok), mcem::InvalidInput);
}
