#pragma once

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mcem/types.hpp"

namespace mcem {

enum class Window { kHann, kSqrtHann };

// Periodic windows (DFT-even), the convention that makes hop = n/2 overlap-add
// to a constant for sqrt-Hann analysis/synthesis pairs.
inline std::vector<double> make_window(Window kind, int n) {
  if (n <= 0) throw InvalidInput("window length must be positive");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double h =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi_v<double> * i / n);
    w[static_cast<std::size_t>(i)] = kind == Window::kHann ? h : std::sqrt(h);
  }
  return w;
}

struct StftConfig {
  int fft_size = 1024;
  int hop = 256;
  Window window = Window::kSqrtHann;

  int bins() const { return fft_size / 2 + 1; }

  // Checks the constant-overlap-add condition on the analysis*synthesis
  // window product (w^2 here, since both sides use the same window).
  void validate() const {
    if (fft_size < 2 || fft_size % 2 != 0)
      throw InvalidInput("fft_size must be even and >= 2, got " +
                         std::to_string(fft_size));
    if (hop <= 0 || hop > fft_size)
      throw InvalidInput("hop must be in [1, fft_size], got " + std::to_string(hop));
    const std::vector<double> w = make_window(window, fft_size);
    std::vector<double> tile(static_cast<std::size_t>(hop), 0.0);
    for (int n = 0; n < fft_size; ++n)
      tile[static_cast<std::size_t>(n % hop)] += w[static_cast<std::size_t>(n)] *
                                                 w[static_cast<std::size_t>(n)];
    const auto [lo, hi] = std::minmax_element(tile.begin(), tile.end());
    if (*lo <= 0.0 || (*hi - *lo) > 1e-9 * *hi)
      throw InvalidInput("window/hop pair is not constant-overlap-add");
  }
};

struct ComplexSpectrogram {
  CMat data;  // frames x bins

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index bins() const { return data.cols(); }
};

// |X|^2 in double
inline Mat power(const ComplexSpectrogram& s) {
  return s.data.cwiseAbs2().cast<double>();
}

// Interior overlap-add gain of w^2; Parseval with this factor:
//   sum_t sum_n |frame_t[n]|^2  ~=  gain * sum_n x[n]^2
// up to boundary padding effects.
inline double overlap_power_gain(const StftConfig& c) {
  const std::vector<double> w = make_window(c.window, c.fft_size);
  double s = 0.0;
  for (double v : w) s += v * v;
  return s / c.hop;
}

inline ComplexSpectrogram stft(const Waveform& wav, const StftConfig& cfg) {
  validate(wav);
  cfg.validate();
  const auto len = static_cast<Eigen::Index>(wav.samples.size());
  const int fft = cfg.fft_size;
  if (len < fft)
    throw InvalidInput("waveform shorter than one frame: " + std::to_string(len) +
                       " < " + std::to_string(fft));

  const Eigen::Index frames = len / cfg.hop + 1;
  const Eigen::Index pad = fft / 2;
  const Eigen::Index padded_len =
      std::max<Eigen::Index>(pad + len, (frames - 1) * cfg.hop + fft);

  // center padding: reflect on the left, reflect then zeros on the right
  std::vector<double> x(static_cast<std::size_t>(padded_len), 0.0);
  for (Eigen::Index i = 0; i < pad; ++i)
    x[static_cast<std::size_t>(i)] = wav.samples[static_cast<std::size_t>(pad - i)];
  std::copy(wav.samples.begin(), wav.samples.end(), x.begin() + pad);
  for (Eigen::Index i = pad + len; i < padded_len; ++i) {
    const Eigen::Index r = len - 2 - (i - pad - len);
    x[static_cast<std::size_t>(i)] = r >= 0 ? wav.samples[static_cast<std::size_t>(r)] : 0.0;
  }

  const std::vector<double> win = make_window(cfg.window, fft);
  Eigen::FFT<double> fwd;
  fwd.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  ComplexSpectrogram out;
  out.data.resize(frames, cfg.bins());
  std::vector<double> buf(static_cast<std::size_t>(fft));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t * cfg.hop);
    for (int n = 0; n < fft; ++n)
      buf[static_cast<std::size_t>(n)] =
          x[off + static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
    fwd.fwd(spec, buf);
    for (int f = 0; f < cfg.bins(); ++f)
      out.data(t, f) = std::complex<float>(spec[static_cast<std::size_t>(f)]);
  }
  return out;
}

// Weighted overlap-add inverse with per-sample window normalisation; exact
// wherever the synthesis windows cover the sample. out_len < 0 means the
// maximal centered length (frames - 1) * hop.
inline Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg,
                      int sample_rate = 16000, Eigen::Index out_len = -1) {
  cfg.validate();
  if (s.bins() != cfg.bins())
    throw InvalidInput("spectrogram has " + std::to_string(s.bins()) +
                       " bins, config expects " + std::to_string(cfg.bins()));
  if (s.frames() <= 0) throw InvalidInput("empty spectrogram");

  const int fft = cfg.fft_size;
  const Eigen::Index frames = s.frames();
  const Eigen::Index padded_len = (frames - 1) * cfg.hop + fft;
  const Eigen::Index pad = fft / 2;
  if (out_len < 0) out_len = (frames - 1) * cfg.hop;
  if (out_len == 0 || pad + out_len > padded_len)
    throw InvalidInput("requested length " + std::to_string(out_len) +
                       " not covered by " + std::to_string(frames) + " frames");

  const std::vector<double> win = make_window(cfg.window, fft);
  Eigen::FFT<double> inv;
  inv.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  std::vector<double> acc(static_cast<std::size_t>(padded_len), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(padded_len), 0.0);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(cfg.bins()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int f = 0; f < cfg.bins(); ++f)
      spec[static_cast<std::size_t>(f)] = std::complex<double>(s.data(t, f));
    inv.inv(frame, spec, fft);
    const std::size_t off = static_cast<std::size_t>(t * cfg.hop);
    for (int n = 0; n < fft; ++n) {
      const double w = win[static_cast<std::size_t>(n)];
      acc[off + static_cast<std::size_t>(n)] += frame[static_cast<std::size_t>(n)] * w;
      wsum[off + static_cast<std::size_t>(n)] += w * w;
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(static_cast<std::size_t>(out_len));
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const std::size_t j = static_cast<std::size_t>(pad + i);
    out.samples[static_cast<std::size_t>(i)] =
        wsum[j] > 0.0 ? acc[j] / wsum[j] : 0.0;
  }
  return out;
}

}  // namespace mcem
