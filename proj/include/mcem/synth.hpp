#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>

#include "mcem/decoder.hpp"
#include "mcem/nmf.hpp"
#include "mcem/rng.hpp"
#include "mcem/stft.hpp"
#include "mcem/types.hpp"

namespace mcem {

// Synthetic mixtures drawn from the generative model itself: latents from the
// prior through a known decoder give the speech variance, a low-rank
// spectral factorisation gives the noise variance, and both are realised as
// circular complex Gaussians before synthesis to the time domain.

struct SynthSpec {
  int sample_rate = 16000;
  int num_samples = 19200;
  StftConfig stft{128, 64, Window::kSqrtHann};
  int latent_dim = 4;
  int noise_rank = 2;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticMixture {
  Waveform clean;
  Waveform noise;
  Waveform mixture;
  ComplexSpectrogram x;  // stft of the mixture
};

// A structured spectral decoder for data generation: each latent coordinate
// drives a smooth spectral bump, plus a small dense component so every bin
// responds to every coordinate. Bias tilts energy towards low frequencies.
inline std::unique_ptr<DecoderModel> make_benchmark_decoder(int freq_dim,
                                                            int latent_dim,
                                                            std::uint64_t seed) {
  if (freq_dim <= 1 || latent_dim <= 0) throw InvalidInput("bad decoder dims");
  const rng::Key k = rng::Key::root(seed);
  Mat w(freq_dim, latent_dim);
  const double width = static_cast<double>(freq_dim) / (2.6 * latent_dim);
  for (int l = 0; l < latent_dim; ++l) {
    // formant-like bumps kept above the low band the noise model occupies
    const double frac =
        latent_dim > 1 ? 0.32 + 0.58 * l / static_cast<double>(latent_dim - 1) : 0.6;
    const double center = frac * freq_dim;
    for (int f = 0; f < freq_dim; ++f) {
      const double d = (f - center) / width;
      const double bump = 3.2 * std::exp(-0.5 * d * d);
      const double dense =
          0.1 * (2.0 * k.fork(l).u01(static_cast<std::uint64_t>(f)) - 1.0);
      w(f, l) = static_cast<float>(bump + dense);
    }
  }
  Vec b(freq_dim);
  for (int f = 0; f < freq_dim; ++f)
    b(f) = static_cast<float>(0.0 - 2.0 * f / static_cast<double>(freq_dim - 1));
  return std::make_unique<AffineExpDecoder>(std::move(w), std::move(b));
}

// Stationary-ish low-rank noise: smooth spectral templates, slowly varying
// activations.
inline NmfParams make_benchmark_noise(Eigen::Index freq, Eigen::Index frames,
                                      int rank, std::uint64_t seed) {
  if (rank <= 0) throw InvalidInput("bad noise rank");
  const rng::Key k = rng::Key::root(seed);
  NmfParams p;
  p.w.resize(freq, rank);
  for (int r = 0; r < rank; ++r) {
    const double slope = 5.0 + 3.0 * k.fork(r).u01(0);
    const double ripple = 0.3 * k.fork(r).u01(1);
    const double phase = 6.28 * k.fork(r).u01(2);
    for (Eigen::Index f = 0; f < freq; ++f) {
      const double x = static_cast<double>(f) / static_cast<double>(freq - 1);
      p.w(f, r) = std::exp(-slope * x) * (1.0 + ripple * std::sin(8.0 * x + phase)) +
                  0.01;
    }
  }
  p.h.resize(rank, frames);
  for (int r = 0; r < rank; ++r) {
    const double rate = 0.05 + 0.1 * k.fork(100 + r).u01(0);
    const double phase = 6.28 * k.fork(100 + r).u01(1);
    for (Eigen::Index t = 0; t < frames; ++t)
      p.h(r, t) = 1.0 + 0.25 * std::sin(rate * static_cast<double>(t) + phase);
  }
  return p;
}

namespace detail {

// circular complex gaussian realisation of a variance map, as float storage
inline CMat realise(const Mat& var, rng::Key k) {
  CMat s(var.rows(), var.cols());
  for (Eigen::Index t = 0; t < var.rows(); ++t)
    for (Eigen::Index f = 0; f < var.cols(); ++f) {
      const auto ctr = static_cast<std::uint64_t>(t * var.cols() + f);
      const double sd = std::sqrt(0.5 * var(t, f));
      s(t, f) = std::complex<float>(static_cast<float>(sd * k.fork(0).normal(ctr)),
                                    static_cast<float>(sd * k.fork(1).normal(ctr)));
    }
  return s;
}

}  // namespace detail

// Draws one utterance from the generative model and mixes it with low-rank
// noise at the requested time-domain SNR.
inline SyntheticMixture make_mixture(const SynthSpec& spec,
                                     const DecoderModel& decoder) {
  spec.stft.validate();
  if (spec.num_samples < spec.stft.fft_size)
    throw InvalidInput("synthetic utterance shorter than one frame");
  if (decoder.latent_dim() != spec.latent_dim ||
      decoder.freq_dim() != spec.stft.bins())
    throw InvalidInput("decoder does not match the synthesis spec");

  const Eigen::Index T =
      static_cast<Eigen::Index>(spec.num_samples) / spec.stft.hop + 1;
  const rng::Key k = rng::Key::root(spec.seed);

  const Mat z = rng::normal_mat(k.fork(0), T, spec.latent_dim);
  const Mat speech_var = decoder.decode(z);
  ComplexSpectrogram s;
  s.data = detail::realise(speech_var, k.fork(1));

  const NmfParams noise_nmf =
      make_benchmark_noise(spec.stft.bins(), T, spec.noise_rank, spec.seed ^ 0x5eed);
  const Mat noise_var = noise_variance(noise_nmf);
  ComplexSpectrogram b;
  b.data = detail::realise(noise_var, k.fork(2));

  SyntheticMixture out;
  out.clean = istft(s, spec.stft, spec.sample_rate, spec.num_samples);
  out.noise = istft(b, spec.stft, spec.sample_rate, spec.num_samples);

  double ps = 0.0, pb = 0.0;
  for (double v : out.clean.samples) ps += v * v;
  for (double v : out.noise.samples) pb += v * v;
  if (ps <= 0.0 || pb <= 0.0) throw NumericalError("degenerate synthetic draw");
  const double g = std::sqrt(ps / (pb * std::pow(10.0, spec.snr_db / 10.0)));

  out.mixture.sample_rate = spec.sample_rate;
  out.mixture.samples.resize(out.clean.samples.size());
  for (std::size_t i = 0; i < out.mixture.samples.size(); ++i) {
    out.noise.samples[i] *= g;
    out.mixture.samples[i] = out.clean.samples[i] + out.noise.samples[i];
  }
  out.x = stft(out.mixture, spec.stft);
  return out;
}

}  // namespace mcem
