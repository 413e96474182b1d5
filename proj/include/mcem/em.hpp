#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcem/decoder.hpp"
#include "mcem/nmf.hpp"
#include "mcem/samplers.hpp"
#include "mcem/stft.hpp"
#include "mcem/target.hpp"
#include "mcem/types.hpp"

namespace mcem {

enum class ZInit { kZeros, kPriorDraw, kWarmupLd };

struct EmConfig {
  int iterations = 100;  // J
  SamplerConfig sampler;
  int nmf_rank = 8;
  std::uint64_t nmf_seed = 0;
  ZInit z_init = ZInit::kWarmupLd;
  int warmup_steps = 20;
  // m-step statistics from the last retained sample only, instead of the
  // sample average
  bool single_sample_mstep = false;

  void validate() const {
    if (iterations <= 0) throw InvalidInput("em: iterations must be positive");
    if (nmf_rank <= 0) throw InvalidInput("em: nmf rank must be positive");
    if (warmup_steps < 0) throw InvalidInput("em: negative warmup");
    sampler.validate();
  }
};

struct EnhanceResult {
  ComplexSpectrogram s_hat;
  NmfParams noise;
  std::vector<double> loglik_trace;  // one entry per em iteration
  double wall_seconds = 0.0;
};

// Carries how far the run got when a numerical failure aborted it.
class EmRunError : public NumericalError {
 public:
  EmRunError(int iteration, std::vector<double> partial_trace, const std::string& why)
      : NumericalError("em iteration " + std::to_string(iteration) + ": " + why),
        iteration_(iteration),
        partial_trace_(std::move(partial_trace)) {}

  int iteration() const { return iteration_; }
  const std::vector<double>& partial_trace() const { return partial_trace_; }

 private:
  int iteration_;
  std::vector<double> partial_trace_;
};

// Posterior-averaged Wiener mask applied to the mixture:
//   G = mean_i  v_i / (v_i + noise),   s_hat = G . x
inline ComplexSpectrogram wiener_estimate(const ComplexSpectrogram& x,
                                          std::span<const Mat> speech_vars,
                                          const Mat& noise_var) {
  if (speech_vars.empty()) throw InvalidInput("wiener: no speech variances");
  const Eigen::Index T = x.frames();
  const Eigen::Index F = x.bins();
  if (noise_var.rows() != T || noise_var.cols() != F)
    throw InvalidInput("wiener: noise variance shape mismatch");
  Mat gain = Mat::Zero(T, F);
  for (const Mat& v : speech_vars) {
    if (v.rows() != T || v.cols() != F)
      throw InvalidInput("wiener: speech variance shape mismatch");
    gain.array() += v.array() / (v.array() + noise_var.array());
  }
  gain /= static_cast<double>(speech_vars.size());

  ComplexSpectrogram out;
  out.data = x.data.cwiseProduct(gain.cast<float>().cast<std::complex<float>>());
  return out;
}

// The full EM loop: alternate the posterior sampler over z with a
// multiplicative noise-parameter update, then reconstruct with the
// posterior-averaged Wiener gain of the final iteration's samples.
inline EnhanceResult run_em(const ComplexSpectrogram& x, const DecoderModel& decoder,
                            const EmConfig& cfg) {
  cfg.validate();
  if (x.frames() <= 0 || x.bins() <= 0) throw InvalidInput("em: empty spectrogram");
  if (x.bins() != decoder.freq_dim())
    throw InvalidInput("em: spectrogram has " + std::to_string(x.bins()) +
                       " bins, decoder expects " +
                       std::to_string(decoder.freq_dim()));

  const auto t0 = std::chrono::steady_clock::now();
  const Mat x_pow = power(x);
  const Eigen::Index T = x.frames();
  const Eigen::Index L = decoder.latent_dim();
  const rng::Key base = rng::Key::root(cfg.sampler.seed);

  NmfParams psi = init_nmf(x.bins(), T, cfg.nmf_rank, cfg.nmf_seed, x_pow);

  // latent initialisation; failures here count as iteration 0
  Mat z = Mat::Zero(T, L);
  try {
    if (cfg.z_init == ZInit::kPriorDraw) {
      z = rng::normal_mat(base.fork(rng::kTagInit), T, L);
    } else if (cfg.z_init == ZInit::kWarmupLd && cfg.warmup_steps > 0) {
      const SpeechTarget tg(x_pow, decoder, noise_variance(psi));
      ChainState st;
      st.samples = {std::move(z)};
      st.ids = {0};
      const rng::Key wk = base.fork(rng::kTagWarmup);
      for (int s = 1; s <= cfg.warmup_steps; ++s)
        st = ld_step(tg, std::move(st), cfg.sampler.step_size,
                     wk.fork(static_cast<std::uint64_t>(s)));
      z = std::move(st.samples[0]);
    }
  } catch (const NumericalError& e) {
    throw EmRunError(0, {}, e.what());
  }

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.iterations));
  std::vector<Mat> samples;
  std::vector<Mat> speech_vars;

  // LD keeps one persistent chain ensemble: spawned once before the first
  // iteration, then stepped in place so continuity across EM iterations
  // supplies the effective chain length. The adjusted samplers restart from
  // the carried mean each E-step instead.
  const bool ld = cfg.sampler.kind == SamplerKind::kLd;
  ChainState ld_state;
  if (ld) {
    try {
      ld_state = spawn_chains(z, cfg.sampler.chains, cfg.sampler.proposal_var,
                              base.fork(rng::kTagSpawn));
    } catch (const NumericalError& e) {
      throw EmRunError(0, {}, e.what());
    }
  }

  // the trace is evaluated at a smoothed posterior-mean speech variance so it
  // tracks fit progress instead of per-iteration sampling scatter
  Mat v_trace;

  for (int j = 1; j <= cfg.iterations; ++j) {
    try {
      const SpeechTarget target(x_pow, decoder, noise_variance(psi));
      const rng::Key it_key = base.fork(static_cast<std::uint64_t>(j));

      // E step
      if (ld) {
        const int steps = cfg.sampler.resolved_steps();
        for (int k = 1; k <= steps; ++k)
          ld_state = ld_step(target, std::move(ld_state), cfg.sampler.step_size,
                             it_key.fork(static_cast<std::uint64_t>(k)));
        samples = ld_state.samples;
      } else {
        SamplerConfig scfg = cfg.sampler;
        scfg.seed = it_key.state;
        samples = run_sampler(scfg, target, z);
        z.setZero();
        for (const Mat& s : samples) z += s;
        z /= static_cast<double>(samples.size());
      }

      // M step
      speech_vars = decoder.decode_batch(samples);
      const std::span<const Mat> stats =
          cfg.single_sample_mstep
              ? std::span<const Mat>(&speech_vars.back(), 1)
              : std::span<const Mat>(speech_vars);
      psi = mstep_update(psi, x_pow, stats);

      const Mat nv = noise_variance(psi);
      Mat v_mean = Mat::Zero(T, x.bins());
      for (const Mat& v : speech_vars) v_mean += v;
      v_mean /= static_cast<double>(speech_vars.size());
      v_trace = j == 1 ? std::move(v_mean) : Mat(0.98 * v_trace + 0.02 * v_mean);
      trace.push_back(mixture_loglik(x_pow, v_trace, nv));
    } catch (const NumericalError& e) {
      throw EmRunError(j, trace, e.what());
    }
  }

  EnhanceResult res;
  res.s_hat = wiener_estimate(x, speech_vars, noise_variance(psi));
  res.noise = std::move(psi);
  res.loglik_trace = std::move(trace);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace mcem
