#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "mcem/bench.hpp"
#include "mcem/em.hpp"
#include "mcem/metrics.hpp"
#include "mcem/synth.hpp"

using mcem::EmConfig;
using mcem::EnhanceResult;
using mcem::Mat;
using mcem::SamplerKind;
using mcem::SynthSpec;
using mcem::SyntheticMixture;
using mcem::Vec;

namespace {

EmConfig quick_config(SamplerKind kind, int iterations) {
  EmConfig cfg;
  cfg.iterations = iterations;
  cfg.sampler.kind = kind;
  cfg.sampler.chains = 5;
  cfg.nmf_rank = 4;
  cfg.sampler.seed = 7;
  cfg.nmf_seed = 13;
  return cfg;
}

struct Scenario {
  SynthSpec spec;
  std::unique_ptr<mcem::DecoderModel> decoder;
  SyntheticMixture mix;
};

Scenario make_scenario(std::uint64_t seed) {
  Scenario s;
  s.spec.seed = seed;
  s.decoder =
      mcem::make_benchmark_decoder(s.spec.stft.bins(), s.spec.latent_dim, 77);
  s.mix = mcem::make_mixture(s.spec, *s.decoder);
  return s;
}

}  // namespace

TEST_CASE("wiener estimate matches the scalar gain formula") {
  std::mt19937 gen(1);
  std::normal_distribution<double> d(0.0, 1.0);
  mcem::ComplexSpectrogram x;
  x.data.resize(4, 6);
  for (Eigen::Index t = 0; t < 4; ++t)
    for (Eigen::Index f = 0; f < 6; ++f)
      x.data(t, f) = std::complex<float>(static_cast<float>(d(gen)),
                                         static_cast<float>(d(gen)));
  std::vector<Mat> vs = {Mat::Constant(4, 6, 0.5).eval(),
                         Mat::Constant(4, 6, 1.5).eval()};
  vs[0](1, 2) = 4.0;
  const Mat nv = Mat::Constant(4, 6, 0.5);

  const mcem::ComplexSpectrogram s = mcem::wiener_estimate(x, vs, nv);
  for (Eigen::Index t = 0; t < 4; ++t)
    for (Eigen::Index f = 0; f < 6; ++f) {
      const double g0 = vs[0](t, f) / (vs[0](t, f) + nv(t, f));
      const double g1 = vs[1](t, f) / (vs[1](t, f) + nv(t, f));
      const float g = static_cast<float>(0.5 * (g0 + g1));
      REQUIRE(s.data(t, f) == x.data(t, f) * g);
    }
}

TEST_CASE("wiener gains shrink every bin towards zero") {
  Scenario sc = make_scenario(11);
  const EnhanceResult res = mcem::run_em(sc.mix.x, *sc.decoder,
                                         quick_config(SamplerKind::kLd, 10));
  REQUIRE(res.s_hat.data.rows() == sc.mix.x.data.rows());
  REQUIRE(res.s_hat.data.cols() == sc.mix.x.data.cols());
  for (Eigen::Index t = 0; t < res.s_hat.data.rows(); ++t)
    for (Eigen::Index f = 0; f < res.s_hat.data.cols(); ++f)
      REQUIRE(std::abs(res.s_hat.data(t, f)) <=
              std::abs(sc.mix.x.data(t, f)) * (1.0f + 1e-6f));
}

TEST_CASE("em runs produce a full trace and floored noise factors") {
  Scenario sc = make_scenario(3);
  const EnhanceResult res = mcem::run_em(sc.mix.x, *sc.decoder,
                                         quick_config(SamplerKind::kMh, 12));
  REQUIRE(res.loglik_trace.size() == 12);
  for (double v : res.loglik_trace) REQUIRE(std::isfinite(v));
  REQUIRE(res.noise.w.minCoeff() >= mcem::kNmfFloor);
  REQUIRE(res.noise.h.minCoeff() >= mcem::kNmfFloor);
  REQUIRE(res.wall_seconds > 0.0);
}

TEST_CASE("em is deterministic in its seeds") {
  Scenario sc = make_scenario(5);
  const EmConfig cfg = quick_config(SamplerKind::kMala, 8);
  const EnhanceResult a = mcem::run_em(sc.mix.x, *sc.decoder, cfg);
  const EnhanceResult b = mcem::run_em(sc.mix.x, *sc.decoder, cfg);
  REQUIRE(a.s_hat.data == b.s_hat.data);
  REQUIRE(a.loglik_trace == b.loglik_trace);

  EmConfig other = cfg;
  other.sampler.seed = 8;
  const EnhanceResult c = mcem::run_em(sc.mix.x, *sc.decoder, other);
  REQUIRE(a.s_hat.data != c.s_hat.data);
}

TEST_CASE("every sampler lifts si-sdr on a matched synthetic mixture") {
  Scenario sc = make_scenario(21);
  const double in_sdr = mcem::si_sdr(sc.mix.mixture, sc.mix.clean);

  for (SamplerKind kind :
       {SamplerKind::kLd, SamplerKind::kMh, SamplerKind::kMala}) {
    const EnhanceResult res =
        mcem::run_em(sc.mix.x, *sc.decoder, quick_config(kind, 30));
    const mcem::Waveform s_hat =
        mcem::istft(res.s_hat, sc.spec.stft, sc.spec.sample_rate,
                    sc.spec.num_samples);
    const double out_sdr = mcem::si_sdr(s_hat, sc.mix.clean);
    INFO("sampler " << mcem::to_string(kind) << ": " << in_sdr << " -> "
                    << out_sdr);
    REQUIRE(out_sdr > in_sdr + 2.0);
  }
}

TEST_CASE("the likelihood trace is mostly non-decreasing") {
  Scenario sc = make_scenario(8);
  for (SamplerKind kind :
       {SamplerKind::kLd, SamplerKind::kMh, SamplerKind::kMala}) {
    const EnhanceResult res =
        mcem::run_em(sc.mix.x, *sc.decoder, quick_config(kind, 40));
    const double frac = mcem::monotone_fraction(res.loglik_trace);
    INFO("sampler " << mcem::to_string(kind) << " monotone fraction " << frac);
    REQUIRE(frac >= 0.9);
    // and it should actually climb overall
    REQUIRE(res.loglik_trace.back() > res.loglik_trace.front());
  }
}

TEST_CASE("single-sample m-step is a valid variant") {
  Scenario sc = make_scenario(13);
  EmConfig cfg = quick_config(SamplerKind::kMh, 10);
  cfg.single_sample_mstep = true;
  const EnhanceResult a = mcem::run_em(sc.mix.x, *sc.decoder, cfg);
  cfg.single_sample_mstep = false;
  const EnhanceResult b = mcem::run_em(sc.mix.x, *sc.decoder, cfg);
  REQUIRE(a.loglik_trace.size() == b.loglik_trace.size());
  REQUIRE(a.loglik_trace != b.loglik_trace);
  for (double v : a.loglik_trace) REQUIRE(std::isfinite(v));
}

TEST_CASE("z initialisation policies are all runnable and distinct") {
  Scenario sc = make_scenario(17);
  EmConfig cfg = quick_config(SamplerKind::kLd, 6);
  std::vector<std::vector<double>> traces;
  for (mcem::ZInit init :
       {mcem::ZInit::kZeros, mcem::ZInit::kPriorDraw, mcem::ZInit::kWarmupLd}) {
    cfg.z_init = init;
    traces.push_back(mcem::run_em(sc.mix.x, *sc.decoder, cfg).loglik_trace);
  }
  REQUIRE(traces[0] != traces[1]);
  REQUIRE(traces[0] != traces[2]);
}

TEST_CASE("numerical failures carry the iteration index and partial trace") {
  Scenario sc = make_scenario(19);

  // a poisoned decoder fails on the first decode
  Mat w = Mat::Constant(sc.spec.stft.bins(), sc.spec.latent_dim, 0.1);
  w(0, 0) = std::nan("");
  const mcem::AffineExpDecoder bad(w, Vec::Zero(sc.spec.stft.bins()));

  EmConfig cfg = quick_config(SamplerKind::kLd, 5);
  cfg.z_init = mcem::ZInit::kWarmupLd;
  try {
    mcem::run_em(sc.mix.x, bad, cfg);
    FAIL("expected an em failure");
  } catch (const mcem::EmRunError& e) {
    REQUIRE(e.iteration() == 0);  // died during warmup
    REQUIRE(e.partial_trace().empty());
  }

  cfg.z_init = mcem::ZInit::kZeros;
  try {
    mcem::run_em(sc.mix.x, bad, cfg);
    FAIL("expected an em failure");
  } catch (const mcem::EmRunError& e) {
    REQUIRE(e.iteration() == 1);
  }
}

TEST_CASE("em validates decoder and config compatibility") {
  Scenario sc = make_scenario(23);
  const auto wrong = mcem::make_benchmark_decoder(33, sc.spec.latent_dim, 1);
  REQUIRE_THROWS_AS(
      mcem::run_em(sc.mix.x, *wrong, quick_config(SamplerKind::kLd, 3)),
      mcem::InvalidInput);

  EmConfig bad = quick_config(SamplerKind::kLd, 3);
  bad.iterations = 0;
  REQUIRE_THROWS_AS(mcem::run_em(sc.mix.x, *sc.decoder, bad), mcem::InvalidInput);

  bad = quick_config(SamplerKind::kMh, 3);
  bad.sampler.burn_in = 99;
  REQUIRE_THROWS_AS(mcem::run_em(sc.mix.x, *sc.decoder, bad), mcem::InvalidInput);
}
