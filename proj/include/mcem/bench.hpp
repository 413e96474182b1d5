#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mcem/em.hpp"
#include "mcem/metrics.hpp"
#include "mcem/synth.hpp"

namespace mcem {

// Synthetic enhancement benchmark: utterances drawn from a known decoder,
// enhanced with that same decoder, scored with SI-SDR and timed.

struct BenchConfig {
  SynthSpec proto;  // per-utterance seed/snr filled in by the loop
  int utterances = 20;
  std::vector<double> snrs_db = {0.0};
  EmConfig em;
  int ld_chains = 8;
  std::uint64_t seed = 0;
};

struct BenchRow {
  SamplerKind kind;
  double snr_db = 0.0;
  int utterance = 0;
  double si_sdr_in = 0.0;
  double si_sdr_out = 0.0;
  double rtf = 0.0;
  double trace_monotone_fraction = 0.0;
};

struct BenchSummary {
  SamplerKind kind;
  double mean_improvement_db = 0.0;
  double min_improvement_db = 0.0;
  double mean_rtf = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summaries;
};

inline double monotone_fraction(const std::vector<double>& trace) {
  if (trace.size() < 2) return 1.0;
  int ok = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] >= trace[i - 1]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(trace.size() - 1);
}

inline BenchResult run_benchmark(const BenchConfig& cfg,
                                 const std::vector<SamplerKind>& kinds) {
  if (cfg.utterances <= 0) throw InvalidInput("benchmark: no utterances");
  if (cfg.snrs_db.empty()) throw InvalidInput("benchmark: no snr points");
  const auto decoder = make_benchmark_decoder(cfg.proto.stft.bins(),
                                              cfg.proto.latent_dim, cfg.seed);

  BenchResult out;
  for (const SamplerKind kind : kinds) {
    double sum_imp = 0.0, min_imp = 1e300, sum_rtf = 0.0;
    int n = 0;
    for (std::size_t si = 0; si < cfg.snrs_db.size(); ++si) {
      for (int u = 0; u < cfg.utterances; ++u) {
        SynthSpec spec = cfg.proto;
        spec.snr_db = cfg.snrs_db[si];
        // same mixtures for every sampler, distinct across snr/utterance
        spec.seed = rng::Key::root(cfg.seed).fork(si).fork(u).state;
        const SyntheticMixture mix = make_mixture(spec, *decoder);

        EmConfig em = cfg.em;
        em.sampler.kind = kind;
        if (kind == SamplerKind::kLd) em.sampler.chains = cfg.ld_chains;
        em.sampler.seed = rng::Key::root(cfg.seed).fork(1000 + si).fork(u).state;
        em.nmf_seed = rng::Key::root(cfg.seed).fork(2000 + si).fork(u).state;

        const EnhanceResult res = run_em(mix.x, *decoder, em);
        const Waveform s_hat =
            istft(res.s_hat, spec.stft, spec.sample_rate, spec.num_samples);

        BenchRow row;
        row.kind = kind;
        row.snr_db = spec.snr_db;
        row.utterance = u;
        row.si_sdr_in = si_sdr(mix.mixture, mix.clean);
        row.si_sdr_out = si_sdr(s_hat, mix.clean);
        row.rtf = rtf(res.wall_seconds, mix.mixture.duration_seconds());
        row.trace_monotone_fraction = monotone_fraction(res.loglik_trace);
        out.rows.push_back(row);

        const double imp = row.si_sdr_out - row.si_sdr_in;
        sum_imp += imp;
        min_imp = std::min(min_imp, imp);
        sum_rtf += row.rtf;
        ++n;
      }
    }
    out.summaries.push_back({kind, sum_imp / n, min_imp, sum_rtf / n});
  }
  return out;
}

}  // namespace mcem
