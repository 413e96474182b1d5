#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcem/bench.hpp"
#include "mcem/decoder_io.hpp"
#include "mcem/em.hpp"
#include "mcem/metrics.hpp"
#include "mcem/samplers.hpp"
#include "mcem/synth.hpp"
#include "mcem/target.hpp"
#include "mcem/wav.hpp"

namespace {

using namespace mcem;

const std::map<std::string, SamplerKind> kSamplerNames = {
    {"ld", SamplerKind::kLd}, {"mh", SamplerKind::kMh}, {"mala", SamplerKind::kMala}};

const std::map<std::string, ZInit> kZInitNames = {{"zeros", ZInit::kZeros},
                                                  {"prior", ZInit::kPriorDraw},
                                                  {"warmup", ZInit::kWarmupLd}};

struct EmFlags {
  SamplerKind sampler = SamplerKind::kLd;
  int iterations = 100;
  int steps = 0;  // 0 = per-sampler default
  int burn_in = 5;
  int chains = 8;
  double step_size = 0.005;
  double proposal_var = 0.02;
  int rank = 8;
  std::uint64_t seed = 0;
  std::uint64_t nmf_seed = 0;
  ZInit z_init = ZInit::kWarmupLd;
  int warmup_steps = 20;

  EmConfig to_config() const {
    EmConfig cfg;
    cfg.iterations = iterations;
    cfg.sampler.kind = sampler;
    cfg.sampler.steps = steps;
    cfg.sampler.burn_in = burn_in;
    cfg.sampler.chains = chains;
    cfg.sampler.step_size = step_size;
    cfg.sampler.proposal_var = proposal_var;
    cfg.sampler.seed = seed;
    cfg.nmf_rank = rank;
    cfg.nmf_seed = nmf_seed;
    cfg.z_init = z_init;
    cfg.warmup_steps = warmup_steps;
    return cfg;
  }
};

// shared sampler/em flags; help strings carry the reference defaults
void add_em_flags(CLI::App& cmd, EmFlags& f) {
  cmd.add_option("--sampler", f.sampler, "posterior sampler: ld, mh or mala")
      ->transform(CLI::CheckedTransformer(kSamplerNames, CLI::ignore_case))
      ->capture_default_str()
      ->default_str("ld");
  cmd.add_option("-J,--iterations", f.iterations, "EM iterations J (reference default 100)")
      ->capture_default_str();
  cmd.add_option("-K,--K,--steps", f.steps,
                 "sampler steps per E-step; 0 picks the per-sampler default "
                 "(K=1 for ld, K=10 for mh/mala)")
      ->capture_default_str();
  cmd.add_option("--burn-in", f.burn_in,
                 "discarded leading steps for mh/mala (reference default 5)")
      ->capture_default_str();
  cmd.add_option("--chains", f.chains, "parallel Langevin chains M")
      ->capture_default_str();
  cmd.add_option("--step-size", f.step_size,
                 "Langevin/MALA step size eta (reference default 0.005)")
      ->capture_default_str();
  cmd.add_option("--proposal-var", f.proposal_var,
                 "proposal/jitter variance sigma^2 (reference default 0.02)")
      ->capture_default_str();
  cmd.add_option("--rank", f.rank, "NMF noise rank R")->capture_default_str();
  cmd.add_option("--seed", f.seed, "sampler seed")->capture_default_str();
  cmd.add_option("--nmf-seed", f.nmf_seed, "noise-model init seed")
      ->capture_default_str();
  cmd.add_option("--z-init", f.z_init, "latent init: zeros, prior or warmup")
      ->transform(CLI::CheckedTransformer(kZInitNames, CLI::ignore_case))
      ->capture_default_str()
      ->default_str("warmup");
  cmd.add_option("--warmup-steps", f.warmup_steps, "LD steps of the warmup init")
      ->capture_default_str();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// flat key=value config, applied after parsing so flags keep precedence
void apply_config(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=', first);
    if (eq == std::string::npos)
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = strip(line.substr(first, eq - first));
    const std::string value = strip(line.substr(eq + 1));
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw InvalidInput(path + ":" + std::to_string(lineno) +
                         ": unknown config key '" + key + "'");
    if (opt->count() > 0) continue;  // command line wins
    try {
      std::string token;
      std::stringstream values(value);
      while (values >> token) opt->add_result(token);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

struct EnhanceOpts {
  std::string input, output, decoder, report, config;
  int hop = 0;  // 0 = fft/4
  EmFlags em;
};

int run_enhance(const EnhanceOpts& o) {
  if (o.input.empty() || o.output.empty() || o.decoder.empty())
    throw InvalidInput("enhance needs --input, --output and --decoder");
  WavFormat fmt_in{};
  const Waveform w = read_wav(o.input, &fmt_in);
  const auto decoder = load_decoder(o.decoder);

  StftConfig stft_cfg;
  stft_cfg.fft_size = 2 * (static_cast<int>(decoder->freq_dim()) - 1);
  stft_cfg.hop = o.hop > 0 ? o.hop : stft_cfg.fft_size / 4;
  stft_cfg.window = Window::kSqrtHann;
  stft_cfg.validate();

  const ComplexSpectrogram x = stft(w, stft_cfg);
  const EmConfig cfg = o.em.to_config();
  const EnhanceResult res = run_em(x, *decoder, cfg);

  Waveform out = istft(res.s_hat, stft_cfg, w.sample_rate,
                       static_cast<Eigen::Index>(w.samples.size()));
  write_wav(o.output, out, fmt_in);

  const std::string report_path =
      o.report.empty() ? o.output + ".report.txt" : o.report;
  std::ofstream rep(report_path);
  if (!rep) throw FormatError("cannot write report: " + report_path);
  rep << "command=enhance\n"
      << "input=" << o.input << "\n"
      << "output=" << o.output << "\n"
      << "decoder=" << o.decoder << "\n"
      << "decoder_arch=" << decoder->arch() << "\n"
      << "sample_rate=" << w.sample_rate << "\n"
      << "samples=" << w.samples.size() << "\n"
      << "fft_size=" << stft_cfg.fft_size << "\n"
      << "hop=" << stft_cfg.hop << "\n"
      << "frames=" << x.frames() << "\n"
      << "sampler=" << to_string(cfg.sampler.kind) << "\n"
      << "iterations=" << cfg.iterations << "\n"
      << "steps=" << cfg.sampler.resolved_steps() << "\n"
      << "burn_in=" << cfg.sampler.burn_in << "\n"
      << "chains=" << cfg.sampler.chains << "\n"
      << "step_size=" << fmt(cfg.sampler.step_size) << "\n"
      << "proposal_var=" << fmt(cfg.sampler.proposal_var) << "\n"
      << "nmf_rank=" << cfg.nmf_rank << "\n"
      << "seed=" << cfg.sampler.seed << "\n"
      << "nmf_seed=" << cfg.nmf_seed << "\n";
  for (std::size_t j = 0; j < res.loglik_trace.size(); ++j)
    rep << "trace." << j + 1 << "=" << fmt(res.loglik_trace[j]) << "\n";
  // timing lines last so determinism checks can strip them
  rep << "wall_seconds=" << fmt(res.wall_seconds) << "\n"
      << "rtf=" << fmt(rtf(res.wall_seconds, w.duration_seconds())) << "\n";
  std::printf("wrote %s and %s\n", o.output.c_str(), report_path.c_str());
  return 0;
}

struct BenchOpts {
  int utterances = 20;
  std::vector<double> snrs = {0.0};
  std::uint64_t seed = 42;
  std::string csv, report, config;
  EmFlags em;
};

int run_benchmark_cmd(const BenchOpts& o) {
  BenchConfig cfg;
  cfg.utterances = o.utterances;
  cfg.snrs_db = o.snrs;
  cfg.seed = o.seed;
  cfg.em = o.em.to_config();
  cfg.ld_chains = o.em.chains;

  const std::vector<SamplerKind> kinds = {SamplerKind::kLd, SamplerKind::kMh,
                                          SamplerKind::kMala};
  const BenchResult res = run_benchmark(cfg, kinds);

  std::string out;
  out += "command=benchmark\nutterances=" + std::to_string(cfg.utterances) +
         "\nseed=" + std::to_string(cfg.seed) +
         "\niterations=" + std::to_string(cfg.em.iterations) +
         "\nnmf_rank=" + std::to_string(cfg.em.nmf_rank) + "\n";
  for (std::size_t i = 0; i < o.snrs.size(); ++i)
    out += "snr_db." + std::to_string(i) + "=" + fmt(o.snrs[i]) + "\n";
  for (const BenchSummary& s : res.summaries) {
    const std::string k = to_string(s.kind);
    out += k + ".mean_improvement_db=" + fmt(s.mean_improvement_db) + "\n";
    out += k + ".min_improvement_db=" + fmt(s.min_improvement_db) + "\n";
    out += k + ".mean_rtf=" + fmt(s.mean_rtf) + "\n";
  }
  const double r_ld = res.summaries[0].mean_rtf;
  const double r_mh = res.summaries[1].mean_rtf;
  const double r_mala = res.summaries[2].mean_rtf;
  out += std::string("rtf_ordering_ld_mh_mala=") +
         (r_ld < r_mh && r_mh < r_mala ? "ok" : "violated") + "\n";

  std::fputs(out.c_str(), stdout);
  if (!o.report.empty()) {
    std::ofstream rep(o.report);
    if (!rep) throw FormatError("cannot write report: " + o.report);
    rep << out;
  }
  if (!o.csv.empty()) {
    std::ofstream csv(o.csv);
    if (!csv) throw FormatError("cannot write csv: " + o.csv);
    csv << "sampler,snr_db,utterance,si_sdr_in,si_sdr_out,rtf,trace_monotone_"
           "fraction\n";
    for (const BenchRow& r : res.rows)
      csv << to_string(r.kind) << "," << fmt(r.snr_db) << "," << r.utterance << ","
          << fmt(r.si_sdr_in) << "," << fmt(r.si_sdr_out) << "," << fmt(r.rtf) << ","
          << fmt(r.trace_monotone_fraction) << "\n";
  }
  return 0;
}

struct DiagOpts {
  int dim = 2;
  int steps = 1000;
  int burn_in = 100;
  int frames = 512;
  double step_size = 0.005;
  double proposal_var = 0.02;
  std::uint64_t seed = 1;
  std::string csv;
};

int run_sampler_diag(const DiagOpts& o) {
  if (o.dim < 1 || o.dim > 8) throw InvalidInput("diag: dim must be in [1,8]");
  if (o.steps <= o.burn_in) throw InvalidInput("diag: steps must exceed burn-in");

  // frame-factorised N(mu, sigma^2 I) target: every frame is an independent
  // chain, so moments aggregate across frames and steps
  Vec mu = Vec::Zero(o.dim);
  const GaussianTarget target(mu, Mat::Identity(o.dim, o.dim));
  const Vec post_mean = target.posterior_mean();
  const Mat post_cov = target.posterior_cov();

  std::ofstream csv;
  if (!o.csv.empty()) {
    csv.open(o.csv);
    if (!csv) throw FormatError("cannot write csv: " + o.csv);
    csv << "sampler,step,mean_log_density,accept_rate\n";
  }

  for (const auto& [name, kind] : kSamplerNames) {
    const rng::Key base = rng::Key::root(o.seed).fork(static_cast<int>(kind));
    ChainState st;
    st.samples = {Mat::Zero(o.frames, o.dim)};
    st.ids = {0};
    Mat z = st.samples[0];

    double accept_sum = 0.0;
    int accept_n = 0;
    Mat moment1 = Mat::Zero(1, o.dim);
    Mat moment2 = Mat::Zero(o.dim, o.dim);
    Eigen::Index n_retained = 0;

    for (int k = 1; k <= o.steps; ++k) {
      const rng::Key step_key = base.fork(static_cast<std::uint64_t>(k));
      double mean_ld = 0.0, acc = 1.0;
      if (kind == SamplerKind::kLd) {
        double sum_ld = 0.0;
        st = ld_step(target, std::move(st), o.step_size, step_key, 1.0, &sum_ld);
        z = st.samples[0];
        mean_ld = sum_ld / o.frames;
      } else if (kind == SamplerKind::kMh) {
        MhStep s = mh_step(target, z, o.proposal_var, step_key);
        z = std::move(s.z);
        acc = static_cast<double>(
                  std::count(s.accepted.begin(), s.accepted.end(), 1)) /
              o.frames;
        mean_ld = (s.frame_loglik.sum() + prior_frame_logdensities(z).sum()) / o.frames;
      } else {
        MalaStep s = mala_step(target, z, o.step_size, step_key);
        z = std::move(s.z);
        acc = static_cast<double>(
                  std::count(s.accepted.begin(), s.accepted.end(), 1)) /
              o.frames;
        mean_ld = (s.eval.frame_loglik.sum() + prior_frame_logdensities(z).sum()) /
                  o.frames;
      }
      if (kind != SamplerKind::kLd) {
        accept_sum += acc;
        ++accept_n;
      }
      if (csv.is_open())
        csv << name << "," << k << "," << fmt(mean_ld) << ","
            << (kind == SamplerKind::kLd ? std::string("1") : fmt(acc)) << "\n";
      if (k > o.burn_in) {
        moment1 += z.colwise().sum();
        moment2 += z.transpose() * z;
        n_retained += o.frames;
      }
    }

    const Mat emp_mean = moment1 / static_cast<double>(n_retained);
    Mat emp_cov = moment2 / static_cast<double>(n_retained) -
                  emp_mean.transpose() * emp_mean;
    const double mean_err = (emp_mean.row(0).transpose() - post_mean).norm();
    const double cov_err = (emp_cov - post_cov).norm() / post_cov.norm();

    std::printf("%s.accept_rate=%s\n", name.c_str(),
                kind == SamplerKind::kLd ? "1" : fmt(accept_sum / accept_n).c_str());
    std::printf("%s.mean_abs_err=%s\n", name.c_str(), fmt(mean_err).c_str());
    std::printf("%s.cov_rel_err=%s\n", name.c_str(), fmt(cov_err).c_str());

    if (kind == SamplerKind::kMh && o.dim == 1) {
      // KS of final states against the analytic 1-d posterior
      const double sd = std::sqrt(post_cov(0, 0));
      std::vector<double> xs(z.data(), z.data() + z.size());
      for (double& v : xs) v = (v - post_mean(0)) / sd;
      std::sort(xs.begin(), xs.end());
      double d = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double cdf = 0.5 * std::erfc(-xs[i] / std::numbers::sqrt2);
        d = std::max(d, std::abs(cdf - (i + 1.0) / xs.size()));
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / xs.size()));
      }
      const double crit = 1.628 / std::sqrt(static_cast<double>(xs.size()));
      std::printf("mh.ks_stat=%s\nmh.ks_critical_1pct=%s\nmh.ks_pass=%s\n",
                  fmt(d).c_str(), fmt(crit).c_str(), d < crit ? "yes" : "no");
    }
  }
  return 0;
}

struct GenOpts {
  std::string output;
  std::string arch = "affine_exp";
  int latent = 4;
  int freq = 65;
  int hidden = 32;
  std::uint64_t seed = 0;
  bool benchmark = false;
};

int run_gen_decoder(const GenOpts& o) {
  std::unique_ptr<DecoderModel> dec;
  if (o.benchmark) {
    dec = make_benchmark_decoder(o.freq, o.latent, o.seed);
  } else {
    dec = make_random_decoder(o.arch, o.latent, o.freq, o.hidden, o.seed);
  }
  save_decoder(*dec, o.output);
  std::printf("arch=%s\nlatent_dim=%d\nfreq_dim=%d\noutput=%s\n",
              std::string(dec->arch()).c_str(), static_cast<int>(dec->latent_dim()),
              static_cast<int>(dec->freq_dim()), o.output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mcem: unsupervised speech enhancement by Monte Carlo EM with "
      "Langevin/Metropolis posterior samplers"};
  app.require_subcommand(1);

  EnhanceOpts eo;
  CLI::App* enhance = app.add_subcommand(
      "enhance", "enhance a noisy WAV file with a decoder model");
  enhance->add_option("--config", eo.config,
                      "flat key=value config file (flags take precedence)");
  enhance->add_option("-i,--input", eo.input, "noisy input WAV (required)");
  enhance->add_option("-o,--output", eo.output, "enhanced output WAV (required)");
  enhance->add_option("-d,--decoder", eo.decoder, "decoder weight file (required)");
  enhance->add_option("--report", eo.report,
                      "report path (default: <output>.report.txt)");
  enhance->add_option("--hop", eo.hop, "STFT hop; 0 = fft/4")->capture_default_str();
  add_em_flags(*enhance, eo.em);

  BenchOpts bo;
  CLI::App* bench = app.add_subcommand(
      "benchmark", "run the seeded synthetic benchmark over all samplers");
  bench->add_option("-n,--utterances", bo.utterances, "utterances per SNR point")
      ->capture_default_str();
  bench->add_option("--snr", bo.snrs, "input SNR grid in dB, e.g. --snr -5 0 5")
      ->capture_default_str();
  bench->add_option("--bench-seed", bo.seed, "corpus seed")->capture_default_str();
  bench->add_option("--csv", bo.csv, "per-utterance CSV path");
  bench->add_option("--report", bo.report, "key=value report path");
  bench->add_option("--config", bo.config,
                    "flat key=value config file (flags take precedence)");
  bo.em.rank = 2;  // matches the synthetic scenario's generative noise rank
  add_em_flags(*bench, bo.em);

  DiagOpts dg;
  CLI::App* diag = app.add_subcommand(
      "sampler-diag", "sampler moments and traces on an analytic Gaussian target");
  diag->add_option("--dim", dg.dim, "target dimension")->capture_default_str();
  diag->add_option("--diag-steps", dg.steps, "sampler steps")->capture_default_str();
  diag->add_option("--diag-burn-in", dg.burn_in, "discarded steps")
      ->capture_default_str();
  diag->add_option("--frames", dg.frames, "parallel frames (independent chains)")
      ->capture_default_str();
  diag->add_option("--step-size", dg.step_size, "Langevin/MALA step size eta")
      ->capture_default_str();
  diag->add_option("--proposal-var", dg.proposal_var, "MH proposal variance")
      ->capture_default_str();
  diag->add_option("--seed", dg.seed, "seed")->capture_default_str();
  diag->add_option("--csv", dg.csv, "per-step trace CSV path");

  GenOpts go;
  CLI::App* gen = app.add_subcommand("gen-decoder", "write a decoder weight file");
  gen->add_option("-o,--output", go.output, "output path")->required();
  gen->add_option("--arch", go.arch, "decoder architecture: affine_exp or gru")
      ->check(CLI::IsMember({"affine_exp", "gru"}))
      ->capture_default_str();
  gen->add_option("--latent", go.latent, "latent dimension L")->capture_default_str();
  gen->add_option("--freq", go.freq, "frequency bins F")->capture_default_str();
  gen->add_option("--hidden", go.hidden, "GRU hidden size")->capture_default_str();
  gen->add_option("--seed", go.seed, "weight seed")->capture_default_str();
  gen->add_flag("--benchmark", go.benchmark,
                "write the synthetic benchmark decoder instead of random weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (enhance->parsed()) {
      if (!eo.config.empty()) apply_config(*enhance, eo.config);
      return run_enhance(eo);
    }
    if (bench->parsed()) {
      if (!bo.config.empty()) apply_config(*bench, bo.config);
      return run_benchmark_cmd(bo);
    }
    if (diag->parsed()) return run_sampler_diag(dg);
    if (gen->parsed()) return run_gen_decoder(go);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return 2;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
