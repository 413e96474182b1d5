#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcem/rng.hpp"
#include "mcem/target.hpp"
#include "mcem/types.hpp"

namespace mcem {

enum class SamplerKind { kLd, kMh, kMala };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::kLd: return "ld";
    case SamplerKind::kMh: return "mh";
    case SamplerKind::kMala: return "mala";
  }
  return "?";
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kLd;
  double step_size = 0.005;    // eta, for ld/mala
  double proposal_var = 0.02;  // sigma^2: mh proposal width and ld chain jitter
  int steps = 0;               // 0 resolves to the per-kind default
  int burn_in = 5;             // mh/mala only
  int chains = 8;              // ld only
  std::uint64_t seed = 0;

  int resolved_steps() const {
    if (steps > 0) return steps;
    return kind == SamplerKind::kLd ? 1 : 10;
  }

  void validate() const {
    const int k = resolved_steps();
    if (k <= 0) throw InvalidInput("sampler: steps must be positive");
    if (kind == SamplerKind::kLd || kind == SamplerKind::kMala) {
      if (!(step_size > 0.0) || !std::isfinite(step_size))
        throw InvalidInput("sampler: step size must be positive");
    }
    if (!(proposal_var >= 0.0) || !std::isfinite(proposal_var))
      throw InvalidInput("sampler: proposal variance must be non-negative");
    if (kind == SamplerKind::kMh && proposal_var <= 0.0)
      throw InvalidInput("sampler: mh needs a positive proposal variance");
    if (kind == SamplerKind::kLd) {
      if (chains <= 0) throw InvalidInput("sampler: need at least one chain");
    } else {
      if (burn_in < 0 || burn_in >= k)
        throw InvalidInput("sampler: burn-in must satisfy 0 <= burn_in < steps, got " +
                           std::to_string(burn_in) + " of " + std::to_string(k));
    }
  }
};

// Parallel chains for the unadjusted dynamics. Chain ids seed the per-chain
// noise streams, so a permutation of chains permutes the results exactly.
struct ChainState {
  std::vector<Mat> samples;
  std::vector<std::uint64_t> ids;
};

inline ChainState spawn_chains(const Mat& z0, int chains, double jitter_var,
                               rng::Key key) {
  if (chains <= 0) throw InvalidInput("spawn_chains: need at least one chain");
  if (!(jitter_var >= 0.0)) throw InvalidInput("spawn_chains: negative jitter");
  ChainState st;
  st.samples.reserve(static_cast<std::size_t>(chains));
  st.ids.reserve(static_cast<std::size_t>(chains));
  const double sigma = std::sqrt(jitter_var);
  for (int i = 0; i < chains; ++i) {
    const auto id = static_cast<std::uint64_t>(i);
    st.samples.push_back(
        z0 + sigma * rng::normal_mat(key.fork(id), z0.rows(), z0.cols()));
    st.ids.push_back(id);
  }
  return st;
}

// One unadjusted Langevin move of every chain:
//   z <- z + (eta/2) f(z) + sqrt(eta) * noise
// noise_scale is a test hook that freezes the diffusion when zero. If
// mean_logdensity is given it receives the chain-average posterior
// log-density of the state entering the step (no extra target evaluations).
template <TargetLike T>
ChainState ld_step(const T& tg, ChainState st, double step_size, rng::Key step_key,
                   double noise_scale = 1.0, double* mean_logdensity = nullptr) {
  if (st.samples.empty() || st.samples.size() != st.ids.size())
    throw InvalidInput("ld_step: bad chain state");
  const std::vector<TargetEval> evals = target_eval_batch(tg, st.samples);
  const double drift = 0.5 * step_size;
  const double diffuse = std::sqrt(step_size) * noise_scale;
  const rng::Key noise_key = step_key.fork(rng::kTagNoise);
  double acc = 0.0;
  for (std::size_t i = 0; i < st.samples.size(); ++i) {
    Mat& z = st.samples[i];
    if (mean_logdensity)
      acc += evals[i].frame_loglik.sum() + prior_frame_logdensities(z).sum();
    z += drift * evals[i].score +
         diffuse * rng::normal_mat(noise_key.fork(st.ids[i]), z.rows(), z.cols());
  }
  if (mean_logdensity) *mean_logdensity = acc / static_cast<double>(st.samples.size());
  return st;
}

namespace detail {

// Per-frame log acceptance ratio shared by the adjusted samplers:
// likelihood difference plus prior difference, frame by frame.
inline Vec accept_base(const Vec& cand_ll, const Vec& cur_ll, const Mat& cand_z,
                       const Mat& cur_z) {
  return cand_ll - cur_ll + prior_frame_logdensities(cand_z) -
         prior_frame_logdensities(cur_z);
}

inline std::vector<std::uint8_t> accept_decide(const Vec& log_alpha,
                                               rng::Key accept_key) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(log_alpha.size()));
  for (Eigen::Index t = 0; t < log_alpha.size(); ++t) {
    const double a = std::exp(std::min(0.0, log_alpha(t)));
    out[static_cast<std::size_t>(t)] =
        accept_key.u01(static_cast<std::uint64_t>(t)) <= a ? 1 : 0;
  }
  return out;
}

inline Mat merge_frames(const Mat& cur, const Mat& cand,
                        const std::vector<std::uint8_t>& accepted) {
  Mat out = cur;
  for (Eigen::Index t = 0; t < out.rows(); ++t)
    if (accepted[static_cast<std::size_t>(t)]) out.row(t) = cand.row(t);
  return out;
}

}  // namespace detail

struct MhStep {
  Mat z;
  std::vector<std::uint8_t> accepted;
  Vec log_alpha;
  Vec frame_loglik;  // of the merged state, ready to carry
};

// One random-walk Metropolis sweep: a single candidate sequence
// z~ = z + sigma * noise, accepted or rejected frame by frame against the
// shared current likelihood. The carried likelihood is recomputed on the
// merged sequence, which matters for decoders with cross-frame coupling.
template <TargetLike T>
MhStep mh_step(const T& tg, const Mat& z, const Vec& cur_loglik, double proposal_var,
               rng::Key step_key, double noise_scale = 1.0) {
  if (cur_loglik.size() != z.rows()) throw InvalidInput("mh_step: stale likelihood");
  const double sigma = std::sqrt(proposal_var) * noise_scale;
  const Mat cand =
      z + sigma * rng::normal_mat(step_key.fork(rng::kTagNoise).fork(0), z.rows(),
                                  z.cols());
  const Vec cand_ll = tg.frame_loglik(cand);

  MhStep out;
  out.log_alpha = detail::accept_base(cand_ll, cur_loglik, cand, z);
  out.accepted = detail::accept_decide(out.log_alpha, step_key.fork(rng::kTagAccept));
  out.z = detail::merge_frames(z, cand, out.accepted);
  out.frame_loglik = tg.frame_loglik(out.z);
  return out;
}

template <TargetLike T>
MhStep mh_step(const T& tg, const Mat& z, double proposal_var, rng::Key step_key) {
  return mh_step(tg, z, tg.frame_loglik(z), proposal_var, step_key);
}

struct MalaStep {
  Mat z;
  std::vector<std::uint8_t> accepted;
  Vec log_alpha;
  TargetEval eval;  // of the merged state, ready to carry
};

// Metropolis-adjusted Langevin sweep: the candidate takes the drifted move,
// and the per-frame ratio corrects with the forward/reverse transition
// densities  log q(u | v) = -1/(2 eta) ||u - v - (eta/2) f(v)||^2 + const,
// restricted to the frame's coordinates.
template <TargetLike T>
MalaStep mala_step(const T& tg, const Mat& z, const TargetEval& cur,
                   double step_size, rng::Key step_key, double noise_scale = 1.0) {
  if (cur.frame_loglik.size() != z.rows() || cur.score.rows() != z.rows() ||
      cur.score.cols() != z.cols())
    throw InvalidInput("mala_step: stale evaluation");
  if (!(step_size > 0.0)) throw InvalidInput("mala_step: step size must be positive");
  const double drift = 0.5 * step_size;
  const double diffuse = std::sqrt(step_size) * noise_scale;
  const Mat cand =
      z + drift * cur.score +
      diffuse * rng::normal_mat(step_key.fork(rng::kTagNoise).fork(0), z.rows(),
                                z.cols());
  const TargetEval cand_eval = target_eval(tg, cand);

  const double inv = 1.0 / (2.0 * step_size);
  const Vec q_fwd =
      (cand - z - drift * cur.score).rowwise().squaredNorm() * -inv;
  const Vec q_rev =
      (z - cand - drift * cand_eval.score).rowwise().squaredNorm() * -inv;

  MalaStep out;
  out.log_alpha = detail::accept_base(cand_eval.frame_loglik, cur.frame_loglik,
                                      cand, z) +
                  (q_rev - q_fwd);
  out.accepted = detail::accept_decide(out.log_alpha, step_key.fork(rng::kTagAccept));
  out.z = detail::merge_frames(z, cand, out.accepted);
  out.eval = target_eval(tg, out.z);
  return out;
}

template <TargetLike T>
MalaStep mala_step(const T& tg, const Mat& z, double step_size, rng::Key step_key) {
  return mala_step(tg, z, target_eval(tg, z), step_size, step_key);
}

struct SamplerDiag {
  // ld: chain-mean density entering each step; mh/mala: density after it
  std::vector<double> step_logdensity;
  std::vector<double> step_accept_rate;  // empty for ld
  Vec frame_accept_rate;                 // over all steps; empty for ld
};

// Runs the configured sampler from z_init and returns the posterior sample
// set: the final state of every chain for ld, the post-burn-in states for
// mh/mala.
template <TargetLike T>
std::vector<Mat> run_sampler(const SamplerConfig& cfg, const T& tg, const Mat& z_init,
                             SamplerDiag* diag = nullptr) {
  cfg.validate();
  if (z_init.rows() <= 0 || z_init.cols() <= 0)
    throw InvalidInput("run_sampler: empty initial state");
  const rng::Key base = rng::Key::root(cfg.seed);
  const int steps = cfg.resolved_steps();

  if (diag) {
    diag->step_logdensity.clear();
    diag->step_accept_rate.clear();
    diag->frame_accept_rate = Vec();
  }

  if (cfg.kind == SamplerKind::kLd) {
    ChainState st =
        spawn_chains(z_init, cfg.chains, cfg.proposal_var, base.fork(rng::kTagSpawn));
    for (int k = 1; k <= steps; ++k) {
      double ld_density = 0.0;
      st = ld_step(tg, std::move(st), cfg.step_size,
                   base.fork(static_cast<std::uint64_t>(k)), 1.0,
                   diag ? &ld_density : nullptr);
      if (diag) diag->step_logdensity.push_back(ld_density);
    }
    return std::move(st.samples);
  }

  std::vector<Mat> retained;
  retained.reserve(static_cast<std::size_t>(steps - cfg.burn_in));
  Vec frame_acc = Vec::Zero(z_init.rows());
  auto note = [&](const auto& step_out, const Mat& z) {
    if (!diag) return;
    double rate = 0.0;
    for (std::uint8_t a : step_out.accepted) rate += a;
    diag->step_accept_rate.push_back(rate / static_cast<double>(z.rows()));
    for (Eigen::Index t = 0; t < z.rows(); ++t)
      frame_acc(t) += step_out.accepted[static_cast<std::size_t>(t)];
  };

  if (cfg.kind == SamplerKind::kMh) {
    Mat z = z_init;
    Vec ll = tg.frame_loglik(z);
    for (int k = 1; k <= steps; ++k) {
      MhStep out = mh_step(tg, z, ll, cfg.proposal_var,
                           base.fork(static_cast<std::uint64_t>(k)));
      z = std::move(out.z);
      ll = std::move(out.frame_loglik);
      note(out, z);
      if (diag)
        diag->step_logdensity.push_back(ll.sum() + prior_frame_logdensities(z).sum());
      if (k > cfg.burn_in) retained.push_back(z);
    }
  } else {
    Mat z = z_init;
    TargetEval cur = target_eval(tg, z);
    for (int k = 1; k <= steps; ++k) {
      MalaStep out = mala_step(tg, z, cur, cfg.step_size,
                               base.fork(static_cast<std::uint64_t>(k)));
      z = std::move(out.z);
      cur = std::move(out.eval);
      note(out, z);
      if (diag)
        diag->step_logdensity.push_back(cur.frame_loglik.sum() +
                                        prior_frame_logdensities(z).sum());
      if (k > cfg.burn_in) retained.push_back(z);
    }
  }

  if (diag && !diag->step_accept_rate.empty())
    diag->frame_accept_rate = frame_acc / static_cast<double>(steps);
  return retained;
}

}  // namespace mcem
