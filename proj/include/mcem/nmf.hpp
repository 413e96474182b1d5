#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>

#include "mcem/rng.hpp"
#include "mcem/types.hpp"

namespace mcem {

// Entries of W and H never drop below this; keeps noise variances positive
// and multiplicative updates well defined.
inline constexpr double kNmfFloor = 1e-8;

// Nonnegative factorisation of the noise power spectrogram: the noise
// variance at (t, f) is [W H]_{f,t}.
struct NmfParams {
  Mat w;  // freq x rank
  Mat h;  // rank x frames

  Eigen::Index rank() const { return w.cols(); }
  Eigen::Index freq() const { return w.rows(); }
  Eigen::Index frames() const { return h.cols(); }
};

inline void validate(const NmfParams& p) {
  if (p.w.rows() <= 0 || p.w.cols() <= 0 || p.h.rows() != p.w.cols() ||
      p.h.cols() <= 0)
    throw InvalidInput("nmf: W is freq x rank, H is rank x frames");
  if ((p.w.array() < 0).any() || (p.h.array() < 0).any())
    throw InvalidInput("nmf: negative factor entries");
}

// frames x freq, floored
inline Mat noise_variance(const NmfParams& p) {
  validate(p);
  return (p.w * p.h).transpose().cwiseMax(kNmfFloor);
}

// Gaussian log-likelihood of the observed power under speech + noise
// variances: sum over cells of -log(pi V) - x / V.
inline double mixture_loglik(const Mat& x_power, const Mat& speech_var,
                             const Mat& noise_var) {
  if (x_power.rows() != speech_var.rows() || x_power.cols() != speech_var.cols() ||
      x_power.rows() != noise_var.rows() || x_power.cols() != noise_var.cols())
    throw InvalidInput("mixture_loglik: shape mismatch");
  const Eigen::ArrayXXd v = speech_var.array() + noise_var.array();
  if (!(v > 0.0).all())
    throw NumericalError("mixture_loglik: non-positive variance");
  const double cells = static_cast<double>(x_power.size());
  const double ll = (-v.log() - x_power.array() / v).sum() -
                    std::log(std::numbers::pi_v<double>) * cells;
  if (!std::isfinite(ll)) throw NumericalError("mixture_loglik: non-finite value");
  return ll;
}

inline NmfParams init_nmf(Eigen::Index freq, Eigen::Index frames, Eigen::Index rank,
                          std::uint64_t seed, const Mat& x_power) {
  if (rank <= 0 || freq <= 0 || frames <= 0)
    throw InvalidInput("nmf: dimensions must be positive");
  if (x_power.rows() != frames || x_power.cols() != freq)
    throw InvalidInput("nmf: power spectrogram is frames x freq");
  const rng::Key k = rng::Key::root(seed);
  NmfParams p;
  p.w = rng::uniform_mat(k.fork(0), freq, rank);
  p.h = rng::uniform_mat(k.fork(1), rank, frames);
  const double target = x_power.mean();
  const double current = (p.w * p.h).mean();
  const double s = current > 0.0 && target > 0.0 ? std::sqrt(target / current) : 1.0;
  p.w = (p.w * s).cwiseMax(kNmfFloor);
  p.h = (p.h * s).cwiseMax(kNmfFloor);
  return p;
}

// One multiplicative update of W then H, averaging the E-step statistics over
// the posterior samples' speech variances. H uses the statistics recomputed
// with the fresh W. Factors are re-floored after each half step.
inline NmfParams mstep_update(const NmfParams& p, const Mat& x_power,
                              std::span<const Mat> speech_vars) {
  validate(p);
  if (speech_vars.empty()) throw InvalidInput("nmf m-step: no posterior samples");
  const Eigen::Index T = x_power.rows();
  const Eigen::Index F = x_power.cols();
  if (p.freq() != F || p.frames() != T)
    throw InvalidInput("nmf m-step: factor shapes do not match the spectrogram");
  for (const Mat& v : speech_vars)
    if (v.rows() != T || v.cols() != F)
      throw InvalidInput("nmf m-step: sample shape mismatch");

  const double inv_m = 1.0 / static_cast<double>(speech_vars.size());
  auto stats = [&](const Mat& nv, Mat& num, Mat& den) {
    num = Mat::Zero(T, F);
    den = Mat::Zero(T, F);
    for (const Mat& sv : speech_vars) {
      const Eigen::ArrayXXd v = sv.array() + nv.array();
      num.array() += x_power.array() / (v * v);
      den.array() += 1.0 / v;
    }
    num *= inv_m;
    den *= inv_m;
  };

  NmfParams out = p;
  Mat num, den;
  stats(noise_variance(out), num, den);
  // W_{f,r} *= sum_t num_{t,f} H_{r,t} / sum_t den_{t,f} H_{r,t}
  out.w = out.w
              .cwiseProduct((num.transpose() * out.h.transpose())
                                .cwiseQuotient((den.transpose() * out.h.transpose())
                                                   .cwiseMax(1e-300)))
              .cwiseMax(kNmfFloor);

  stats(noise_variance(out), num, den);
  out.h = out.h
              .cwiseProduct((out.w.transpose() * num.transpose())
                                .cwiseQuotient((out.w.transpose() * den.transpose())
                                                   .cwiseMax(1e-300)))
              .cwiseMax(kNmfFloor);
  return out;
}

}  // namespace mcem
