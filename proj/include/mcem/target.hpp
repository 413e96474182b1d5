#pragma once

#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mcem/decoder.hpp"
#include "mcem/types.hpp"

namespace mcem {

// The latent prior is a fixed standard normal per frame. Targets expose the
// per-frame data log-likelihood and the score of the full posterior
// log-density (likelihood plus prior), both for a whole latent sequence.

inline Vec prior_frame_logdensities(const Mat& z) {
  const double c =
      -0.5 * static_cast<double>(z.cols()) * std::log(2.0 * std::numbers::pi_v<double>);
  return (-0.5 * z.rowwise().squaredNorm().array() + c).matrix();
}

struct TargetEval {
  Vec frame_loglik;  // per frame, data term only
  Mat score;         // d/dz of loglik + prior, frames x latent
};

template <typename T>
concept TargetLike = requires(const T& tg, const Mat& z) {
  { tg.frame_loglik(z) } -> std::convertible_to<Vec>;
  { tg.score(z) } -> std::convertible_to<Mat>;
};

template <typename T>
concept HasEval = requires(const T& tg, const Mat& z) {
  { tg.eval(z) } -> std::convertible_to<TargetEval>;
};

template <typename T>
concept HasBatchEval = requires(const T& tg, std::span<const Mat> zs) {
  { tg.eval_batch(zs) } -> std::convertible_to<std::vector<TargetEval>>;
};

// Joint likelihood+score evaluation; targets that can share work between the
// two provide eval / eval_batch and are picked up here.
template <TargetLike T>
TargetEval target_eval(const T& tg, const Mat& z) {
  if constexpr (HasEval<T>)
    return tg.eval(z);
  else
    return TargetEval{tg.frame_loglik(z), tg.score(z)};
}

template <TargetLike T>
std::vector<TargetEval> target_eval_batch(const T& tg, std::span<const Mat> zs) {
  if constexpr (HasBatchEval<T>) {
    return tg.eval_batch(zs);
  } else {
    std::vector<TargetEval> out;
    out.reserve(zs.size());
    for (const Mat& z : zs) out.push_back(target_eval(tg, z));
    return out;
  }
}

// Unnormalised posterior log-density of a whole sequence.
template <TargetLike T>
double log_density(const T& tg, const Mat& z) {
  return tg.frame_loglik(z).sum() + prior_frame_logdensities(z).sum();
}

// Constant likelihood: the posterior is exactly the prior.
class FlatTarget {
 public:
  Vec frame_loglik(const Mat& z) const { return Vec::Zero(z.rows()); }
  Mat score(const Mat& z) const { return -z; }
};

// Frame-iid Gaussian likelihood z_t ~ N(mean, cov) with the standard-normal
// prior; the posterior is the conjugate Gaussian with known moments, which
// makes this the reference target for sampler calibration.
class GaussianTarget {
 public:
  GaussianTarget(Vec mean, Mat cov) : mean_(std::move(mean)) {
    if (cov.rows() != cov.cols() || cov.rows() != mean_.size() || mean_.size() <= 0)
      throw InvalidInput("gaussian target: mean/cov shape mismatch");
    const Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success)
      throw InvalidInput("gaussian target: covariance not positive definite");
    cov_inv_ = llt.solve(Mat::Identity(cov.rows(), cov.cols()));
    double logdet = 0.0;
    const Mat lmat = llt.matrixL();
    for (Eigen::Index i = 0; i < lmat.rows(); ++i) logdet += 2.0 * std::log(lmat(i, i));
    norm_const_ = -0.5 * (static_cast<double>(mean_.size()) *
                              std::log(2.0 * std::numbers::pi_v<double>) +
                          logdet);
  }

  Vec frame_loglik(const Mat& z) const {
    check(z);
    const Mat d = z.rowwise() - mean_.transpose();
    return (norm_const_ -
            0.5 * (d * cov_inv_).cwiseProduct(d).rowwise().sum().array())
        .matrix();
  }

  Mat score(const Mat& z) const {
    check(z);
    return -(z.rowwise() - mean_.transpose()) * cov_inv_ - z;
  }

  // conjugate posterior moments: C = (I + cov^-1)^-1, m = C cov^-1 mean
  Mat posterior_cov() const {
    const Mat eye = Mat::Identity(mean_.size(), mean_.size());
    return (eye + cov_inv_).llt().solve(eye);
  }
  Vec posterior_mean() const { return posterior_cov() * cov_inv_ * mean_; }

 private:
  void check(const Mat& z) const {
    if (z.cols() != mean_.size())
      throw InvalidInput("gaussian target: latent dim mismatch");
  }

  Vec mean_;
  Mat cov_inv_;
  double norm_const_ = 0.0;
};

// Wraps another target, forwarding the likelihood but reporting a zero score.
template <TargetLike Inner>
class ZeroDriftTarget {
 public:
  explicit ZeroDriftTarget(const Inner& inner) : inner_(&inner) {}
  Vec frame_loglik(const Mat& z) const { return inner_->frame_loglik(z); }
  Mat score(const Mat& z) const { return Mat::Zero(z.rows(), z.cols()); }

 private:
  const Inner* inner_;
};

// The speech-enhancement posterior: complex Gaussian observation likelihood
// with variance decode(z) + noise_var, standard-normal prior on z.
class SpeechTarget {
 public:
  SpeechTarget(const Mat& x_power, const DecoderModel& decoder, Mat noise_var)
      : x_power_(&x_power), decoder_(&decoder), noise_var_(std::move(noise_var)) {
    if (x_power.cols() != decoder.freq_dim())
      throw InvalidInput("speech target: spectrogram bins do not match decoder");
    if (noise_var_.rows() != x_power.rows() || noise_var_.cols() != x_power.cols())
      throw InvalidInput("speech target: noise variance shape mismatch");
    if ((x_power.array() < 0).any())
      throw InvalidInput("speech target: negative power");
    if ((noise_var_.array() <= 0).any())
      throw InvalidInput("speech target: non-positive noise variance");
  }

  int latent_dim() const { return decoder_->latent_dim(); }
  const Mat& noise_var() const { return noise_var_; }

  Vec frame_loglik(const Mat& z) const {
    check(z);
    return loglik_of_var(decoder_->decode(z));
  }

  Mat score(const Mat& z) const { return eval(z).score; }

  TargetEval eval(const Mat& z) const {
    check(z);
    return eval_batch({&z, 1})[0];
  }

  std::vector<TargetEval> eval_batch(std::span<const Mat> zs) const {
    for (const Mat& z : zs) check(z);
    auto [vars, cache] = decoder_->decode_batch_cached(zs);
    std::vector<Mat> cots(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const Eigen::ArrayXXd v = vars[i].array() + noise_var_.array();
      cots[i] = ((x_power_->array() - v) / (v * v)).matrix();
    }
    const std::vector<Mat> pulled = decoder_->vjp_batch(*cache, cots);

    std::vector<TargetEval> out(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
      out[i].frame_loglik = loglik_of_var(vars[i]);
      out[i].score = pulled[i] - zs[i];
      if (!out[i].score.allFinite()) {
        for (Eigen::Index t = 0; t < out[i].score.rows(); ++t)
          if (!out[i].score.row(t).allFinite())
            throw NumericalError("non-finite score at frame " + std::to_string(t));
      }
    }
    return out;
  }

 private:
  void check(const Mat& z) const {
    if (z.cols() != decoder_->latent_dim() || z.rows() != x_power_->rows())
      throw InvalidInput("speech target: latent sequence is frames x latent");
  }

  Vec loglik_of_var(const Mat& speech_var) const {
    const Eigen::ArrayXXd v = speech_var.array() + noise_var_.array();
    const Eigen::ArrayXXd cell =
        -std::log(std::numbers::pi_v<double>) - v.log() - x_power_->array() / v;
    Vec ll = cell.rowwise().sum().matrix();
    if (!ll.allFinite()) {
      for (Eigen::Index t = 0; t < ll.size(); ++t)
        if (!std::isfinite(ll(t)))
          throw NumericalError("non-finite log-likelihood at frame " +
                               std::to_string(t));
    }
    return ll;
  }

  const Mat* x_power_;
  const DecoderModel* decoder_;
  Mat noise_var_;
};

}  // namespace mcem
