#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcem/types.hpp"

namespace mcem {

// Pre-activation clamp; keeps exp() and its pullback finite for any finite
// latent input. Gradients are zero where the clamp is active.
inline constexpr double kPreactClamp = 30.0;

struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

// Differentiable map from a latent sequence (frames x latent) to a strictly
// positive variance sequence (frames x freq).
//
// The batched entry points run several latent sequences of identical shape
// (sampler chains) through one pass; decode_batch_cached keeps the forward
// activations so a following vjp_batch costs one backward sweep instead of a
// second forward.
class DecoderModel {
 public:
  virtual ~DecoderModel() = default;

  virtual std::string_view arch() const = 0;
  virtual int latent_dim() const = 0;
  virtual int freq_dim() const = 0;
  virtual int hidden_dim() const { return 0; }

  struct Cache {
    virtual ~Cache() = default;
  };

  virtual std::pair<std::vector<Mat>, std::unique_ptr<Cache>> decode_batch_cached(
      std::span<const Mat> zs) const = 0;

  // cotangents, one per cached sequence, each frames x freq -> frames x latent
  virtual std::vector<Mat> vjp_batch(const Cache& cache,
                                     std::span<const Mat> cots) const = 0;

  virtual std::vector<NamedTensor> tensors() const = 0;

  Mat decode(const Mat& z) const {
    return decode_batch_cached({&z, 1}).first[0];
  }

  std::vector<Mat> decode_batch(std::span<const Mat> zs) const {
    return decode_batch_cached(zs).first;
  }

  // J^T cot for the Jacobian J of decode at z
  Mat decode_vjp(const Mat& z, const Mat& cot) const {
    auto [v, cache] = decode_batch_cached({&z, 1});
    if (cot.rows() != v[0].rows() || cot.cols() != v[0].cols())
      throw InvalidInput("cotangent shape mismatch");
    return vjp_batch(*cache, {&cot, 1})[0];
  }

 protected:
  void check_batch(std::span<const Mat> zs) const {
    if (zs.empty()) throw InvalidInput("decoder: empty batch");
    for (const Mat& z : zs) {
      if (z.cols() != latent_dim())
        throw InvalidInput("decoder: latent dim " + std::to_string(z.cols()) +
                           ", expected " + std::to_string(latent_dim()));
      if (z.rows() != zs[0].rows() || z.rows() <= 0)
        throw InvalidInput("decoder: batch sequences must share a frame count");
    }
  }
};

namespace detail {

inline Mat clamp_preact(const Mat& pre, Mat* active_mask) {
  Mat out = pre.cwiseMax(-kPreactClamp).cwiseMin(kPreactClamp);
  if (active_mask)
    *active_mask =
        (pre.array().abs() < kPreactClamp).cast<double>().matrix();
  return out;
}

}  // namespace detail

// v_t = exp(clamp(W z_t + b)): a frame-wise log-linear model.
class AffineExpDecoder final : public DecoderModel {
 public:
  AffineExpDecoder(Mat weight, Vec bias)
      : weight_(std::move(weight)), bias_(std::move(bias)) {
    if (weight_.rows() != bias_.size() || weight_.rows() <= 0 || weight_.cols() <= 0)
      throw InvalidInput("affine_exp: weight is freq x latent, bias is freq");
  }

  std::string_view arch() const override { return "affine_exp"; }
  int latent_dim() const override { return static_cast<int>(weight_.cols()); }
  int freq_dim() const override { return static_cast<int>(weight_.rows()); }

  const Mat& weight() const { return weight_; }
  const Vec& bias() const { return bias_; }

  std::pair<std::vector<Mat>, std::unique_ptr<Cache>> decode_batch_cached(
      std::span<const Mat> zs) const override {
    check_batch(zs);
    auto cache = std::make_unique<AffineCache>();
    std::vector<Mat> out;
    out.reserve(zs.size());
    cache->v.reserve(zs.size());
    cache->mask.reserve(zs.size());
    for (const Mat& z : zs) {
      Mat mask;
      const Mat pre = detail::clamp_preact(
          (z * weight_.transpose()).rowwise() + bias_.transpose(), &mask);
      out.push_back(pre.array().exp().matrix());
      cache->v.push_back(out.back());
      cache->mask.push_back(std::move(mask));
    }
    return {std::move(out), std::move(cache)};
  }

  std::vector<Mat> vjp_batch(const Cache& cache,
                             std::span<const Mat> cots) const override {
    const auto& c = dynamic_cast<const AffineCache&>(cache);
    if (cots.size() != c.v.size()) throw InvalidInput("vjp: batch size mismatch");
    std::vector<Mat> out;
    out.reserve(cots.size());
    for (std::size_t i = 0; i < cots.size(); ++i)
      out.push_back(c.v[i].cwiseProduct(cots[i]).cwiseProduct(c.mask[i]) * weight_);
    return out;
  }

  std::vector<NamedTensor> tensors() const override;

 private:
  struct AffineCache final : Cache {
    std::vector<Mat> v, mask;
  };

  Mat weight_;  // freq x latent
  Vec bias_;    // freq
};

struct GruWeights {
  // gates: hidden x latent input maps, hidden x hidden recurrences
  Mat w_reset, w_update, w_cand;
  Mat u_reset, u_update, u_cand;
  Vec b_reset, b_update, b_cand;
  // readout: freq x hidden
  Mat out_weight;
  Vec out_bias;
};

// Single GRU layer over the frame axis followed by a log-linear readout:
//   r_t = sigmoid(W_r z_t + U_r h_{t-1} + b_r)
//   u_t = sigmoid(W_u z_t + U_u h_{t-1} + b_u)
//   c_t = tanh(W_c z_t + U_c (r_t . h_{t-1}) + b_c)
//   h_t = (1 - u_t) . h_{t-1} + u_t . c_t,   h_0 = 0
//   v_t = exp(clamp(A h_t + b))
// The pullback is exact backpropagation through time.
class GruDecoder final : public DecoderModel {
 public:
  explicit GruDecoder(GruWeights w) : w_(std::move(w)) {
    const auto H = w_.w_reset.rows();
    const auto L = w_.w_reset.cols();
    const auto F = w_.out_weight.rows();
    auto gate_ok = [&](const Mat& wi, const Mat& ui, const Vec& bi) {
      return wi.rows() == H && wi.cols() == L && ui.rows() == H && ui.cols() == H &&
             bi.size() == H;
    };
    if (H <= 0 || L <= 0 || F <= 0 || !gate_ok(w_.w_reset, w_.u_reset, w_.b_reset) ||
        !gate_ok(w_.w_update, w_.u_update, w_.b_update) ||
        !gate_ok(w_.w_cand, w_.u_cand, w_.b_cand) || w_.out_weight.cols() != H ||
        w_.out_bias.size() != F)
      throw InvalidInput("gru: inconsistent weight shapes");
  }

  std::string_view arch() const override { return "gru"; }
  int latent_dim() const override { return static_cast<int>(w_.w_reset.cols()); }
  int freq_dim() const override { return static_cast<int>(w_.out_weight.rows()); }
  int hidden_dim() const override { return static_cast<int>(w_.w_reset.rows()); }

  const GruWeights& weights() const { return w_; }

  std::pair<std::vector<Mat>, std::unique_ptr<Cache>> decode_batch_cached(
      std::span<const Mat> zs) const override {
    check_batch(zs);
    const auto M = static_cast<Eigen::Index>(zs.size());
    const Eigen::Index T = zs[0].rows();
    const Eigen::Index H = hidden_dim();
    const Eigen::Index F = freq_dim();
    const Eigen::Index L = latent_dim();

    auto cache = std::make_unique<GruCache>();
    cache->r.resize(static_cast<std::size_t>(T));
    cache->u.resize(static_cast<std::size_t>(T));
    cache->c.resize(static_cast<std::size_t>(T));
    cache->h.resize(static_cast<std::size_t>(T));
    cache->x.resize(static_cast<std::size_t>(T));

    Mat h = Mat::Zero(M, H);
    Mat xt(M, L);
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index i = 0; i < M; ++i) xt.row(i) = zs[static_cast<std::size_t>(i)].row(t);
      Mat r = sigmoid(((xt * w_.w_reset.transpose() + h * w_.u_reset.transpose()).rowwise() +
                       w_.b_reset.transpose()));
      Mat u = sigmoid(((xt * w_.w_update.transpose() + h * w_.u_update.transpose()).rowwise() +
                       w_.b_update.transpose()));
      Mat c = ((xt * w_.w_cand.transpose() +
                r.cwiseProduct(h) * w_.u_cand.transpose())
                   .rowwise() +
               w_.b_cand.transpose())
                  .array()
                  .tanh()
                  .matrix();
      h = (Mat::Ones(M, H) - u).cwiseProduct(h) + u.cwiseProduct(c);
      const auto ti = static_cast<std::size_t>(t);
      cache->x[ti] = xt;
      cache->r[ti] = std::move(r);
      cache->u[ti] = std::move(u);
      cache->c[ti] = std::move(c);
      cache->h[ti] = h;
    }

    std::vector<Mat> out(static_cast<std::size_t>(M));
    cache->v.resize(static_cast<std::size_t>(M));
    cache->mask.resize(static_cast<std::size_t>(M));
    Mat hseq(T, H);
    for (Eigen::Index i = 0; i < M; ++i) {
      for (Eigen::Index t = 0; t < T; ++t) hseq.row(t) = cache->h[static_cast<std::size_t>(t)].row(i);
      Mat mask;
      const Mat pre = detail::clamp_preact(
          (hseq * w_.out_weight.transpose()).rowwise() + w_.out_bias.transpose(),
          &mask);
      out[static_cast<std::size_t>(i)] = pre.array().exp().matrix();
      cache->v[static_cast<std::size_t>(i)] = out[static_cast<std::size_t>(i)];
      cache->mask[static_cast<std::size_t>(i)] = std::move(mask);
    }
    (void)F;
    return {std::move(out), std::move(cache)};
  }

  std::vector<Mat> vjp_batch(const Cache& cache,
                             std::span<const Mat> cots) const override {
    const auto& cc = dynamic_cast<const GruCache&>(cache);
    const auto M = static_cast<Eigen::Index>(cc.v.size());
    if (static_cast<Eigen::Index>(cots.size()) != M)
      throw InvalidInput("vjp: batch size mismatch");
    const Eigen::Index T = static_cast<Eigen::Index>(cc.h.size());
    const Eigen::Index H = hidden_dim();
    const Eigen::Index L = latent_dim();

    // readout pullback per sequence, then gather per-timestep stacks
    std::vector<Mat> ghseq(static_cast<std::size_t>(M));
    for (Eigen::Index i = 0; i < M; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      if (cots[ii].rows() != T || cots[ii].cols() != freq_dim())
        throw InvalidInput("vjp: cotangent shape mismatch");
      ghseq[ii] = cc.v[ii].cwiseProduct(cots[ii]).cwiseProduct(cc.mask[ii]) *
                  w_.out_weight;  // T x H
    }

    std::vector<Mat> gz(static_cast<std::size_t>(M));
    for (Eigen::Index i = 0; i < M; ++i)
      gz[static_cast<std::size_t>(i)].resize(T, L);

    Mat gh_carry = Mat::Zero(M, H);
    Mat gh(M, H), hprev(M, H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const auto ti = static_cast<std::size_t>(t);
      for (Eigen::Index i = 0; i < M; ++i)
        gh.row(i) = ghseq[static_cast<std::size_t>(i)].row(t);
      gh += gh_carry;
      if (t > 0)
        hprev = cc.h[ti - 1];
      else
        hprev.setZero();

      const Mat& r = cc.r[ti];
      const Mat& u = cc.u[ti];
      const Mat& c = cc.c[ti];

      const Mat du = gh.cwiseProduct(c - hprev);
      const Mat dc = gh.cwiseProduct(u);
      const Mat dac = dc.cwiseProduct((1.0 - c.array().square()).matrix());
      const Mat dau = du.cwiseProduct(u).cwiseProduct((1.0 - u.array()).matrix());
      const Mat grh = dac * w_.u_cand;  // pullback of (r . hprev) through U_c
      const Mat dr = grh.cwiseProduct(hprev);
      const Mat dar = dr.cwiseProduct(r).cwiseProduct((1.0 - r.array()).matrix());

      const Mat gx = dar * w_.w_reset + dau * w_.w_update + dac * w_.w_cand;
      gh_carry = gh.cwiseProduct((1.0 - u.array()).matrix()) + dar * w_.u_reset +
                 dau * w_.u_update + grh.cwiseProduct(r);

      for (Eigen::Index i = 0; i < M; ++i)
        gz[static_cast<std::size_t>(i)].row(t) = gx.row(i);
    }
    return gz;
  }

  std::vector<NamedTensor> tensors() const override;

 private:
  struct GruCache final : Cache {
    std::vector<Mat> x, r, u, c, h;  // per timestep, each batch x dim
    std::vector<Mat> v, mask;        // per sequence, frames x freq
  };

  static Mat sigmoid(const Mat& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
  }

  GruWeights w_;
};

namespace detail {

inline NamedTensor tensor2d(const std::string& name, const Mat& m) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

inline NamedTensor tensor1d(const std::string& name, const Vec& v) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<int>(v.size())};
  t.data.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    t.data.push_back(static_cast<float>(v(i)));
  return t;
}

}  // namespace detail

inline std::vector<NamedTensor> AffineExpDecoder::tensors() const {
  return {detail::tensor2d("weight", weight_), detail::tensor1d("bias", bias_)};
}

inline std::vector<NamedTensor> GruDecoder::tensors() const {
  return {detail::tensor2d("w_reset", w_.w_reset),
          detail::tensor2d("w_update", w_.w_update),
          detail::tensor2d("w_cand", w_.w_cand),
          detail::tensor2d("u_reset", w_.u_reset),
          detail::tensor2d("u_update", w_.u_update),
          detail::tensor2d("u_cand", w_.u_cand),
          detail::tensor1d("b_reset", w_.b_reset),
          detail::tensor1d("b_update", w_.b_update),
          detail::tensor1d("b_cand", w_.b_cand),
          detail::tensor2d("out_weight", w_.out_weight),
          detail::tensor1d("out_bias", w_.out_bias)};
}

}  // namespace mcem
