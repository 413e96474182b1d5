#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mcem/decoder.hpp"
#include "mcem/rng.hpp"
#include "mcem/types.hpp"

namespace mcem {

// MCEMDEC1 container: little-endian, float32 row-major tensor payloads.
//
//   char[8]  magic "MCEMDEC1"
//   u32 arch_len, char[arch_len] arch        "affine_exp" | "gru"
//   u32 latent_dim, u32 freq_dim, u32 hidden_dim (0 when unused)
//   u32 n_tensors
//   repeated: u32 name_len, name, u32 rank, u32 dims[rank], f32 payload

inline constexpr char kDecoderMagic[8] = {'M', 'C', 'E', 'M', 'D', 'E', 'C', '1'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

struct Reader {
  std::ifstream in;
  std::string path;

  Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw FormatError("cannot open " + p);
  }

  void bytes(void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw FormatError(path + ": truncated while reading " + std::string(what));
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 |
           static_cast<std::uint32_t>(b[3]) << 24;
  }

  std::string str(std::uint32_t len, const char* what) {
    if (len > 256) throw FormatError(path + ": implausible string length");
    std::string s(len, '\0');
    bytes(s.data(), len, what);
    return s;
  }
};

inline Mat to_mat(const NamedTensor& t) {
  Mat m(t.dims[0], t.dims[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = t.data[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

inline Vec to_vec(const NamedTensor& t) {
  Vec v(t.dims[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = t.data[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace detail

inline void save_decoder(const DecoderModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kDecoderMagic, 8);
  const std::string arch(model.arch());
  detail::put_u32(os, static_cast<std::uint32_t>(arch.size()));
  os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(model.latent_dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(model.freq_dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(model.hidden_dim()));

  const std::vector<NamedTensor> tensors = model.tensors();
  detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    std::size_t count = 1;
    for (int d : t.dims) {
      detail::put_u32(os, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != t.data.size())
      throw InvalidInput("tensor " + t.name + ": dims do not match payload");
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(4 * t.data.size()));
  }
  if (!os) throw FormatError("write failed: " + path);
}

inline std::unique_ptr<DecoderModel> load_decoder(const std::string& path) {
  detail::Reader rd(path);
  char magic[8];
  rd.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kDecoderMagic, 8) != 0)
    throw FormatError(path + ": bad magic, not a decoder file");

  const std::string arch = rd.str(rd.u32("arch length"), "arch");
  const std::uint32_t latent = rd.u32("latent_dim");
  const std::uint32_t freq = rd.u32("freq_dim");
  const std::uint32_t hidden = rd.u32("hidden_dim");
  if (latent == 0 || latent > 65536 || freq == 0 || freq > 1u << 20 ||
      hidden > 65536)
    throw FormatError(path + ": implausible header dimensions");

  const std::uint32_t n_tensors = rd.u32("tensor count");
  if (n_tensors > 64) throw FormatError(path + ": implausible tensor count");

  std::map<std::string, NamedTensor> tensors;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = rd.str(rd.u32("tensor name length"), "tensor name");
    const std::uint32_t rank = rd.u32("tensor rank");
    if (rank == 0 || rank > 4)
      throw FormatError(path + ": tensor " + t.name + " has bad rank");
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = rd.u32("tensor dim");
      if (dim == 0 || dim > 1u << 20)
        throw FormatError(path + ": tensor " + t.name + " has bad dims");
      t.dims.push_back(static_cast<int>(dim));
      count *= dim;
    }
    if (count > (1u << 28))
      throw FormatError(path + ": tensor " + t.name + " too large");
    t.data.resize(count);
    rd.bytes(t.data.data(), 4 * count, t.name.c_str());
    if (!tensors.emplace(t.name, std::move(t)).second)
      throw FormatError(path + ": duplicate tensor " + t.name);
  }

  auto take = [&](const std::string& name,
                  std::vector<int> dims) -> const NamedTensor& {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw FormatError(path + ": missing tensor " + name);
    if (it->second.dims != dims) {
      std::string want, got;
      for (int d : dims) want += std::to_string(d) + " ";
      for (int d : it->second.dims) got += std::to_string(d) + " ";
      throw FormatError(path + ": tensor " + name + " has dims [ " + got +
                        "], expected [ " + want + "]");
    }
    return it->second;
  };

  const int L = static_cast<int>(latent);
  const int F = static_cast<int>(freq);
  const int H = static_cast<int>(hidden);

  std::unique_ptr<DecoderModel> model;
  if (arch == "affine_exp") {
    if (tensors.size() != 2) throw FormatError(path + ": unexpected tensor set");
    model = std::make_unique<AffineExpDecoder>(
        detail::to_mat(take("weight", {F, L})), detail::to_vec(take("bias", {F})));
  } else if (arch == "gru") {
    if (H == 0) throw FormatError(path + ": gru requires hidden_dim > 0");
    if (tensors.size() != 11) throw FormatError(path + ": unexpected tensor set");
    GruWeights w;
    w.w_reset = detail::to_mat(take("w_reset", {H, L}));
    w.w_update = detail::to_mat(take("w_update", {H, L}));
    w.w_cand = detail::to_mat(take("w_cand", {H, L}));
    w.u_reset = detail::to_mat(take("u_reset", {H, H}));
    w.u_update = detail::to_mat(take("u_update", {H, H}));
    w.u_cand = detail::to_mat(take("u_cand", {H, H}));
    w.b_reset = detail::to_vec(take("b_reset", {H}));
    w.b_update = detail::to_vec(take("b_update", {H}));
    w.b_cand = detail::to_vec(take("b_cand", {H}));
    w.out_weight = detail::to_mat(take("out_weight", {F, H}));
    w.out_bias = detail::to_vec(take("out_bias", {F}));
    model = std::make_unique<GruDecoder>(std::move(w));
  } else {
    throw FormatError(path + ": unknown arch '" + arch + "'");
  }
  return model;
}

namespace detail {

// uniform(-scale, scale) snapped to float32 so that a save/load cycle
// reproduces the weights bit for bit
inline Mat rand_mat_f32(rng::Key k, Eigen::Index rows, Eigen::Index cols,
                        double scale) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double u = k.u01(static_cast<std::uint64_t>(r * cols + c));
      m(r, c) = static_cast<float>((2.0 * u - 1.0) * scale);
    }
  return m;
}

inline Vec rand_vec_f32(rng::Key k, Eigen::Index n, double scale) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = static_cast<float>((2.0 * k.u01(static_cast<std::uint64_t>(i)) - 1.0) *
                              scale);
  return v;
}

}  // namespace detail

inline std::unique_ptr<DecoderModel> make_random_decoder(const std::string& arch,
                                                         int latent_dim,
                                                         int freq_dim,
                                                         int hidden_dim,
                                                         std::uint64_t seed) {
  if (latent_dim <= 0 || freq_dim <= 0)
    throw InvalidInput("decoder dims must be positive");
  const rng::Key k = rng::Key::root(seed);
  if (arch == "affine_exp") {
    const double sw = 1.2 * std::sqrt(3.0 / latent_dim);
    return std::make_unique<AffineExpDecoder>(
        detail::rand_mat_f32(k.fork(0), freq_dim, latent_dim, sw),
        detail::rand_vec_f32(k.fork(1), freq_dim, 1.0));
  }
  if (arch == "gru") {
    if (hidden_dim <= 0) throw InvalidInput("gru requires hidden_dim > 0");
    const double sw = std::sqrt(3.0 / latent_dim);
    const double su = std::sqrt(3.0 / hidden_dim);
    GruWeights w;
    w.w_reset = detail::rand_mat_f32(k.fork(0), hidden_dim, latent_dim, sw);
    w.w_update = detail::rand_mat_f32(k.fork(1), hidden_dim, latent_dim, sw);
    w.w_cand = detail::rand_mat_f32(k.fork(2), hidden_dim, latent_dim, sw);
    w.u_reset = detail::rand_mat_f32(k.fork(3), hidden_dim, hidden_dim, su);
    w.u_update = detail::rand_mat_f32(k.fork(4), hidden_dim, hidden_dim, su);
    w.u_cand = detail::rand_mat_f32(k.fork(5), hidden_dim, hidden_dim, su);
    w.b_reset = detail::rand_vec_f32(k.fork(6), hidden_dim, 0.2);
    w.b_update = detail::rand_vec_f32(k.fork(7), hidden_dim, 0.2);
    w.b_cand = detail::rand_vec_f32(k.fork(8), hidden_dim, 0.2);
    w.out_weight = detail::rand_mat_f32(k.fork(9), freq_dim, hidden_dim, 1.2 * su);
    w.out_bias = detail::rand_vec_f32(k.fork(10), freq_dim, 1.0);
    return std::make_unique<GruDecoder>(std::move(w));
  }
  throw InvalidInput("unknown decoder arch '" + arch + "'");
}

}  // namespace mcem
