#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mcem/decoder_io.hpp"

using mcem::Mat;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/mcem_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

Mat randn(std::mt19937& gen, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(gen);
  return m;
}

}  // namespace

TEST_CASE("random decoders survive a save/load cycle bit for bit") {
  std::mt19937 gen(11);
  for (const std::string arch : {"affine_exp", "gru"}) {
    TempFile f(arch + std::string(".dec"));
    const auto model = mcem::make_random_decoder(arch, 5, 17, 6, 99);
    REQUIRE(model->arch() == arch);
    REQUIRE(model->latent_dim() == 5);
    REQUIRE(model->freq_dim() == 17);
    mcem::save_decoder(*model, f.path);

    const auto loaded = mcem::load_decoder(f.path);
    REQUIRE(loaded->arch() == arch);
    REQUIRE(loaded->latent_dim() == 5);
    REQUIRE(loaded->freq_dim() == 17);
    if (arch == std::string("gru")) REQUIRE(loaded->hidden_dim() == 6);

    const Mat z = randn(gen, 13, 5);
    const Mat a = model->decode(z);
    const Mat b = loaded->decode(z);
    REQUIRE(a == b);  // exact, weights are float32-representable
  }
}

TEST_CASE("same seed produces identical decoder files") {
  TempFile a("seed_a.dec"), b("seed_b.dec"), c("seed_c.dec");
  mcem::save_decoder(*mcem::make_random_decoder("gru", 4, 9, 5, 123), a.path);
  mcem::save_decoder(*mcem::make_random_decoder("gru", 4, 9, 5, 123), b.path);
  mcem::save_decoder(*mcem::make_random_decoder("gru", 4, 9, 5, 124), c.path);
  REQUIRE(slurp(a.path) == slurp(b.path));
  REQUIRE(slurp(a.path) != slurp(c.path));
}

TEST_CASE("random decoder output is in a numerically sane range") {
  std::mt19937 gen(12);
  for (const std::string arch : {"affine_exp", "gru"}) {
    const auto model = mcem::make_random_decoder(arch, 8, 64, 16, 7);
    const Mat v = model->decode(randn(gen, 20, 8));
    REQUIRE(v.allFinite());
    REQUIRE(v.minCoeff() > 0.0);
    REQUIRE(v.maxCoeff() < 1e12);
    REQUIRE(v.minCoeff() > 1e-12);
  }
}

TEST_CASE("loader rejects corrupt files with format errors") {
  TempFile f("corrupt.dec");
  const auto model = mcem::make_random_decoder("affine_exp", 3, 8, 0, 5);
  mcem::save_decoder(*model, f.path);
  const std::string good = slurp(f.path);

  auto write = [&](const std::string& bytes) {
    std::ofstream o(f.path, std::ios::binary | std::ios::trunc);
    o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };

  SECTION("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    write(bad);
    REQUIRE_THROWS_AS(mcem::load_decoder(f.path), mcem::FormatError);
  }
  SECTION("truncated header") {
    write(good.substr(0, 10));
    REQUIRE_THROWS_AS(mcem::load_decoder(f.path), mcem::FormatError);
  }
  SECTION("truncated payload") {
    write(good.substr(0, good.size() - 7));
    REQUIRE_THROWS_AS(mcem::load_decoder(f.path), mcem::FormatError);
  }
  SECTION("unknown arch") {
    std::string bad = good;
    // arch string starts right after magic + length
    bad[12] = 'z';
    write(bad);
    REQUIRE_THROWS_AS(mcem::load_decoder(f.path), mcem::FormatError);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(mcem::load_decoder("/tmp/mcem_nonexistent.dec"),
                      mcem::FormatError);
  }
}

TEST_CASE("loader checks tensor dimensions against the header") {
  TempFile f("dims.dec");
  const auto model = mcem::make_random_decoder("affine_exp", 3, 8, 0, 6);
  mcem::save_decoder(*model, f.path);
  std::string bytes = slurp(f.path);

  // corrupt the latent_dim field (follows magic, arch_len, "affine_exp")
  const std::size_t latent_off = 8 + 4 + 10;
  bytes[latent_off] = 4;
  std::ofstream o(f.path, std::ios::binary | std::ios::trunc);
  o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  o.close();
  REQUIRE_THROWS_AS(mcem::load_decoder(f.path), mcem::FormatError);
}

TEST_CASE("generator validates its arguments") {
  REQUIRE_THROWS_AS(mcem::make_random_decoder("gru", 4, 8, 0, 1),
                    mcem::InvalidInput);
  REQUIRE_THROWS_AS(mcem::make_random_decoder("mlp", 4, 8, 2, 1),
                    mcem::InvalidInput);
  REQUIRE_THROWS_AS(mcem::make_random_decoder("affine_exp", 0, 8, 0, 1),
                    mcem::InvalidInput);
}
