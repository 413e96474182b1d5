#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mcem/types.hpp"

namespace mcem::rng {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: every draw is a pure function of (key, counter),
// so streams are reproducible under any evaluation order or parallel split.
// Keys fork into disjoint substreams by id.
struct Key {
  std::uint64_t state = 0;

  static Key root(std::uint64_t seed) { return Key{mix64(seed ^ 0x243f6a8885a308d3ULL)}; }

  Key fork(std::uint64_t id) const {
    return Key{mix64(mix64(state ^ 0x452821e638d01377ULL) + id)};
  }

  // strictly inside (0,1)
  double u01(std::uint64_t ctr) const {
    const std::uint64_t r = mix64(state + ctr * 0x9e3779b97f4a7c15ULL);
    return (static_cast<double>(r >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal(std::uint64_t ctr) const {
    const double u1 = u01(2 * ctr);
    const double u2 = u01(2 * ctr + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi_v<double> * u2);
  }
};

// Stream purpose tags, used as fork ids so unrelated draws never collide.
inline constexpr std::uint64_t kTagNoise = 0x100000001ULL;
inline constexpr std::uint64_t kTagAccept = 0x100000002ULL;
inline constexpr std::uint64_t kTagSpawn = 0x100000003ULL;
inline constexpr std::uint64_t kTagInit = 0x100000004ULL;
inline constexpr std::uint64_t kTagWarmup = 0x100000005ULL;

inline Mat normal_mat(Key k, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = k.normal(static_cast<std::uint64_t>(r * cols + c));
  return m;
}

inline Mat uniform_mat(Key k, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = k.u01(static_cast<std::uint64_t>(r * cols + c));
  return m;
}

}  // namespace mcem::rng
