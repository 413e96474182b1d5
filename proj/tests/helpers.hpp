#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "mcem/types.hpp"

namespace testutil {

// O(n^2) reference DFT of a real frame, non-negative bins only.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t f = 0; f < out.size(); ++f) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi_v<double> *
                         static_cast<double>(f) * static_cast<double>(i) /
                         static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

inline std::vector<double> ar2_signal(std::size_t n, double a1, double a2,
                                      unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  double p1 = 0.0, p2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a1 * p1 + a2 * p2 + d(gen);
    p2 = p1;
    p1 = x[i];
  }
  return x;
}

inline std::vector<double> white_noise(std::size_t n, unsigned seed,
                                       double scale = 1.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> x(n);
  for (auto& v : x) v = d(gen);
  return x;
}

inline double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

// Central finite difference of a scalar functional of a matrix argument.
inline mcem::Mat fd_gradient(const std::function<double(const mcem::Mat&)>& f,
                             const mcem::Mat& z, double h = 1e-5) {
  mcem::Mat g(z.rows(), z.cols());
  mcem::Mat zp = z;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double orig = z(r, c);
      zp(r, c) = orig + h;
      const double fp = f(zp);
      zp(r, c) = orig - h;
      const double fm = f(zp);
      zp(r, c) = orig;
      g(r, c) = (fp - fm) / (2.0 * h);
    }
  }
  return g;
}

// Kolmogorov-Smirnov distance against the standard normal CDF.
inline double ks_vs_std_normal(std::vector<double> sorted_samples) {
  std::sort(sorted_samples.begin(), sorted_samples.end());
  const double n = static_cast<double>(sorted_samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_samples.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-sorted_samples[i] / std::numbers::sqrt2);
    d = std::max(d, std::abs(cdf - (static_cast<double>(i) + 1.0) / n));
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
  }
  return d;
}

}  // namespace testutil
