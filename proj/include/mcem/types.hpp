#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcem {

// Rows index time frames throughout; row-major keeps a frame contiguous.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

// Complex spectrogram storage is single precision; accumulation that feeds
// likelihoods or gradients happens in double.
using CMat =
    Eigen::Matrix<std::complex<float>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Malformed caller input: bad shapes, out-of-range parameters.
class InvalidInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unparseable or inconsistent file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or divergence detected mid-computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

inline void validate(const Waveform& w) {
  if (w.sample_rate <= 0)
    throw InvalidInput("waveform: sample rate must be positive, got " +
                       std::to_string(w.sample_rate));
  if (w.samples.empty()) throw InvalidInput("waveform: no samples");
  for (double s : w.samples)
    if (!std::isfinite(s)) throw InvalidInput("waveform: non-finite sample");
}

}  // namespace mcem
