#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mcem/types.hpp"

namespace mcem {

// Scale-invariant SDR in dB, clamped to +/-100 to keep perfect or hopeless
// reconstructions finite.
inline double si_sdr(const Waveform& estimate, const Waveform& reference) {
  if (estimate.samples.size() != reference.samples.size())
    throw InvalidInput("si_sdr: length mismatch");
  if (estimate.samples.empty()) throw InvalidInput("si_sdr: empty signals");

  double dot = 0.0, ref_sq = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    dot += estimate.samples[i] * reference.samples[i];
    ref_sq += reference.samples[i] * reference.samples[i];
  }
  if (ref_sq <= 0.0) throw InvalidInput("si_sdr: reference is silent");

  const double alpha = dot / ref_sq;
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double s = alpha * reference.samples[i];
    const double e = estimate.samples[i] - s;
    sig += s * s;
    err += e * e;
  }
  if (err <= 0.0 || sig / err >= 1e10) return 100.0;
  if (sig <= 0.0 || sig / err <= 1e-10) return -100.0;
  return 10.0 * std::log10(sig / err);
}

// Real-time factor: compute seconds per second of audio.
inline double rtf(double compute_seconds, double audio_seconds) {
  if (!(audio_seconds > 0.0)) throw InvalidInput("rtf: non-positive audio length");
  return compute_seconds / audio_seconds;
}

template <typename F>
double measure_seconds(F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace mcem
