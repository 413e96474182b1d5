#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mcem/types.hpp"

namespace mcem {

enum class WavFormat { kPcm16, kFloat32 };

static_assert(std::endian::native == std::endian::little,
              "wav i/o assumes a little-endian host");

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// Reads PCM16 or IEEE float32 WAV; multi-channel input is downmixed to mono
// by averaging. Reports the on-disk sample format through fmt_out if given.
inline Waveform read_wav(const std::string& path, WavFormat* fmt_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw FormatError(path + ": not a RIFF/WAVE file");

  std::uint16_t audio_format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const std::uint32_t chunk_len = detail::read_u32(raw.data() + pos + 4);
    const unsigned char* body = raw.data() + pos + 8;
    if (pos + 8 + chunk_len > raw.size())
      throw FormatError(path + ": truncated chunk");
    if (std::memcmp(raw.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw FormatError(path + ": fmt chunk too short");
      audio_format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      sample_rate = detail::read_u32(body + 4);
      bits = detail::read_u16(body + 14);
      if (audio_format == 0xfffe) {
        // WAVE_FORMAT_EXTENSIBLE: actual format leads the SubFormat GUID
        if (chunk_len < 40) throw FormatError(path + ": extensible fmt too short");
        audio_format = detail::read_u16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(raw.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (data == nullptr) throw FormatError(path + ": missing data chunk");
  if (channels == 0) throw FormatError(path + ": zero channels");
  if (sample_rate == 0) throw FormatError(path + ": zero sample rate");

  WavFormat fmt;
  if (audio_format == 1 && bits == 16) {
    fmt = WavFormat::kPcm16;
  } else if (audio_format == 3 && bits == 32) {
    fmt = WavFormat::kFloat32;
  } else {
    throw FormatError(path + ": unsupported format (tag " +
                      std::to_string(audio_format) + ", " + std::to_string(bits) +
                      " bit); expected 16-bit PCM or 32-bit float");
  }

  const std::size_t bytes_per_sample = bits / 8u;
  const std::size_t stride = bytes_per_sample * channels;
  if (stride == 0 || data_len % stride != 0)
    throw FormatError(path + ": data size not a multiple of the frame size");
  const std::size_t n = data_len / stride;

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * stride + c * bytes_per_sample;
      if (fmt == WavFormat::kPcm16) {
        const std::int16_t v = static_cast<std::int16_t>(detail::read_u16(p));
        acc += v / 32768.0;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        acc += f;
      }
    }
    w.samples[i] = acc / channels;
  }
  if (fmt_out) *fmt_out = fmt;
  return w;
}

// Mono writer. PCM16 clips to [-1, 1); float32 stores samples verbatim.
inline void write_wav(const std::string& path, const Waveform& w,
                      WavFormat fmt = WavFormat::kFloat32) {
  validate(w);
  const std::uint16_t bits = fmt == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_len = n * (bits / 8u);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt == WavFormat::kPcm16 ? 1 : 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8u));
  detail::put_u16(out, static_cast<std::uint16_t>(bits / 8u));
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_len);

  for (double s : w.samples) {
    if (fmt == WavFormat::kPcm16) {
      const double scaled = std::round(s * 32768.0);
      const auto v = static_cast<std::int16_t>(
          std::clamp(scaled, -32768.0, 32767.0));
      detail::put_u16(out, static_cast<std::uint16_t>(v));
    } else {
      const float f = static_cast<float>(s);
      std::uint32_t bitsrep;
      std::memcpy(&bitsrep, &f, 4);
      detail::put_u32(out, bitsrep);
    }
  }

  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  if (!of) throw FormatError("cannot open " + path + " for writing");
  of.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!of) throw FormatError("write failed: " + path);
}

}  // namespace mcem
