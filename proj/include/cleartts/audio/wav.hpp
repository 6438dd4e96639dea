/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cleartts/common.hpp"

namespace cleartts::audio {

// Mono audio in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;

  std::size_t size() const { return samples.size(); }

  double rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / static_cast<double>(samples.size()));
  }

  double peak() const {
    double p = 0.0;
    for (double s : samples) p = std::max(p, std::fabs(s));
    return p;
  }
};

namespace detail {
inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& b, std::uint32_t x) {
  b.push_back(static_cast<unsigned char>(x & 0xff));
  b.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
  b.push_back(static_cast<unsigned char>((x >> 16) & 0xff));
  b.push_back(static_cast<unsigned char>((x >> 24) & 0xff));
}
inline void put_u16(std::vector<unsigned char>& b, std::uint16_t x) {
  b.push_back(static_cast<unsigned char>(x & 0xff));
  b.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
}
}  // namespace detail

// Reads a mono 16-bit PCM WAV file.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("read_wav: not a RIFF/WAVE file: " + path);

  using detail::read_u16;
  using detail::read_u32;
  std::size_t pos = 12;
  int sample_rate = 0, channels = 0, bits = 0;
  const unsigned char* data_ptr = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size())
      throw DataError("read_wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw DataError("read_wav: bad fmt chunk in " + path);
      const std::uint16_t format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      bits = read_u16(bytes.data() + body + 14);
      if (format != 1) throw DataError("read_wav: only PCM supported: " + path);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!data_ptr || channels == 0)
    throw DataError("read_wav: missing fmt/data chunk in " + path);
  if (channels != 1) throw DataError("read_wav: expected mono audio: " + path);
  if (bits != 16) throw DataError("read_wav: expected 16-bit PCM: " + path);

  const std::size_t n = data_len / 2;
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        detail::read_u16(data_ptr + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

// Writes a mono 16-bit PCM WAV file. Samples are clamped to [-1, 1].
inline void write_wav(const std::string& path, const Waveform& w) {
  using detail::put_u16;
  using detail::put_u32;
  std::vector<unsigned char> b;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, 1);                                   // PCM
  put_u16(b, 1);                                   // mono
  put_u32(b, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);  // byte rate
  put_u16(b, 2);                                   // block align
  put_u16(b, 16);                                  // bits
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, data_len);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lrint(c * 32767.0));
    put_u16(b, static_cast<std::uint16_t>(q));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_wav: cannot open " + path);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) throw DataError("write_wav: write failed: " + path);
}

}  // namespace cleartts::audio
