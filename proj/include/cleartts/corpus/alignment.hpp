/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cleartts/audio/frontend.hpp"
#include "cleartts/common.hpp"

namespace cleartts::corpus {

struct Alignment {
  std::vector<std::string> phonemes;
  std::vector<int> durations;  // frames, summing exactly to mel frames
};

// Converts tab-separated (phoneme, start_s, end_s) rows into per-phoneme
// frame counts. Span boundaries are rounded to frame indices and the
// rounding residual is assigned to the last phoneme so the counts sum to
// mel_frames exactly. Total aligned time deviating from the audio length by
// more than one frame is an alignment mismatch.
inline Alignment durations_from_spans(
    const std::vector<std::string>& phonemes, const std::vector<double>& start_s,
    const std::vector<double>& end_s, int mel_frames,
    const audio::FrontendConfig& cfg) {
  if (phonemes.empty()) throw DataError("alignment: empty alignment");
  if (phonemes.size() != start_s.size() || phonemes.size() != end_s.size())
    throw DataError("alignment: column count mismatch");

  const double frames_per_second =
      static_cast<double>(cfg.sample_rate) / cfg.hop_samples;
  Alignment out;
  out.phonemes = phonemes;
  out.durations.resize(phonemes.size());
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    if (end_s[i] < start_s[i])
      throw DataError("alignment: span with negative length");
    const int b0 = static_cast<int>(std::lround(start_s[i] * frames_per_second));
    const int b1 = static_cast<int>(std::lround(end_s[i] * frames_per_second));
    out.durations[i] = std::max(0, b1 - b0);
  }

  const double aligned_frames = end_s.back() * frames_per_second;
  if (std::fabs(aligned_frames - mel_frames) > 1.0 + 1e-9)
    throw DataError("alignment: aligned length " +
                    format_double(aligned_frames) + " frames vs audio " +
                    std::to_string(mel_frames) + " frames");

  long long sum = 0;
  for (int d : out.durations) sum += d;
  const long long residual = mel_frames - sum;
  out.durations.back() += static_cast<int>(residual);
  if (out.durations.back() < 0)
    throw DataError("alignment: residual makes last phoneme negative");
  return out;
}

// Reads a (phoneme, start_s, end_s) TSV file.
inline Alignment load_durations(const std::string& path, int mel_frames,
                                const audio::FrontendConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw DataError("alignment: cannot open " + path);
  std::vector<std::string> phonemes;
  std::vector<double> start_s, end_s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string phoneme, s0, s1;
    if (!std::getline(ss, phoneme, '\t') || !std::getline(ss, s0, '\t') ||
        !std::getline(ss, s1))
      throw DataError("alignment: bad row at " + path + ":" +
                      std::to_string(line_no));
    try {
      start_s.push_back(std::stod(s0));
      end_s.push_back(std::stod(s1));
    } catch (const std::exception&) {
      throw DataError("alignment: non-numeric span at " + path + ":" +
                      std::to_string(line_no));
    }
    phonemes.push_back(phoneme);
  }
  return durations_from_spans(phonemes, start_s, end_s, mel_frames, cfg);
}

}  // namespace cleartts::corpus
