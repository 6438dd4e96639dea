/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <vector>

#include "cleartts/core/tensor.hpp"
#include "cleartts/corpus/types.hpp"

namespace cleartts::corpus {

using core::Tensor;

// Padded batch arrays with validity masks. Padding cells are zero and are
// excluded from every masked statistic.
struct Batch {
  int size = 0;
  int max_frames = 0;
  int max_phonemes = 0;
  Tensor mels;            // [B, Tmax, M]
  Tensor noise_mels;      // [B, Tmax, M]; zero rows where absent
  Tensor noise_mask;      // [B]; 1 where a ground-truth noise mel exists
  Tensor pitch;           // [B, Tmax]
  Tensor frame_mask;      // [B, Tmax]
  Tensor phoneme_mask;    // [B, Lmax]
  Tensor durations;       // [B, Lmax]
  std::vector<int> frames;
  std::vector<int> phoneme_counts;
};

inline Batch make_batch(const std::vector<const Utterance*>& utts) {
  if (utts.empty()) throw InvalidInputError("make_batch: empty utterance list");
  Batch b;
  b.size = static_cast<int>(utts.size());
  int mel_bins = utts.front()->mel.mels();
  for (const auto* u : utts) {
    u->validate();
    if (u->mel.mels() != mel_bins)
      throw InvalidInputError("make_batch: inconsistent mel bin count");
    b.max_frames = std::max(b.max_frames, u->frames());
    b.max_phonemes =
        std::max(b.max_phonemes, static_cast<int>(u->phoneme_ids.size()));
    b.frames.push_back(u->frames());
    b.phoneme_counts.push_back(static_cast<int>(u->phoneme_ids.size()));
  }

  b.mels = Tensor::zeros({b.size, b.max_frames, mel_bins});
  b.noise_mels = Tensor::zeros({b.size, b.max_frames, mel_bins});
  b.noise_mask = Tensor::zeros({b.size});
  b.pitch = Tensor::zeros({b.size, b.max_frames});
  b.frame_mask = Tensor::zeros({b.size, b.max_frames});
  b.phoneme_mask = Tensor::zeros({b.size, b.max_phonemes});
  b.durations = Tensor::zeros({b.size, b.max_phonemes});

  for (int i = 0; i < b.size; ++i) {
    const Utterance& u = *utts[static_cast<std::size_t>(i)];
    for (int t = 0; t < u.frames(); ++t) {
      b.frame_mask.at(i, t) = 1.0;
      b.pitch.at(i, t) = u.pitch.f0[static_cast<std::size_t>(t)];
      for (int m = 0; m < mel_bins; ++m) b.mels.at(i, t, m) = u.mel.values.at(t, m);
      if (u.noise_mel)
        for (int m = 0; m < mel_bins; ++m)
          b.noise_mels.at(i, t, m) = u.noise_mel->values.at(t, m);
    }
    if (u.noise_mel) b.noise_mask.at(i) = 1.0;
    for (std::size_t l = 0; l < u.phoneme_ids.size(); ++l) {
      b.phoneme_mask.at(i, static_cast<int>(l)) = 1.0;
      b.durations.at(i, static_cast<int>(l)) = u.durations[l];
    }
  }
  return b;
}

// Per-utterance masked-cell mean, then mean over the batch. Matches the
// training aggregation exactly, so batched and sequential evaluation agree.
inline double masked_mae_batch(const Tensor& a, const Tensor& b,
                               const Tensor& frame_mask) {
  core::require_same_shape(a, b, "masked_mae_batch");
  if (a.rank() != 3 || frame_mask.rank() != 2 ||
      frame_mask.dim(0) != a.dim(0) || frame_mask.dim(1) != a.dim(1))
    throw InvalidInputError("masked_mae_batch: bad shapes");
  const int B = a.dim(0), T = a.dim(1), M = a.dim(2);
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    double acc = 0.0;
    long long count = 0;
    for (int t = 0; t < T; ++t) {
      if (frame_mask.at(i, t) == 0.0) continue;
      for (int m = 0; m < M; ++m) acc += std::fabs(a.at(i, t, m) - b.at(i, t, m));
      count += M;
    }
    if (count == 0) throw InvalidInputError("masked_mae_batch: empty mask row");
    total += acc / static_cast<double>(count);
  }
  return total / B;
}

inline double masked_mse_batch(const Tensor& a, const Tensor& b,
                               const Tensor& frame_mask) {
  core::require_same_shape(a, b, "masked_mse_batch");
  const int B = a.dim(0), T = a.dim(1), M = a.dim(2);
  double total = 0.0;
  for (int i = 0; i < B; ++i) {
    double acc = 0.0;
    long long count = 0;
    for (int t = 0; t < T; ++t) {
      if (frame_mask.at(i, t) == 0.0) continue;
      for (int m = 0; m < M; ++m) {
        const double d = a.at(i, t, m) - b.at(i, t, m);
        acc += d * d;
      }
      count += M;
    }
    if (count == 0) throw InvalidInputError("masked_mse_batch: empty mask row");
    total += acc / static_cast<double>(count);
  }
  return total / B;
}

}  // namespace cleartts::corpus
