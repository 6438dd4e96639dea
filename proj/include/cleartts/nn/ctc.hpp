/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "cleartts/nn/tape.hpp"

namespace cleartts::nn {

// Log-space "zero". Large but finite so sums stay well-defined.
constexpr double kLogZero = -1e30;

inline double log_add(double a, double b) {
  if (a <= kLogZero) return b;
  if (b <= kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Minimum number of frames needed to emit `target` (repeats force a blank).
inline int ctc_min_frames(const std::vector<int>& target) {
  int need = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  return need;
}

namespace detail {

// Blank-augmented label sequence: blank, t0, blank, t1, ..., blank.
inline std::vector<int> augment_target(const std::vector<int>& target, int blank) {
  std::vector<int> aug(2 * target.size() + 1, blank);
  for (std::size_t i = 0; i < target.size(); ++i) aug[2 * i + 1] = target[i];
  return aug;
}

inline void validate_ctc_inputs(const Tensor& logp, const std::vector<int>& target,
                                int blank) {
  if (logp.rank() != 2) throw InvalidInputError("ctc: log_probs must be [T, C]");
  const int C = logp.dim(1);
  if (blank < 0 || blank >= C) throw InvalidInputError("ctc: blank index out of range");
  for (int label : target)
    if (label < 0 || label >= C || label == blank)
      throw InvalidInputError("ctc: target label out of range or equal to blank");
}

// Forward variables; alpha[t][s] includes the emission at time t.
inline std::vector<std::vector<double>> ctc_alphas(const Tensor& logp,
                                                   const std::vector<int>& aug) {
  const int T = logp.dim(0);
  const int S = static_cast<int>(aug.size());
  std::vector<std::vector<double>> alpha(
      static_cast<std::size_t>(T),
      std::vector<double>(static_cast<std::size_t>(S), kLogZero));
  alpha[0][0] = logp.at(0, aug[0]);
  if (S > 1) alpha[0][1] = logp.at(0, aug[1]);
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < S; ++s) {
      double acc = alpha[static_cast<std::size_t>(t) - 1][static_cast<std::size_t>(s)];
      if (s >= 1)
        acc = log_add(acc, alpha[static_cast<std::size_t>(t) - 1]
                               [static_cast<std::size_t>(s) - 1]);
      if (s >= 2 && aug[static_cast<std::size_t>(s)] != aug[0] &&
          aug[static_cast<std::size_t>(s)] != aug[static_cast<std::size_t>(s) - 2])
        acc = log_add(acc, alpha[static_cast<std::size_t>(t) - 1]
                               [static_cast<std::size_t>(s) - 2]);
      alpha[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] =
          acc <= kLogZero ? kLogZero
                          : acc + logp.at(t, aug[static_cast<std::size_t>(s)]);
    }
  return alpha;
}

// Backward variables; beta[t][s] also includes the emission at time t.
inline std::vector<std::vector<double>> ctc_betas(const Tensor& logp,
                                                  const std::vector<int>& aug) {
  const int T = logp.dim(0);
  const int S = static_cast<int>(aug.size());
  std::vector<std::vector<double>> beta(
      static_cast<std::size_t>(T),
      std::vector<double>(static_cast<std::size_t>(S), kLogZero));
  beta[static_cast<std::size_t>(T) - 1][static_cast<std::size_t>(S) - 1] =
      logp.at(T - 1, aug[static_cast<std::size_t>(S) - 1]);
  if (S > 1)
    beta[static_cast<std::size_t>(T) - 1][static_cast<std::size_t>(S) - 2] =
        logp.at(T - 1, aug[static_cast<std::size_t>(S) - 2]);
  for (int t = T - 2; t >= 0; --t)
    for (int s = S - 1; s >= 0; --s) {
      double acc = beta[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(s)];
      if (s + 1 < S)
        acc = log_add(acc, beta[static_cast<std::size_t>(t) + 1]
                               [static_cast<std::size_t>(s) + 1]);
      if (s + 2 < S && aug[static_cast<std::size_t>(s)] != aug[0] &&
          aug[static_cast<std::size_t>(s)] != aug[static_cast<std::size_t>(s) + 2])
        acc = log_add(acc, beta[static_cast<std::size_t>(t) + 1]
                               [static_cast<std::size_t>(s) + 2]);
      beta[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] =
          acc <= kLogZero ? kLogZero
                          : acc + logp.at(t, aug[static_cast<std::size_t>(s)]);
    }
  return beta;
}

}  // namespace detail

// Negative log probability of all alignments of `target`, by log-space
// forward recursion over the blank-augmented label sequence. Rows of
// log_probs are expected to be normalized log distributions. Returns
// +infinity when the target cannot be emitted in the available frames.
inline double ctc_loss_value(const Tensor& logp, const std::vector<int>& target,
                             int blank) {
  detail::validate_ctc_inputs(logp, target, blank);
  const int T = logp.dim(0);
  if (T < ctc_min_frames(target)) return std::numeric_limits<double>::infinity();
  const auto aug = detail::augment_target(target, blank);
  const auto alpha = detail::ctc_alphas(logp, aug);
  const int S = static_cast<int>(aug.size());
  double log_p = alpha[static_cast<std::size_t>(T) - 1][static_cast<std::size_t>(S) - 1];
  if (S > 1)
    log_p = log_add(log_p, alpha[static_cast<std::size_t>(T) - 1]
                               [static_cast<std::size_t>(S) - 2]);
  if (log_p <= kLogZero) return std::numeric_limits<double>::infinity();
  return -log_p;
}

// Tape node over the log-probability matrix with the analytic alpha-beta
// gradient. Throws for unreachable targets; callers should screen with
// ctc_min_frames and skip those utterances.
inline V ctc_loss(Tape& t, V logp, const std::vector<int>& target, int blank) {
  const Tensor& lp = t.val(logp);
  detail::validate_ctc_inputs(lp, target, blank);
  const int T = lp.dim(0), C = lp.dim(1);
  if (T < ctc_min_frames(target))
    throw InvalidInputError("ctc_loss: target unreachable in " + std::to_string(T) +
                            " frames");
  const auto aug = detail::augment_target(target, blank);
  const auto alpha = detail::ctc_alphas(lp, aug);
  const int S = static_cast<int>(aug.size());
  double log_p = alpha[static_cast<std::size_t>(T) - 1][static_cast<std::size_t>(S) - 1];
  if (S > 1)
    log_p = log_add(log_p, alpha[static_cast<std::size_t>(T) - 1]
                               [static_cast<std::size_t>(S) - 2]);
  if (log_p <= kLogZero)
    throw InvalidInputError("ctc_loss: zero-probability target");

  Tensor y({1});
  y.v[0] = -log_p;
  const bool rg = t.needs_grad(logp);
  V out = t.make(std::move(y), rg);
  if (rg) {
    auto aug_p = std::make_shared<std::vector<int>>(aug);
    auto alpha_p = std::make_shared<std::vector<std::vector<double>>>(alpha);
    t.set_backward(out, [logp, out, aug_p, alpha_p, log_p, T, C, S](Tape& tt) {
      const Tensor& lp2 = tt.val(logp);
      const auto beta = detail::ctc_betas(lp2, *aug_p);
      Tensor gx = Tensor::zeros({T, C});
      for (int tt2 = 0; tt2 < T; ++tt2) {
        // Collect per-label occupancy in log space.
        std::vector<double> lab(static_cast<std::size_t>(C), kLogZero);
        for (int s = 0; s < S; ++s) {
          const double a =
              (*alpha_p)[static_cast<std::size_t>(tt2)][static_cast<std::size_t>(s)];
          const double b = beta[static_cast<std::size_t>(tt2)][static_cast<std::size_t>(s)];
          if (a <= kLogZero || b <= kLogZero) continue;
          const int k = (*aug_p)[static_cast<std::size_t>(s)];
          lab[static_cast<std::size_t>(k)] =
              log_add(lab[static_cast<std::size_t>(k)], a + b);
        }
        for (int k = 0; k < C; ++k) {
          if (lab[static_cast<std::size_t>(k)] <= kLogZero) continue;
          // alpha and beta both include the emission at tt2: divide once.
          gx.at(tt2, k) =
              -std::exp(lab[static_cast<std::size_t>(k)] - lp2.at(tt2, k) - log_p);
        }
      }
      const double g = tt.grad(out).v[0];
      for (auto& x : gx.v) x *= g;
      tt.add_grad(logp, std::move(gx));
    });
  }
  return out;
}

// Collapses a frame-level path: merge repeats, then drop blanks.
inline std::vector<int> ctc_collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : path) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

}  // namespace cleartts::nn
