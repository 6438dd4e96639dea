/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "cleartts/audio/frontend.hpp"

namespace cleartts::synth {

using audio::FrontendConfig;
using audio::MelSpectrogram;
using audio::Waveform;
using core::Tensor;

namespace detail {

// Ridge-regularized pseudo-inverse of the mel filterbank: recovers a
// non-negative linear power spectrum from mel power.
class MelInverter {
 public:
  explicit MelInverter(const FrontendConfig& cfg) : fb_(audio::mel_filterbank(cfg)) {
    const int M = fb_.dim(0), N = fb_.dim(1);
    Eigen::MatrixXd F(M, N);
    for (int m = 0; m < M; ++m)
      for (int b = 0; b < N; ++b) F(m, b) = fb_.at(m, b);
    Eigen::MatrixXd gram = F * F.transpose();
    gram.diagonal().array() += 1e-8;
    solver_.compute(gram);
    ft_ = F.transpose();
  }

  // mel_power: M values for one frame -> linear power per FFT bin.
  std::vector<double> invert(const std::vector<double>& mel_power) const {
    Eigen::Map<const Eigen::VectorXd> p(mel_power.data(),
                                        static_cast<long>(mel_power.size()));
    Eigen::VectorXd s = ft_ * solver_.solve(p);
    std::vector<double> out(static_cast<std::size_t>(s.size()));
    for (long i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] =
        std::max(s(i), 0.0);
    return out;
  }

 private:
  Tensor fb_;
  Eigen::MatrixXd ft_;
  Eigen::LDLT<Eigen::MatrixXd> solver_;
};

// Windowed overlap-add inverse STFT onto a signal of n_samples, with
// squared-window normalization.
inline Waveform istft(const std::vector<std::vector<std::complex<double>>>& spec,
                      const FrontendConfig& cfg, std::size_t n_samples) {
  const int half = cfg.win_samples / 2;
  const auto window = audio::detail::hann_window(cfg.win_samples);
  std::vector<double> acc(n_samples, 0.0), norm(n_samples, 0.0);
  for (std::size_t t = 0; t < spec.size(); ++t) {
    const auto frame = audio::irfft(spec[t], static_cast<std::size_t>(cfg.n_fft));
    const long long start =
        static_cast<long long>(t) * cfg.hop_samples - half;
    for (int i = 0; i < cfg.win_samples; ++i) {
      const long long pos = start + i;
      if (pos < 0 || pos >= static_cast<long long>(n_samples)) continue;
      const double w = window[static_cast<std::size_t>(i)];
      acc[static_cast<std::size_t>(pos)] += frame[static_cast<std::size_t>(i)] * w;
      norm[static_cast<std::size_t>(pos)] += w * w;
    }
  }
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    out.samples[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : 0.0;
  return out;
}

}  // namespace detail

// Phase reconstruction from a log-mel spectrogram: mel power is mapped back
// to a linear magnitude spectrum through a regularized filterbank
// pseudo-inverse, then iterative magnitude-consistent phase estimation runs
// from a zero-phase start (deterministic). Output length is exactly
// frames * hop samples.
inline Waveform griffin_lim(const MelSpectrogram& mel, const FrontendConfig& cfg,
                            int iterations = 60) {
  cfg.validate();
  if (mel.frames() < 1 || mel.mels() != cfg.n_mels)
    throw InvalidInputError("griffin_lim: bad mel shape");
  if (iterations < 1) throw InvalidInputError("griffin_lim: iterations must be >= 1");

  const int T = mel.frames();
  const int n_bins = cfg.n_fft / 2 + 1;
  detail::MelInverter inverter(cfg);

  // Target magnitudes per frame.
  std::vector<std::vector<double>> mags(static_cast<std::size_t>(T));
  std::vector<double> mel_power(static_cast<std::size_t>(cfg.n_mels));
  for (int t = 0; t < T; ++t) {
    for (int m = 0; m < cfg.n_mels; ++m)
      mel_power[static_cast<std::size_t>(m)] = std::exp(mel.values.at(t, m));
    const auto power = inverter.invert(mel_power);
    auto& row = mags[static_cast<std::size_t>(t)];
    row.resize(static_cast<std::size_t>(n_bins));
    for (int b = 0; b < n_bins; ++b)
      row[static_cast<std::size_t>(b)] = std::sqrt(power[static_cast<std::size_t>(b)]);
  }

  // The iteration runs on a signal of (T-1)*hop samples so its own STFT has
  // exactly T frames.
  const std::size_t iter_len =
      static_cast<std::size_t>(std::max(1, (T - 1) * cfg.hop_samples));
  std::vector<std::vector<std::complex<double>>> spec(
      static_cast<std::size_t>(T),
      std::vector<std::complex<double>>(static_cast<std::size_t>(n_bins)));
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < n_bins; ++b)
      spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] = {
          mags[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)], 0.0};

  Waveform signal;
  for (int it = 0; it < iterations; ++it) {
    signal = detail::istft(spec, cfg, iter_len);
    const auto estimate = audio::stft_complex(signal, cfg);
    for (int t = 0; t < T && t < static_cast<int>(estimate.size()); ++t)
      for (int b = 0; b < n_bins; ++b) {
        const auto z = estimate[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)];
        const double a = std::abs(z);
        const double target = mags[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)];
        spec[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] =
            a > 1e-12 ? z * (target / a) : std::complex<double>(target, 0.0);
      }
  }

  // Final synthesis emits frames * hop samples; the trailing hop is covered
  // by the last frames' window halves.
  return detail::istft(spec, cfg,
                       static_cast<std::size_t>(T) *
                           static_cast<std::size_t>(cfg.hop_samples));
}

}  // namespace cleartts::synth
