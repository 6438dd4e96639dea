/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "cleartts/audio/fft.hpp"
#include "cleartts/audio/wav.hpp"
#include "cleartts/common.hpp"
#include "cleartts/core/tensor.hpp"

namespace cleartts::audio {

using core::Tensor;

// Analysis settings. 1100 / 275 samples at 22050 Hz give an exact 4:1
// window/hop ratio (50 ms / 12.5 ms would be the non-integral 1102.5 /
// 275.625); the 0.23% deviation is accepted and recorded here once.
struct FrontendConfig {
  int sample_rate = 22050;
  int win_samples = 1100;
  int hop_samples = 275;
  int n_fft = 2048;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double amp_floor = 1e-5;   // clamp before log
  double amp_ceil = 1e3;     // normalization ceiling for SSIM
  double f0_min_hz = 50.0;
  double f0_max_hz = 800.0;
  double voicing_threshold = 0.6;

  double log_floor() const { return std::log(amp_floor); }
  double log_ceil() const { return std::log(amp_ceil); }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("frontend: sample_rate must be > 0");
    if (hop_samples <= 0 || win_samples < hop_samples)
      throw ConfigError("frontend: need win_samples >= hop_samples > 0");
    if (n_fft < win_samples || (n_fft & (n_fft - 1)) != 0)
      throw ConfigError("frontend: n_fft must be a power of two >= win_samples");
    if (n_mels <= 0) throw ConfigError("frontend: n_mels must be > 0");
    if (!(fmax_hz > fmin_hz) || fmax_hz > sample_rate / 2.0)
      throw ConfigError("frontend: need fmin < fmax <= Nyquist");
    if (!(amp_floor > 0.0) || !(amp_ceil > amp_floor))
      throw ConfigError("frontend: need 0 < amp_floor < amp_ceil");
  }
};

// Log-amplitude mel features, frames x n_mels.
struct MelSpectrogram {
  Tensor values;
  int hop_samples = 0;
  int win_samples = 0;

  int frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
  int mels() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

// Per-frame F0 in Hz, 0 for unvoiced frames.
struct PitchContour {
  std::vector<double> f0;
};

inline int frame_count(std::size_t n_samples, int hop) {
  return static_cast<int>(n_samples / static_cast<std::size_t>(hop)) + 1;
}

namespace detail {

// Mirror-without-edge-repeat indexing; valid for any signal length >= 1.
inline double reflect_sample(const std::vector<double>& x, long long i) {
  const long long n = static_cast<long long>(x.size());
  if (n == 1) return x[0];
  const long long period = 2 * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return x[static_cast<std::size_t>(m)];
}

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / n);
  return w;
}

}  // namespace detail

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

// Triangular mel filterbank, n_mels x (n_fft/2 + 1), peak weight 1.
inline Tensor mel_filterbank(const FrontendConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  Tensor fb({cfg.n_mels, n_bins});
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > lo && f < center)
        w = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        w = (hi - f) / (hi - center);
      fb.at(m, b) = w;
    }
  }
  return fb;
}

// Center frequency (Hz) of each mel filter; test oracle for tone placement.
inline std::vector<double> mel_center_freqs(const FrontendConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> centers(static_cast<std::size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[static_cast<std::size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
  return centers;
}

// Complex STFT of the reflect-padded, Hann-windowed signal.
// Frame t is centered on sample t * hop; frames = floor(len / hop) + 1.
inline std::vector<std::vector<std::complex<double>>> stft_complex(
    const Waveform& w, const FrontendConfig& cfg) {
  const int frames = frame_count(w.size(), cfg.hop_samples);
  const int half = cfg.win_samples / 2;
  const auto window = detail::hann_window(cfg.win_samples);
  std::vector<double> frame(static_cast<std::size_t>(cfg.n_fft), 0.0);
  std::vector<std::vector<std::complex<double>>> out(
      static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const long long start = static_cast<long long>(t) * cfg.hop_samples - half;
    for (int i = 0; i < cfg.win_samples; ++i)
      frame[static_cast<std::size_t>(i)] =
          detail::reflect_sample(w.samples, start + i) *
          window[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(t)] = rfft(frame);
  }
  return out;
}

inline std::vector<std::vector<double>> stft_magnitude(const Waveform& w,
                                                       const FrontendConfig& cfg) {
  const auto spec = stft_complex(w, cfg);
  std::vector<std::vector<double>> mags(spec.size());
  for (std::size_t t = 0; t < spec.size(); ++t) {
    mags[t].resize(spec[t].size());
    for (std::size_t b = 0; b < spec[t].size(); ++b) mags[t][b] = std::abs(spec[t][b]);
  }
  return mags;
}

// Log-mel features. Deterministic: identical input gives identical output.
inline MelSpectrogram mel_spectrogram(const Waveform& w, const FrontendConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw InvalidInputError("mel_spectrogram: empty waveform");
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("mel_spectrogram: waveform sample rate " +
                      std::to_string(w.sample_rate) + " != config " +
                      std::to_string(cfg.sample_rate));
  for (double s : w.samples)
    if (!std::isfinite(s))
      throw InvalidInputError("mel_spectrogram: non-finite sample");

  const auto mags = stft_magnitude(w, cfg);
  const Tensor fb = mel_filterbank(cfg);
  const int frames = static_cast<int>(mags.size());
  const int n_bins = fb.dim(1);

  // Power-domain mel: keeps a pure tone inside the filter whose center is
  // nearest in frequency instead of smearing it over neighbours.
  MelSpectrogram mel;
  mel.hop_samples = cfg.hop_samples;
  mel.win_samples = cfg.win_samples;
  mel.values = Tensor({frames, cfg.n_mels});
  for (int t = 0; t < frames; ++t) {
    const auto& mag = mags[static_cast<std::size_t>(t)];
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (int b = 0; b < n_bins; ++b) {
        const double a = mag[static_cast<std::size_t>(b)];
        acc += fb.at(m, b) * a * a;
      }
      mel.values.at(t, m) = std::log(std::max(acc, cfg.amp_floor));
    }
  }
  return mel;
}

// Constant all-floor mel; cellwise-equal to the mel of an all-zero waveform.
inline MelSpectrogram silence_mel(int frames, const FrontendConfig& cfg) {
  cfg.validate();
  if (frames < 1) throw InvalidInputError("silence_mel: frames must be >= 1");
  MelSpectrogram mel;
  mel.hop_samples = cfg.hop_samples;
  mel.win_samples = cfg.win_samples;
  mel.values = Tensor::full({frames, cfg.n_mels}, cfg.log_floor());
  return mel;
}

// Tiles (or trims) noise to exactly `length` samples, reading circularly
// from `offset`.
inline Waveform tile_to_length(const Waveform& noise, std::size_t length,
                               std::size_t offset) {
  if (noise.samples.empty()) throw InvalidInputError("tile_to_length: empty noise");
  Waveform out;
  out.sample_rate = noise.sample_rate;
  out.samples.resize(length);
  const std::size_t n = noise.samples.size();
  for (std::size_t i = 0; i < length; ++i)
    out.samples[i] = noise.samples[(offset + i) % n];
  return out;
}

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;
  double gain = 1.0;  // post-mix rescale applied to keep |noisy| <= 1
};

// noisy = clean + g * noise with g chosen so the clean/noise power ratio is
// exactly snr_db. If the mix clips, both signals are rescaled together
// (which preserves the ratio) and the applied gain is reported.
inline MixResult mix_at_snr(const Waveform& clean, const Waveform& noise,
                            double snr_db) {
  if (clean.sample_rate != noise.sample_rate)
    throw InvalidInputError("mix_at_snr: sample rate mismatch");
  if (clean.samples.size() != noise.samples.size())
    throw InvalidInputError("mix_at_snr: length mismatch (tile noise first)");
  const double rms_c = clean.rms();
  const double rms_n = noise.rms();
  if (rms_c <= 0.0 || rms_n <= 0.0)
    throw InvalidInputError("mix_at_snr: zero-power input");

  const double g = rms_c / (rms_n * std::pow(10.0, snr_db / 20.0));
  MixResult r;
  r.noisy.sample_rate = clean.sample_rate;
  r.scaled_noise.sample_rate = clean.sample_rate;
  r.noisy.samples.resize(clean.samples.size());
  r.scaled_noise.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    r.scaled_noise.samples[i] = g * noise.samples[i];
    r.noisy.samples[i] = clean.samples[i] + r.scaled_noise.samples[i];
  }
  const double peak = r.noisy.peak();
  if (peak > 1.0) {
    r.gain = 1.0 / peak;
    for (auto& s : r.noisy.samples) s *= r.gain;
    for (auto& s : r.scaled_noise.samples) s *= r.gain;
  }
  return r;
}

// Autocorrelation pitch tracker. One F0 value per mel frame, aligned with
// the same frame centers as mel_spectrogram; unvoiced frames are 0.
inline PitchContour extract_f0(const Waveform& w, const FrontendConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw InvalidInputError("extract_f0: empty waveform");

  const int frames = frame_count(w.size(), cfg.hop_samples);
  const int W = cfg.win_samples;
  const int half = W / 2;
  const int lag_min = std::max(
      2, static_cast<int>(std::floor(cfg.sample_rate / cfg.f0_max_hz)));
  const int lag_max = std::min(
      W - 2, static_cast<int>(std::ceil(cfg.sample_rate / cfg.f0_min_hz)));

  PitchContour pc;
  pc.f0.assign(static_cast<std::size_t>(frames), 0.0);
  std::vector<double> x(static_cast<std::size_t>(W));
  std::vector<double> ncc(static_cast<std::size_t>(lag_max) + 1, 0.0);

  for (int t = 0; t < frames; ++t) {
    const long long start = static_cast<long long>(t) * cfg.hop_samples - half;
    double mean = 0.0;
    for (int i = 0; i < W; ++i) {
      x[static_cast<std::size_t>(i)] = detail::reflect_sample(w.samples, start + i);
      mean += x[static_cast<std::size_t>(i)];
    }
    mean /= W;
    double energy = 0.0;
    for (int i = 0; i < W; ++i) {
      x[static_cast<std::size_t>(i)] -= mean;
      energy += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    }
    if (energy / W < 1e-8) continue;  // silence

    double vmax = 0.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      for (int i = 0; i + lag < W; ++i) {
        const double a = x[static_cast<std::size_t>(i)];
        const double b = x[static_cast<std::size_t>(i + lag)];
        num += a * b;
        e0 += a * a;
        e1 += b * b;
      }
      const double denom = std::sqrt(e0 * e1);
      const double value = denom > 0.0 ? num / denom : 0.0;
      ncc[static_cast<std::size_t>(lag)] = value;
      vmax = std::max(vmax, value);
    }
    if (vmax < cfg.voicing_threshold) continue;

    // A pure tone peaks equally at every multiple of its period; take the
    // first local maximum close to the global one so subharmonics lose.
    int best_lag = 0;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      const double c = ncc[static_cast<std::size_t>(lag)];
      if (c < 0.95 * vmax || c < cfg.voicing_threshold) continue;
      const double l = lag > lag_min ? ncc[static_cast<std::size_t>(lag) - 1] : -1.0;
      const double r = lag < lag_max ? ncc[static_cast<std::size_t>(lag) + 1] : -1.0;
      if (c >= l && c >= r) {
        best_lag = lag;
        break;
      }
    }
    if (best_lag == 0) continue;

    double lag = static_cast<double>(best_lag);
    if (best_lag > lag_min && best_lag < lag_max) {
      const double l = ncc[static_cast<std::size_t>(best_lag) - 1];
      const double c = ncc[static_cast<std::size_t>(best_lag)];
      const double r = ncc[static_cast<std::size_t>(best_lag) + 1];
      const double denom = l - 2.0 * c + r;
      if (std::fabs(denom) > 1e-12) lag += 0.5 * (l - r) / denom;
    }
    const double f0 = cfg.sample_rate / lag;
    if (f0 >= cfg.f0_min_hz && f0 <= cfg.f0_max_hz)
      pc.f0[static_cast<std::size_t>(t)] = f0;
  }
  return pc;
}

}  // namespace cleartts::audio
