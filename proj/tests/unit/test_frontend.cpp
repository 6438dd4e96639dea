/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "cleartts/audio/frontend.hpp"
#include "cleartts/core/rng.hpp"

using namespace cleartts;
using namespace cleartts::audio;

namespace {

Waveform sine(double freq, double seconds, double amp = 0.5, int sr = 22050) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
  return w;
}

Waveform white_noise(std::size_t n, double amp, std::uint64_t seed, int sr = 22050) {
  core::Rng rng(seed);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (auto& s : w.samples) s = amp * rng.uniform(-1.0, 1.0);
  return w;
}

double measured_snr_db(const Waveform& clean, const Waveform& scaled_noise) {
  double pc = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    pc += clean.samples[i] * clean.samples[i];
    pn += scaled_noise.samples[i] * scaled_noise.samples[i];
  }
  return 10.0 * std::log10(pc / pn);
}

}  // namespace

TEST_CASE("mel frame count matches floor(len/hop)+1") {
  FrontendConfig cfg;
  auto w = sine(440.0, 1.0);
  REQUIRE(w.samples.size() == 22050);
  auto mel = mel_spectrogram(w, cfg);
  CHECK(mel.frames() == 81);
  CHECK(mel.mels() == 80);

  // Small config so the formula can be swept over many lengths cheaply.
  FrontendConfig mini;
  mini.sample_rate = 64;
  mini.win_samples = 8;
  mini.hop_samples = 4;
  mini.n_fft = 16;
  mini.n_mels = 4;
  mini.fmax_hz = 32.0;
  for (std::size_t len = 1; len <= 40; ++len) {
    Waveform w2;
    w2.sample_rate = 64;
    w2.samples.assign(len, 0.25);
    auto m = mel_spectrogram(w2, mini);
    CHECK(m.frames() == static_cast<int>(len / 4) + 1);
  }
}

TEST_CASE("all-zero waveform hits the log floor everywhere") {
  FrontendConfig cfg;
  Waveform w;
  w.samples.assign(2750, 0.0);
  auto mel = mel_spectrogram(w, cfg);
  const double floor = std::log(1e-5);
  for (double x : mel.values.v) CHECK(x == floor);
  CHECK_THAT(floor, Catch::Matchers::WithinAbs(-11.5129, 1e-4));
}

TEST_CASE("sine tone lands in the mel bin with the nearest center") {
  FrontendConfig cfg;
  auto w = sine(440.0, 1.0);
  auto mel = mel_spectrogram(w, cfg);

  const auto centers = mel_center_freqs(cfg);
  int expect = 0;
  for (int m = 1; m < cfg.n_mels; ++m)
    if (std::fabs(centers[static_cast<std::size_t>(m)] - 440.0) <
        std::fabs(centers[static_cast<std::size_t>(expect)] - 440.0))
      expect = m;

  // Frames whose window is fully inside the signal carry pure tone content;
  // the two boundary frames analyze reflected padding, so allow one bin there.
  const int guard = (cfg.win_samples / 2 + cfg.hop_samples - 1) / cfg.hop_samples;
  for (int t = 0; t < mel.frames(); ++t) {
    int argmax = 0;
    for (int m = 1; m < cfg.n_mels; ++m)
      if (mel.values.at(t, m) > mel.values.at(t, argmax)) argmax = m;
    if (t >= guard && t < mel.frames() - guard)
      CHECK(argmax == expect);
    else
      CHECK(std::abs(argmax - expect) <= 1);
  }
}

TEST_CASE("mel_spectrogram is deterministic") {
  FrontendConfig cfg;
  auto w = white_noise(5000, 0.3, 7);
  auto a = mel_spectrogram(w, cfg);
  auto b = mel_spectrogram(w, cfg);
  REQUIRE(a.values.v == b.values.v);
}

TEST_CASE("mel_spectrogram error paths") {
  FrontendConfig cfg;
  Waveform empty;
  CHECK_THROWS_AS(mel_spectrogram(empty, cfg), InvalidInputError);

  Waveform wrong_sr;
  wrong_sr.sample_rate = 16000;
  wrong_sr.samples.assign(100, 0.1);
  CHECK_THROWS_AS(mel_spectrogram(wrong_sr, cfg), ConfigError);

  FrontendConfig bad = cfg;
  bad.win_samples = 100;
  bad.hop_samples = 200;
  Waveform w;
  w.samples.assign(100, 0.1);
  CHECK_THROWS_AS(mel_spectrogram(w, bad), ConfigError);
}

TEST_CASE("silence_mel definition and equivalence with zero waveform") {
  FrontendConfig cfg;
  auto s10 = silence_mel(10, cfg);
  REQUIRE(s10.values.shape == std::vector<int>({10, 80}));
  for (double x : s10.values.v) CHECK(x == std::log(1e-5));

  auto s1 = silence_mel(1, cfg);
  REQUIRE(s1.values.shape == std::vector<int>({1, 80}));

  CHECK_THROWS_AS(silence_mel(0, cfg), InvalidInputError);

  // Cellwise equality with the mel of a zero waveform of matching length.
  const int frames = 7;
  Waveform w;
  w.samples.assign(static_cast<std::size_t>((frames - 1) * cfg.hop_samples + 1), 0.0);
  auto mel = mel_spectrogram(w, cfg);
  auto sil = silence_mel(frames, cfg);
  REQUIRE(mel.values.shape == sil.values.shape);
  REQUIRE(mel.values.v == sil.values.v);
}

TEST_CASE("mix_at_snr gain in the equal-power cases") {
  auto clean = sine(300.0, 0.5, 0.4);
  Waveform noise = clean;  // identical power
  auto r0 = mix_at_snr(clean, noise, 0.0);
  // g = 1 means scaled noise equals the input noise exactly.
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    REQUIRE_THAT(r0.scaled_noise.samples[i],
                 Catch::Matchers::WithinAbs(noise.samples[i], 1e-12));

  auto r20 = mix_at_snr(clean, noise, 20.0);
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    REQUIRE_THAT(r20.scaled_noise.samples[i],
                 Catch::Matchers::WithinAbs(0.1 * noise.samples[i], 1e-12));
}

TEST_CASE("mix_at_snr achieves the requested SNR within 0.01 dB") {
  core::Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    auto clean = white_noise(4000, rng.uniform(0.05, 0.4), rng.next_u64());
    auto noise = white_noise(4000, rng.uniform(0.05, 0.4), rng.next_u64());
    const double snr = rng.uniform(5.0, 25.0);
    auto r = mix_at_snr(clean, noise, snr);
    // The guard gain cancels in the ratio, so reconstruct clean from the mix.
    Waveform clean_part;
    clean_part.samples.resize(clean.samples.size());
    for (std::size_t i = 0; i < clean.samples.size(); ++i)
      clean_part.samples[i] = r.noisy.samples[i] - r.scaled_noise.samples[i];
    CHECK_THAT(measured_snr_db(clean_part, r.scaled_noise),
               Catch::Matchers::WithinAbs(snr, 0.01));
  }
}

TEST_CASE("mix_at_snr clipping guard preserves the ratio") {
  auto clean = sine(220.0, 0.25, 0.9);
  auto noise = sine(260.0, 0.25, 0.9);
  auto r = mix_at_snr(clean, noise, 0.0);
  CHECK(r.gain < 1.0);
  CHECK(r.noisy.peak() <= 1.0 + 1e-12);
  Waveform clean_part;
  clean_part.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < clean.samples.size(); ++i)
    clean_part.samples[i] = r.noisy.samples[i] - r.scaled_noise.samples[i];
  CHECK_THAT(measured_snr_db(clean_part, r.scaled_noise),
             Catch::Matchers::WithinAbs(0.0, 0.01));
}

TEST_CASE("mix_at_snr error paths") {
  auto clean = sine(300.0, 0.1);
  Waveform zeros;
  zeros.samples.assign(clean.samples.size(), 0.0);
  CHECK_THROWS_AS(mix_at_snr(clean, zeros, 10.0), InvalidInputError);
  CHECK_THROWS_AS(mix_at_snr(zeros, clean, 10.0), InvalidInputError);

  Waveform shorter = clean;
  shorter.samples.resize(clean.samples.size() / 2);
  CHECK_THROWS_AS(mix_at_snr(clean, shorter, 10.0), InvalidInputError);
}

TEST_CASE("tile_to_length reads circularly from the offset") {
  Waveform noise;
  noise.samples = {0.1, 0.2, 0.3};
  auto tiled = tile_to_length(noise, 7, 2);
  const std::vector<double> expect = {0.3, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3};
  REQUIRE(tiled.samples == expect);
}

TEST_CASE("extract_f0 tracks a pure tone") {
  FrontendConfig cfg;
  auto w = sine(220.0, 0.8, 0.4);
  auto pc = extract_f0(w, cfg);
  REQUIRE(pc.f0.size() == static_cast<std::size_t>(frame_count(w.size(), cfg.hop_samples)));
  int voiced = 0;
  for (double f : pc.f0) {
    if (f > 0.0) {
      ++voiced;
      CHECK_THAT(f, Catch::Matchers::WithinAbs(220.0, 3.0));
    }
  }
  CHECK(voiced > static_cast<int>(pc.f0.size()) * 9 / 10);
}

TEST_CASE("extract_f0 marks silence and noise unvoiced") {
  FrontendConfig cfg;
  Waveform zeros;
  zeros.samples.assign(5500, 0.0);
  auto pz = extract_f0(zeros, cfg);
  for (double f : pz.f0) CHECK(f == 0.0);

  auto noise = white_noise(11025, 0.3, 99);
  auto pn = extract_f0(noise, cfg);
  int unvoiced = 0;
  for (double f : pn.f0)
    if (f == 0.0) ++unvoiced;
  CHECK(unvoiced >= static_cast<int>(pn.f0.size()) * 9 / 10);
}

TEST_CASE("wav round trip") {
  auto w = sine(440.0, 0.1, 0.5);
  const std::string path = "/tmp/cleartts_test_roundtrip.wav";
  write_wav(path, w);
  auto r = read_wav(path);
  REQUIRE(r.sample_rate == w.sample_rate);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK_THAT(r.samples[i], Catch::Matchers::WithinAbs(w.samples[i], 1.0 / 32768.0));
  std::remove(path.c_str());
}
