/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <string>
#include <vector>

#include "cleartts/model/config.hpp"
#include "cleartts/nn/ctc.hpp"
#include "cleartts/nn/transformer.hpp"

namespace cleartts::model {

using core::Tensor;
using nn::Binder;
using nn::ParamStore;
using nn::Tape;
using nn::V;

// Spectrogram-domain UNet noise extractor. Input and output are [T, mel]
// log-mel matrices; the time axis is padded up to a multiple of
// 2^depth with the log-floor value internally and cropped back, so the
// length contract holds for every T >= 1. Each DownConv/UpConv block is a
// resampling layer plus two 3x3 convolutions, each conv followed by ReLU
// and then batch normalization; skips connect matching resolutions.
//
// The normalization statistics are per input map (the "batch" here is one
// variable-length utterance). Running averages cannot follow the per-
// utterance level shifts that SNR mixing produces, so the same per-map
// statistics are used in training and inference; the extractor is a pure
// function of its input.
class NoiseExtractor {
 public:
  NoiseExtractor(const ModelConfig& cfg) : cfg_(cfg) {
    channels_.push_back(cfg.unet_base_channels);
    for (int k = 1; k <= cfg.unet_depth; ++k)
      channels_.push_back(channels_.back() * 2);
    const int div = 1 << cfg.unet_depth;
    if (cfg.mel_bins % div != 0)
      throw ConfigError("extractor: mel_bins must be divisible by 2^depth");
  }

  static constexpr const char* kPrefix = "extractor/";

  void register_params(ParamStore& store, std::uint64_t seed) const {
    register_double_conv(store, seed, block_name(0), 1, channels_[0]);
    for (int k = 1; k <= cfg_.unet_depth; ++k)
      register_double_conv(store, seed, block_name(k),
                           channels_[static_cast<std::size_t>(k) - 1],
                           channels_[static_cast<std::size_t>(k)]);
    for (int k = cfg_.unet_depth; k >= 1; --k) {
      const int c = channels_[static_cast<std::size_t>(k)];
      const std::string up = std::string(kPrefix) + "up" + std::to_string(k) + "/";
      {
        auto rng = nn::init_rng(seed, up + "red_w");
        store.add(up + "red_w", nn::xavier_uniform({c / 2, c, 1, 1}, c, c / 2, rng));
        store.add(up + "red_b", Tensor::zeros({c / 2}));
      }
      register_double_conv(store, seed, up, c, c / 2);
    }
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "out_w");
      store.add(std::string(kPrefix) + "out_w",
                nn::xavier_uniform({1, channels_[0], 1, 1}, channels_[0], 1, rng));
      store.add(std::string(kPrefix) + "out_b", Tensor::zeros({1}));
    }
  }

  V forward(Tape& t, Binder& p, V noisy_mel, double pad_value) const {
    const Tensor& mv = t.val(noisy_mel);
    if (mv.rank() != 2 || mv.dim(1) != cfg_.mel_bins)
      throw InvalidInputError("extractor: expects [T, " +
                              std::to_string(cfg_.mel_bins) + "], got " +
                              mv.shape_str());
    const int T = mv.dim(0);
    const int mult = 1 << cfg_.unet_depth;
    const int T_pad = ((T + mult - 1) / mult) * mult;

    V x = nn::reshape(t, noisy_mel, {1, T, cfg_.mel_bins});
    x = nn::pad_rows2d(t, x, T_pad, pad_value);

    std::vector<V> skips;
    x = double_conv(t, p, block_name(0), x);
    for (int k = 1; k <= cfg_.unet_depth; ++k) {
      skips.push_back(x);
      x = nn::maxpool2x2(t, x);
      x = double_conv(t, p, block_name(k), x);
    }
    for (int k = cfg_.unet_depth; k >= 1; --k) {
      const std::string up = std::string(kPrefix) + "up" + std::to_string(k) + "/";
      x = nn::upsample_nearest2x(t, x);
      x = nn::conv2d(t, x, p(up + "red_w"), p(up + "red_b"), 0);
      x = nn::concat_channels(t, skips[static_cast<std::size_t>(k) - 1], x);
      x = double_conv(t, p, up, x);
    }
    x = nn::conv2d(t, x, p(std::string(kPrefix) + "out_w"),
                   p(std::string(kPrefix) + "out_b"), 0);
    x = nn::crop_rows2d(t, x, T);
    return nn::reshape(t, x, {T, cfg_.mel_bins});
  }

 private:
  static std::string block_name(int k) {
    return k == 0 ? std::string(kPrefix) + "stem/"
                  : std::string(kPrefix) + "down" + std::to_string(k) + "/";
  }

  static void register_double_conv(ParamStore& store, std::uint64_t seed,
                                   const std::string& prefix, int c_in, int c_out) {
    int in = c_in;
    for (int i = 1; i <= 2; ++i) {
      const std::string n = std::to_string(i);
      auto rng = nn::init_rng(seed, prefix + "c" + n + "_w");
      store.add(prefix + "c" + n + "_w",
                nn::xavier_uniform({c_out, in, 3, 3}, in * 9, c_out * 9, rng));
      store.add(prefix + "c" + n + "_b", Tensor::zeros({c_out}));
      store.add(prefix + "bn" + n + "_g", Tensor::full({c_out}, 1.0));
      store.add(prefix + "bn" + n + "_b", Tensor::zeros({c_out}));
      in = c_out;
    }
  }

  V double_conv(Tape& t, Binder& p, const std::string& prefix, V x) const {
    static const Tensor kUnused;
    for (int i = 1; i <= 2; ++i) {
      const std::string n = std::to_string(i);
      x = nn::conv2d(t, x, p(prefix + "c" + n + "_w"), p(prefix + "c" + n + "_b"), 1);
      x = nn::relu(t, x);
      x = nn::batchnorm2d(t, x, p(prefix + "bn" + n + "_g"),
                          p(prefix + "bn" + n + "_b"), /*training=*/true,
                          kUnused, kUnused, nullptr, nullptr);
    }
    return x;
  }

  ModelConfig cfg_;
  std::vector<int> channels_;
};

// Converts a noise mel into the frame-level noise condition: two 1D
// convolutions over time and a per-frame linear to d_model. Utterance
// granularity replaces the frame vectors with their time mean broadcast to
// every frame; granularity "none" is a zero condition independent of input.
class NoiseEncoder {
 public:
  explicit NoiseEncoder(const ModelConfig& cfg) : cfg_(cfg) {}

  static constexpr const char* kPrefix = "noise_enc/";

  void register_params(ParamStore& store, std::uint64_t seed) const {
    const int D = cfg_.d_model, M = cfg_.mel_bins;
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "conv1_w");
      store.add(std::string(kPrefix) + "conv1_w",
                nn::xavier_uniform({D, M, 3}, M * 3, D * 3, rng));
      store.add(std::string(kPrefix) + "conv1_b", Tensor::zeros({D}));
    }
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "conv2_w");
      store.add(std::string(kPrefix) + "conv2_w",
                nn::xavier_uniform({D, D, 3}, D * 3, D * 3, rng));
      store.add(std::string(kPrefix) + "conv2_b", Tensor::zeros({D}));
    }
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "out_w");
      store.add(std::string(kPrefix) + "out_w", nn::xavier_uniform({D, D}, D, D, rng));
      store.add(std::string(kPrefix) + "out_b", Tensor::zeros({D}));
    }
  }

  V forward(Tape& t, Binder& p, V noise_mel, Granularity granularity,
            int target_frames) const {
    if (granularity == Granularity::kNone)
      return nn::constant(t, Tensor::zeros({target_frames, cfg_.d_model}));
    const Tensor& mv = t.val(noise_mel);
    if (mv.rank() != 2 || mv.dim(1) != cfg_.mel_bins)
      throw InvalidInputError("noise_encoder: bad input shape " + mv.shape_str());
    if (mv.dim(0) != target_frames)
      throw InvalidInputError("noise_encoder: length " + std::to_string(mv.dim(0)) +
                              " != mel frames " + std::to_string(target_frames));
    V x = nn::relu(t, nn::conv1d_same(t, noise_mel, p(std::string(kPrefix) + "conv1_w"),
                                      p(std::string(kPrefix) + "conv1_b")));
    x = nn::relu(t, nn::conv1d_same(t, x, p(std::string(kPrefix) + "conv2_w"),
                                    p(std::string(kPrefix) + "conv2_b")));
    x = nn::add_bias_rows(t, nn::matmul(t, x, p(std::string(kPrefix) + "out_w")),
                          p(std::string(kPrefix) + "out_b"));
    if (granularity == Granularity::kUtterance)
      x = nn::broadcast_row(t, nn::mean_over_rows(t, x), target_frames);
    return x;
  }

 private:
  ModelConfig cfg_;
};

// Gradient-reversed CTC head over extracted noise: a linear input
// projection, a small Transformer encoder, and a linear-softmax producing a
// character-level output distribution. Minimizing the total loss therefore
// pushes the extractor to remove text information.
class AdversarialCtcHead {
 public:
  explicit AdversarialCtcHead(const ModelConfig& cfg)
      : cfg_(cfg),
        stack_("ctc_head/", cfg.ctc_layers,
               {cfg.d_model, cfg.ffn, cfg.n_heads, cfg.dropout}) {}

  static constexpr const char* kPrefix = "ctc_head/";

  void register_params(ParamStore& store, std::uint64_t seed) const {
    const int D = cfg_.d_model, M = cfg_.mel_bins;
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "in_w");
      store.add(std::string(kPrefix) + "in_w", nn::xavier_uniform({M, D}, M, D, rng));
      store.add(std::string(kPrefix) + "in_b", Tensor::zeros({D}));
    }
    stack_.register_params(store, seed);
    {
      auto rng = nn::init_rng(seed, std::string(kPrefix) + "out_w");
      store.add(std::string(kPrefix) + "out_w",
                nn::xavier_uniform({D, kCharVocab}, D, kCharVocab, rng));
      store.add(std::string(kPrefix) + "out_b", Tensor::zeros({kCharVocab}));
    }
  }

  // Per-frame character log distributions, [T, kCharVocab]. Setting
  // reverse_gradient = false replaces the GRL with identity; training never
  // does this, but the gradient-flow audit compares both routes.
  V log_probs(Tape& t, Binder& p, V extracted_noise, double lambda_grl,
              bool training, core::Rng* drop_rng,
              bool reverse_gradient = true) const {
    V x = reverse_gradient ? nn::gradient_reversal(t, extracted_noise, lambda_grl)
                           : extracted_noise;
    x = nn::add_bias_rows(t, nn::matmul(t, x, p(std::string(kPrefix) + "in_w")),
                          p(std::string(kPrefix) + "in_b"));
    const int T = t.val(x).dim(0);
    x = nn::add(t, x, nn::constant(t, nn::positional_encoding(T, cfg_.d_model)));
    x = stack_.forward(t, p, x, {}, training, drop_rng);
    x = nn::add_bias_rows(t, nn::matmul(t, x, p(std::string(kPrefix) + "out_w")),
                          p(std::string(kPrefix) + "out_b"));
    return nn::log_softmax_rows(t, x);
  }

  // Adversarial CTC loss for one unpaired utterance. Callers must screen
  // unreachable transcripts with nn::ctc_min_frames and skip them.
  V loss(Tape& t, Binder& p, V extracted_noise, const std::vector<int>& transcript,
         double lambda_grl, bool training, core::Rng* drop_rng,
         bool reverse_gradient = true) const {
    V lp = log_probs(t, p, extracted_noise, lambda_grl, training, drop_rng,
                     reverse_gradient);
    return nn::ctc_loss(t, lp, transcript, kCtcBlank);
  }

 private:
  ModelConfig cfg_;
  nn::TransformerStack stack_;
};

}  // namespace cleartts::model
