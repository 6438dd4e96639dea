/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <string>
#include <vector>

#include "cleartts/nn/ops.hpp"
#include "cleartts/nn/params.hpp"

namespace cleartts::nn {

// Sinusoidal absolute positional encoding, [T, D].
inline Tensor positional_encoding(int T, int D) {
  Tensor pe({T, D});
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < D / 2; ++i) {
      const double angle = t * std::exp(-std::log(10000.0) * (2.0 * i) / D);
      pe.at(t, 2 * i) = std::sin(angle);
      pe.at(t, 2 * i + 1) = std::cos(angle);
    }
  return pe;
}

struct TransformerConfig {
  int d_model = 256;
  int ffn = 1024;
  int n_heads = 2;
  double dropout = 0.1;
};

// Captures attention probability nodes for inspection in tests.
struct AttnProbe {
  std::vector<V> head_probs;
};

// Post-LN transformer block: masked multi-head self-attention and a
// position-wise feed-forward, each wrapped in residual + layer norm.
class TransformerBlock {
 public:
  TransformerBlock(std::string prefix, TransformerConfig cfg)
      : prefix_(std::move(prefix)), cfg_(cfg) {
    if (cfg_.d_model % cfg_.n_heads != 0)
      throw ConfigError("transformer: d_model must divide by n_heads");
  }

  void register_params(ParamStore& store, std::uint64_t seed) const {
    const int D = cfg_.d_model, F = cfg_.ffn;
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      auto rng = init_rng(seed, prefix_ + w);
      store.add(prefix_ + w, xavier_uniform({D, D}, D, D, rng));
      store.add(prefix_ + w + std::string("_b"), Tensor::zeros({D}));
    }
    {
      auto rng = init_rng(seed, prefix_ + "ffn_w1");
      store.add(prefix_ + "ffn_w1", xavier_uniform({D, F}, D, F, rng));
      store.add(prefix_ + "ffn_b1", Tensor::zeros({F}));
    }
    {
      auto rng = init_rng(seed, prefix_ + "ffn_w2");
      store.add(prefix_ + "ffn_w2", xavier_uniform({F, D}, F, D, rng));
      store.add(prefix_ + "ffn_b2", Tensor::zeros({D}));
    }
    store.add(prefix_ + "ln1_g", Tensor::full({D}, 1.0));
    store.add(prefix_ + "ln1_b", Tensor::zeros({D}));
    store.add(prefix_ + "ln2_g", Tensor::full({D}, 1.0));
    store.add(prefix_ + "ln2_b", Tensor::zeros({D}));
  }

  V forward(Tape& t, Binder& p, V x, const std::vector<std::uint8_t>& mask,
            bool training, core::Rng* drop_rng, AttnProbe* probe = nullptr) const {
    const int T = t.val(x).dim(0);
    const int D = cfg_.d_model;
    const int dh = D / cfg_.n_heads;
    if (!mask.empty() && static_cast<int>(mask.size()) != T)
      throw InvalidInputError("transformer: mask length mismatch");

    V q = add_bias_rows(t, matmul(t, x, p(prefix_ + "wq")), p(prefix_ + "wq_b"));
    V k = add_bias_rows(t, matmul(t, x, p(prefix_ + "wk")), p(prefix_ + "wk_b"));
    V v = add_bias_rows(t, matmul(t, x, p(prefix_ + "wv")), p(prefix_ + "wv_b"));

    V ctx{};
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      V qh = slice_cols(t, q, h * dh, (h + 1) * dh);
      V kh = slice_cols(t, k, h * dh, (h + 1) * dh);
      V vh = slice_cols(t, v, h * dh, (h + 1) * dh);
      V scores = scale(t, matmul(t, qh, kh, false, true), inv_sqrt_dh);
      V probs = softmax_rows(t, scores, mask);
      if (probe) probe->head_probs.push_back(probs);
      V ctx_h = matmul(t, probs, vh);
      ctx = h == 0 ? ctx_h : concat_cols(t, ctx, ctx_h);
    }
    V attn = add_bias_rows(t, matmul(t, ctx, p(prefix_ + "wo")), p(prefix_ + "wo_b"));
    if (training && drop_rng) attn = dropout(t, attn, cfg_.dropout, *drop_rng);
    V h1 = layer_norm(t, add(t, x, attn), p(prefix_ + "ln1_g"), p(prefix_ + "ln1_b"));

    V f = relu(t, add_bias_rows(t, matmul(t, h1, p(prefix_ + "ffn_w1")),
                                p(prefix_ + "ffn_b1")));
    f = add_bias_rows(t, matmul(t, f, p(prefix_ + "ffn_w2")), p(prefix_ + "ffn_b2"));
    if (training && drop_rng) f = dropout(t, f, cfg_.dropout, *drop_rng);
    return layer_norm(t, add(t, h1, f), p(prefix_ + "ln2_g"), p(prefix_ + "ln2_b"));
  }

  const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  TransformerConfig cfg_;
};

// A stack of blocks sharing a prefix: "<prefix>blockN/".
class TransformerStack {
 public:
  TransformerStack(const std::string& prefix, int n_layers, TransformerConfig cfg) {
    for (int i = 0; i < n_layers; ++i)
      blocks_.emplace_back(prefix + "block" + std::to_string(i) + "/", cfg);
  }

  void register_params(ParamStore& store, std::uint64_t seed) const {
    for (const auto& b : blocks_) b.register_params(store, seed);
  }

  V forward(Tape& t, Binder& p, V x, const std::vector<std::uint8_t>& mask,
            bool training, core::Rng* drop_rng) const {
    for (const auto& b : blocks_) x = b.forward(t, p, x, mask, training, drop_rng);
    return x;
  }

 private:
  std::vector<TransformerBlock> blocks_;
};

}  // namespace cleartts::nn
