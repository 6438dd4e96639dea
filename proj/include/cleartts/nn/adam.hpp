/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <map>
#include <string>

#include "cleartts/nn/params.hpp"

namespace cleartts::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double peak_lr = 1e-3;
  int warmup_steps = 400;
  double clip_norm = 1.0;  // global-norm clip; <= 0 disables
};

// Adam with linear warmup into an inverse-square-root decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  double lr_at(long step) const {
    const double s = static_cast<double>(step + 1);
    const double w = static_cast<double>(cfg_.warmup_steps);
    return cfg_.peak_lr * std::min(s / w, std::sqrt(w / s));
  }

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // One update over the given gradient map; parameters absent from the map
  // (frozen or untouched by the loss) stay bit-identical.
  void apply(ParamStore& store, const std::map<std::string, Tensor>& grads) {
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, g] : grads)
        for (double x : g.v) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }

    const double lr = lr_at(step_);
    const double t = static_cast<double>(step_ + 1);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);

    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double lr_over_bc1 = lr / bc1;
    const double inv_bc2 = 1.0 / bc2;
    for (const auto& [name, g] : grads) {
      Tensor& theta = store.at(name);
      if (theta.v.size() != g.v.size())
        throw Error("adam: gradient shape mismatch for " + name);
      Tensor& m = moment(m_, name, theta);
      Tensor& v = moment(v_, name, theta);
      double* __restrict tp = theta.v.data();
      double* __restrict mp = m.v.data();
      double* __restrict vp = v.v.data();
      const double* __restrict gp = g.v.data();
      const std::size_t n = theta.v.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = gp[i] * scale;
        mp[i] = b1 * mp[i] + (1.0 - b1) * gi;
        vp[i] = b2 * vp[i] + (1.0 - b2) * gi * gi;
        tp[i] -= lr_over_bc1 * mp[i] / (std::sqrt(vp[i] * inv_bc2) + cfg_.eps);
      }
    }
    ++step_;
  }

  // Serialization access for train-state checkpoints.
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  void set_step(long s) { step_ = s; }

 private:
  static Tensor& moment(std::map<std::string, Tensor>& bank,
                        const std::string& name, const Tensor& like) {
    auto it = bank.find(name);
    if (it == bank.end()) it = bank.emplace(name, Tensor::zeros(like.shape)).first;
    return it->second;
  }

  AdamConfig cfg_;
  std::map<std::string, Tensor> m_, v_;
  long step_ = 0;
};

}  // namespace cleartts::nn
