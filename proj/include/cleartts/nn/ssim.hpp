/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>

#include "cleartts/nn/ops.hpp"

namespace cleartts::nn {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double c1 = 1e-4;  // (0.01 * L)^2 with L = 1 after normalization
  double c2 = 9e-4;  // (0.03 * L)^2
};

namespace detail {

inline Tensor gaussian_kernel2d(int window, double sigma) {
  Tensor k({1, 1, window, window});
  const double half = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) {
      const double dy = i - half, dx = j - half;
      const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k.at(0, 0, i, j) = w;
      sum += w;
    }
  for (auto& x : k.v) x /= sum;
  return k;
}

}  // namespace detail

// 1 - mean local SSIM over a Gaussian window, computed on inputs affinely
// normalized to [0, 1] by the corpus log floor/ceiling. Result lies in
// [0, 2]; it is 0 exactly when the normalized inputs are identical, and it
// is symmetric in its arguments. Edge windows use replicate padding so any
// frame count >= 1 works.
inline V mssim_loss(Tape& t, V pred, V target, double log_floor,
                    double log_ceil, const SsimConfig& cfg = {}) {
  const Tensor& pv = t.val(pred);
  const Tensor& tv = t.val(target);
  if (pv.rank() != 2 || !pv.same_shape(tv))
    throw InvalidInputError("mssim_loss: expects equal [T, M] inputs, got " +
                            pv.shape_str() + " vs " + tv.shape_str());
  const int T = pv.dim(0), M = pv.dim(1);
  const double inv_range = 1.0 / (log_ceil - log_floor);

  auto normalize = [&](V x) {
    return clamp01(t, scale(t, add_const(t, x, -log_floor), inv_range));
  };
  V x = reshape(t, normalize(pred), {1, T, M});
  V y = reshape(t, normalize(target), {1, T, M});

  V kernel = constant(t, detail::gaussian_kernel2d(cfg.window, cfg.sigma));
  const int p = cfg.window / 2;
  auto blur = [&](V img) {
    return conv2d(t, pad_replicate2d(t, img, p), kernel, V{}, 0);
  };

  V mu_x = blur(x);
  V mu_y = blur(y);
  V ex2 = blur(mul(t, x, x));
  V ey2 = blur(mul(t, y, y));
  V exy = blur(mul(t, x, y));

  V mu_x2 = mul(t, mu_x, mu_x);
  V mu_y2 = mul(t, mu_y, mu_y);
  V mu_xy = mul(t, mu_x, mu_y);
  V var_x = sub(t, ex2, mu_x2);
  V var_y = sub(t, ey2, mu_y2);
  V cov = sub(t, exy, mu_xy);

  V num = mul(t, add_const(t, scale(t, mu_xy, 2.0), cfg.c1),
              add_const(t, scale(t, cov, 2.0), cfg.c2));
  V den = mul(t, add_const(t, add(t, mu_x2, mu_y2), cfg.c1),
              add_const(t, add(t, var_x, var_y), cfg.c2));
  V ssim_map = div(t, num, den);
  return add_const(t, scale(t, mean_all(t, ssim_map), -1.0), 1.0);
}

// Value-only convenience on plain tensors.
inline double mssim_loss_value(const Tensor& pred, const Tensor& target,
                               double log_floor, double log_ceil,
                               const SsimConfig& cfg = {}) {
  Tape t;
  V p = t.leaf(pred, false);
  V q = t.leaf(target, false);
  return t.val(mssim_loss(t, p, q, log_floor, log_ceil, cfg)).v[0];
}

}  // namespace cleartts::nn
