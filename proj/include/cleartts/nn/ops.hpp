/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "cleartts/core/rng.hpp"
#include "cleartts/nn/tape.hpp"

namespace cleartts::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

inline MapConst as_mat(const Tensor& t, int rows, int cols) {
  return MapConst(t.v.data(), rows, cols);
}
inline MapMat as_mat(Tensor& t, int rows, int cols) {
  return MapMat(t.v.data(), rows, cols);
}

inline V constant(Tape& t, Tensor value) { return t.leaf(std::move(value), false); }

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline V add(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "add");
  Tensor y = t.val(a);
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += t.val(b).v[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out](Tape& tt) {
      tt.add_grad(a, tt.grad(out));
      tt.add_grad(b, tt.grad(out));
    });
  return out;
}

inline V sub(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "sub");
  Tensor y = t.val(a);
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] -= t.val(b).v[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out](Tape& tt) {
      tt.add_grad(a, tt.grad(out));
      if (tt.needs_grad(b)) {
        Tensor gb = tt.grad(out);
        for (auto& x : gb.v) x = -x;
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

inline V mul(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "mul");
  Tensor y = t.val(a);
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] *= t.val(b).v[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out](Tape& tt) {
      const Tensor& g = tt.grad(out);
      if (tt.needs_grad(a)) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] *= tt.val(b).v[i];
        tt.add_grad(a, std::move(ga));
      }
      if (tt.needs_grad(b)) {
        Tensor gb = g;
        for (std::size_t i = 0; i < gb.v.size(); ++i) gb.v[i] *= tt.val(a).v[i];
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

inline V div(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "div");
  Tensor y = t.val(a);
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] /= t.val(b).v[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out](Tape& tt) {
      const Tensor& g = tt.grad(out);
      if (tt.needs_grad(a)) {
        Tensor ga = g;
        for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] /= tt.val(b).v[i];
        tt.add_grad(a, std::move(ga));
      }
      if (tt.needs_grad(b)) {
        Tensor gb = g;
        for (std::size_t i = 0; i < gb.v.size(); ++i) {
          const double bv = tt.val(b).v[i];
          gb.v[i] *= -tt.val(a).v[i] / (bv * bv);
        }
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

inline V scale(Tape& t, V a, double c) {
  Tensor y = t.val(a);
  for (auto& x : y.v) x *= c;
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, c, out](Tape& tt) {
      Tensor g = tt.grad(out);
      for (auto& x : g.v) x *= c;
      tt.add_grad(a, std::move(g));
    });
  return out;
}

inline V add_const(Tape& t, V a, double c) {
  Tensor y = t.val(a);
  for (auto& x : y.v) x += c;
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, out](Tape& tt) { tt.add_grad(a, tt.grad(out)); });
  return out;
}

inline V relu(Tape& t, V a) {
  Tensor y = t.val(a);
  for (auto& x : y.v) x = std::max(x, 0.0);
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, out](Tape& tt) {
      Tensor g = tt.grad(out);
      const Tensor& x = tt.val(a);
      for (std::size_t i = 0; i < g.v.size(); ++i)
        if (x.v[i] <= 0.0) g.v[i] = 0.0;
      tt.add_grad(a, std::move(g));
    });
  return out;
}

inline V clamp01(Tape& t, V a) {
  Tensor y = t.val(a);
  for (auto& x : y.v) x = std::clamp(x, 0.0, 1.0);
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, out](Tape& tt) {
      Tensor g = tt.grad(out);
      const Tensor& x = tt.val(a);
      for (std::size_t i = 0; i < g.v.size(); ++i)
        if (x.v[i] < 0.0 || x.v[i] > 1.0) g.v[i] = 0.0;
      tt.add_grad(a, std::move(g));
    });
  return out;
}

// Same data, new shape.
inline V reshape(Tape& t, V a, std::vector<int> shape) {
  const Tensor& av = t.val(a);
  if (Tensor::numel_of(shape) != av.numel())
    throw InvalidInputError("reshape: element count mismatch");
  Tensor y;
  y.shape = shape;
  y.v = av.v;
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, out](Tape& tt) {
      Tensor g = tt.grad(out);
      g.shape = tt.val(a).shape;
      tt.add_grad(a, std::move(g));
    });
  return out;
}

// Forward identity; backward multiplies the upstream gradient by -lambda.
inline V gradient_reversal(Tape& t, V a, double lambda) {
  if (lambda < 0.0) throw InvalidInputError("gradient_reversal: lambda must be >= 0");
  Tensor y = t.val(a);
  const bool rg = t.needs_grad(a);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, lambda, out](Tape& tt) {
      Tensor g = tt.grad(out);
      for (auto& x : g.v) x *= -lambda;
      tt.add_grad(a, std::move(g));
    });
  return out;
}

// ---------------------------------------------------------------------------
// Sequence / matrix ops
// ---------------------------------------------------------------------------

// y[t, d] = x[t, d] + b[d]
inline V add_bias_rows(Tape& t, V x, V b) {
  const Tensor& xv = t.val(x);
  const Tensor& bv = t.val(b);
  if (xv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1))
    throw InvalidInputError("add_bias_rows: shapes " + xv.shape_str() + ", " +
                            bv.shape_str());
  Tensor y = xv;
  const int T = xv.dim(0), D = xv.dim(1);
  for (int i = 0; i < T; ++i)
    for (int d = 0; d < D; ++d) y.at(i, d) += bv.at(d);
  const bool rg = t.needs_grad(x) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, b, out, T, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      tt.add_grad(x, g);
      if (tt.needs_grad(b)) {
        Tensor gb = Tensor::zeros({D});
        for (int i = 0; i < T; ++i)
          for (int d = 0; d < D; ++d) gb.at(d) += g.at(i, d);
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

// Matrix product with optional operand transposes: y = op(a) * op(b).
inline V matmul(Tape& t, V a, V b, bool ta = false, bool tb = false) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (av.rank() != 2 || bv.rank() != 2)
    throw InvalidInputError("matmul: expects rank-2 tensors");
  const int m = ta ? av.dim(1) : av.dim(0);
  const int ka = ta ? av.dim(0) : av.dim(1);
  const int kb = tb ? bv.dim(1) : bv.dim(0);
  const int n = tb ? bv.dim(0) : bv.dim(1);
  if (ka != kb)
    throw InvalidInputError("matmul: inner dims " + av.shape_str() + " x " +
                            bv.shape_str());

  Tensor y = Tensor::uninit({m, n});
  {
    auto A = as_mat(av, av.dim(0), av.dim(1));
    auto B = as_mat(bv, bv.dim(0), bv.dim(1));
    auto Y = as_mat(y, m, n);
    if (!ta && !tb)
      Y.noalias() = A * B;
    else if (ta && !tb)
      Y.noalias() = A.transpose() * B;
    else if (!ta && tb)
      Y.noalias() = A * B.transpose();
    else
      Y.noalias() = A.transpose() * B.transpose();
  }
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, ta, tb, m, n, ka, out](Tape& tt) {
      const Tensor& gv = tt.grad(out);
      auto G = as_mat(gv, m, n);
      const Tensor& av2 = tt.val(a);
      const Tensor& bv2 = tt.val(b);
      auto A = as_mat(av2, av2.dim(0), av2.dim(1));
      auto B = as_mat(bv2, bv2.dim(0), bv2.dim(1));
      if (tt.needs_grad(a)) {
        Tensor ga = Tensor::uninit(av2.shape);
        auto GA = as_mat(ga, av2.dim(0), av2.dim(1));
        // d op(A) = G * op(B)^T, then undo the transpose on A.
        RowMat dOpA(m, ka);
        if (!tb)
          dOpA.noalias() = G * B.transpose();
        else
          dOpA.noalias() = G * B;
        if (ta)
          GA.noalias() = dOpA.transpose();
        else
          GA.noalias() = dOpA;
        tt.add_grad(a, std::move(ga));
      }
      if (tt.needs_grad(b)) {
        Tensor gb = Tensor::uninit(bv2.shape);
        auto GB = as_mat(gb, bv2.dim(0), bv2.dim(1));
        RowMat dOpB(ka, n);
        if (!ta)
          dOpB.noalias() = A.transpose() * G;
        else
          dOpB.noalias() = A * G;
        if (tb)
          GB.noalias() = dOpB.transpose();
        else
          GB.noalias() = dOpB;
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

// y[i] = x[idx[i]]; rows gathered with repetition. Shared rows accumulate
// gradient, which is exactly the length-regulator contract.
inline V gather_rows(Tape& t, V x, std::vector<int> idx) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) throw InvalidInputError("gather_rows: expects [T, D]");
  const int D = xv.dim(1);
  const int T_out = static_cast<int>(idx.size());
  for (int i : idx)
    if (i < 0 || i >= xv.dim(0))
      throw InvalidInputError("gather_rows: index out of range");
  Tensor y = Tensor::uninit({T_out, D});
  for (int i = 0; i < T_out; ++i)
    for (int d = 0; d < D; ++d) y.at(i, d) = xv.at(idx[static_cast<std::size_t>(i)], d);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, idx = std::move(idx), out, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros(tt.val(x).shape);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int d = 0; d < D; ++d)
          gx.at(idx[i], d) += g.at(static_cast<int>(i), d);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V concat_cols(Tape& t, V a, V b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
    throw InvalidInputError("concat_cols: row mismatch");
  const int T = av.dim(0), Da = av.dim(1), Db = bv.dim(1);
  Tensor y = Tensor::uninit({T, Da + Db});
  for (int i = 0; i < T; ++i) {
    for (int d = 0; d < Da; ++d) y.at(i, d) = av.at(i, d);
    for (int d = 0; d < Db; ++d) y.at(i, Da + d) = bv.at(i, d);
  }
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out, T, Da, Db](Tape& tt) {
      const Tensor& g = tt.grad(out);
      if (tt.needs_grad(a)) {
        Tensor ga = Tensor::zeros({T, Da});
        for (int i = 0; i < T; ++i)
          for (int d = 0; d < Da; ++d) ga.at(i, d) = g.at(i, d);
        tt.add_grad(a, std::move(ga));
      }
      if (tt.needs_grad(b)) {
        Tensor gb = Tensor::zeros({T, Db});
        for (int i = 0; i < T; ++i)
          for (int d = 0; d < Db; ++d) gb.at(i, d) = g.at(i, Da + d);
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

inline V slice_cols(Tape& t, V x, int c0, int c1) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2 || c0 < 0 || c1 > xv.dim(1) || c0 >= c1)
    throw InvalidInputError("slice_cols: bad range");
  const int T = xv.dim(0), D = c1 - c0;
  Tensor y = Tensor::uninit({T, D});
  for (int i = 0; i < T; ++i)
    for (int d = 0; d < D; ++d) y.at(i, d) = xv.at(i, c0 + d);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, c0, T, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros(tt.val(x).shape);
      for (int i = 0; i < T; ++i)
        for (int d = 0; d < D; ++d) gx.at(i, c0 + d) = g.at(i, d);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

// Softmax over each row; entries where key_mask is 0 get probability 0.
// An empty mask means every key is valid.
inline V softmax_rows(Tape& t, V x, std::vector<std::uint8_t> key_mask = {}) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) throw InvalidInputError("softmax_rows: expects [T, C]");
  const int T = xv.dim(0), C = xv.dim(1);
  if (!key_mask.empty() && static_cast<int>(key_mask.size()) != C)
    throw InvalidInputError("softmax_rows: mask size mismatch");
  Tensor y = Tensor::uninit({T, C});
  for (int i = 0; i < T; ++i) {
    double mx = -1e300;
    for (int c = 0; c < C; ++c)
      if (key_mask.empty() || key_mask[static_cast<std::size_t>(c)])
        mx = std::max(mx, xv.at(i, c));
    double denom = 0.0;
    for (int c = 0; c < C; ++c) {
      const bool ok = key_mask.empty() || key_mask[static_cast<std::size_t>(c)];
      const double e = ok ? std::exp(xv.at(i, c) - mx) : 0.0;
      y.at(i, c) = e;
      denom += e;
    }
    for (int c = 0; c < C; ++c) y.at(i, c) /= denom;
  }
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, T, C](Tape& tt) {
      const Tensor& g = tt.grad(out);
      const Tensor& p = tt.val(out);
      Tensor gx = Tensor::uninit({T, C});
      for (int i = 0; i < T; ++i) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += g.at(i, c) * p.at(i, c);
        for (int c = 0; c < C; ++c)
          gx.at(i, c) = p.at(i, c) * (g.at(i, c) - dot);
      }
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V log_softmax_rows(Tape& t, V x) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) throw InvalidInputError("log_softmax_rows: expects [T, C]");
  const int T = xv.dim(0), C = xv.dim(1);
  Tensor y = Tensor::uninit({T, C});
  for (int i = 0; i < T; ++i) {
    double mx = -1e300;
    for (int c = 0; c < C; ++c) mx = std::max(mx, xv.at(i, c));
    double denom = 0.0;
    for (int c = 0; c < C; ++c) denom += std::exp(xv.at(i, c) - mx);
    const double lse = mx + std::log(denom);
    for (int c = 0; c < C; ++c) y.at(i, c) = xv.at(i, c) - lse;
  }
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, T, C](Tape& tt) {
      const Tensor& g = tt.grad(out);
      const Tensor& y2 = tt.val(out);
      Tensor gx = Tensor::uninit({T, C});
      for (int i = 0; i < T; ++i) {
        double gsum = 0.0;
        for (int c = 0; c < C; ++c) gsum += g.at(i, c);
        for (int c = 0; c < C; ++c)
          gx.at(i, c) = g.at(i, c) - std::exp(y2.at(i, c)) * gsum;
      }
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V layer_norm(Tape& t, V x, V gamma, V beta, double eps = 1e-5) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) throw InvalidInputError("layer_norm: expects [T, D]");
  const int T = xv.dim(0), D = xv.dim(1);
  auto xhat = std::make_shared<Tensor>(Tensor::uninit({T, D}));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(T));
  Tensor y = Tensor::uninit({T, D});
  const Tensor& gv = t.val(gamma);
  const Tensor& bv = t.val(beta);
  for (int i = 0; i < T; ++i) {
    double mean = 0.0;
    for (int d = 0; d < D; ++d) mean += xv.at(i, d);
    mean /= D;
    double var = 0.0;
    for (int d = 0; d < D; ++d) {
      const double c = xv.at(i, d) - mean;
      var += c * c;
    }
    var /= D;
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(i)] = is;
    for (int d = 0; d < D; ++d) {
      const double xh = (xv.at(i, d) - mean) * is;
      xhat->at(i, d) = xh;
      y.at(i, d) = gv.at(d) * xh + bv.at(d);
    }
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, gamma, beta, out, xhat, invstd, T, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      const Tensor& gv2 = tt.val(gamma);
      if (tt.needs_grad(gamma) || tt.needs_grad(beta)) {
        Tensor gg = Tensor::zeros({D}), gb = Tensor::zeros({D});
        for (int i = 0; i < T; ++i)
          for (int d = 0; d < D; ++d) {
            gg.at(d) += g.at(i, d) * xhat->at(i, d);
            gb.at(d) += g.at(i, d);
          }
        tt.add_grad(gamma, std::move(gg));
        tt.add_grad(beta, std::move(gb));
      }
      if (tt.needs_grad(x)) {
        Tensor gx = Tensor::uninit({T, D});
        for (int i = 0; i < T; ++i) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int d = 0; d < D; ++d) {
            const double dxh = g.at(i, d) * gv2.at(d);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat->at(i, d);
          }
          const double is = (*invstd)[static_cast<std::size_t>(i)];
          for (int d = 0; d < D; ++d) {
            const double dxh = g.at(i, d) * gv2.at(d);
            gx.at(i, d) = is * (dxh - sum_dxhat / D -
                                xhat->at(i, d) * sum_dxhat_xhat / D);
          }
        }
        tt.add_grad(x, std::move(gx));
      }
    });
  return out;
}

// Inverted dropout; identity when p == 0.
inline V dropout(Tape& t, V x, double p, core::Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw InvalidInputError("dropout: p must be < 1");
  const Tensor& xv = t.val(x);
  auto mask = std::make_shared<std::vector<double>>(xv.v.size());
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y = xv;
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : keep_scale;
    (*mask)[i] = m;
    y.v[i] *= m;
  }
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, mask](Tape& tt) {
      Tensor g = tt.grad(out);
      for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] *= (*mask)[i];
      tt.add_grad(x, g);
    });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline V mean_all(Tape& t, V x) {
  const Tensor& xv = t.val(x);
  const double n = static_cast<double>(xv.numel());
  Tensor y({1});
  for (double v : xv.v) y.v[0] += v;
  y.v[0] /= n;
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, n](Tape& tt) {
      const double g = tt.grad(out).v[0] / n;
      Tensor gx = Tensor::full(tt.val(x).shape, g);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V mean_over_rows(Tape& t, V x) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2) throw InvalidInputError("mean_over_rows: expects [T, D]");
  const int T = xv.dim(0), D = xv.dim(1);
  Tensor y({1, D});
  for (int i = 0; i < T; ++i)
    for (int d = 0; d < D; ++d) y.at(0, d) += xv.at(i, d);
  for (int d = 0; d < D; ++d) y.at(0, d) /= T;
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, T, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros({T, D});
      for (int i = 0; i < T; ++i)
        for (int d = 0; d < D; ++d) gx.at(i, d) = g.at(0, d) / T;
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V broadcast_row(Tape& t, V x, int rows) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 2 || xv.dim(0) != 1)
    throw InvalidInputError("broadcast_row: expects [1, D]");
  const int D = xv.dim(1);
  Tensor y = Tensor::uninit({rows, D});
  for (int i = 0; i < rows; ++i)
    for (int d = 0; d < D; ++d) y.at(i, d) = xv.at(0, d);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, rows, D](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros({1, D});
      for (int i = 0; i < rows; ++i)
        for (int d = 0; d < D; ++d) gx.at(0, d) += g.at(i, d);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V mae_loss(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "mae_loss");
  const std::size_t n = t.val(a).v.size();
  if (n == 0) throw InvalidInputError("mae_loss: empty input");
  Tensor y({1});
  for (std::size_t i = 0; i < n; ++i)
    y.v[0] += std::fabs(t.val(a).v[i] - t.val(b).v[i]);
  y.v[0] /= static_cast<double>(n);
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out, n](Tape& tt) {
      const double g = tt.grad(out).v[0] / static_cast<double>(n);
      Tensor ga = Tensor::uninit(tt.val(a).shape);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = tt.val(a).v[i] - tt.val(b).v[i];
        ga.v[i] = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
      }
      if (tt.needs_grad(b)) {
        Tensor gb = ga;
        for (auto& x : gb.v) x = -x;
        tt.add_grad(b, std::move(gb));
      }
      tt.add_grad(a, std::move(ga));
    });
  return out;
}

inline V mse_loss(Tape& t, V a, V b) {
  core::require_same_shape(t.val(a), t.val(b), "mse_loss");
  const std::size_t n = t.val(a).v.size();
  if (n == 0) throw InvalidInputError("mse_loss: empty input");
  Tensor y({1});
  for (std::size_t i = 0; i < n; ++i) {
    const double d = t.val(a).v[i] - t.val(b).v[i];
    y.v[0] += d * d;
  }
  y.v[0] /= static_cast<double>(n);
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out, n](Tape& tt) {
      const double g = tt.grad(out).v[0] * 2.0 / static_cast<double>(n);
      Tensor ga = Tensor::uninit(tt.val(a).shape);
      for (std::size_t i = 0; i < n; ++i)
        ga.v[i] = g * (tt.val(a).v[i] - tt.val(b).v[i]);
      if (tt.needs_grad(b)) {
        Tensor gb = ga;
        for (auto& x : gb.v) x = -x;
        tt.add_grad(b, std::move(gb));
      }
      tt.add_grad(a, std::move(ga));
    });
  return out;
}

// y = sum_i w_i * x_i over scalar nodes.
inline V weighted_sum(Tape& t, const std::vector<V>& xs,
                      const std::vector<double>& w) {
  if (xs.size() != w.size() || xs.empty())
    throw InvalidInputError("weighted_sum: size mismatch");
  Tensor y({1});
  bool rg = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (t.val(xs[i]).numel() != 1)
      throw InvalidInputError("weighted_sum: scalar inputs only");
    y.v[0] += w[i] * t.val(xs[i]).v[0];
    rg = rg || t.needs_grad(xs[i]);
  }
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [xs, w, out](Tape& tt) {
      const double g = tt.grad(out).v[0];
      for (std::size_t i = 0; i < xs.size(); ++i) {
        Tensor gi({1});
        gi.v[0] = g * w[i];
        tt.add_grad(xs[i], std::move(gi));
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// 1D convolution over time: x [T, Cin] -> y [T, Cout], odd kernel, zero pad.
// ---------------------------------------------------------------------------

inline V conv1d_same(Tape& t, V x, V w, V b) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  if (xv.rank() != 2 || wv.rank() != 3)
    throw InvalidInputError("conv1d_same: expects x [T, Cin], w [Cout, Cin, k]");
  const int T = xv.dim(0), Cin = xv.dim(1);
  const int Cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != Cin || k % 2 == 0)
    throw InvalidInputError("conv1d_same: kernel mismatch");
  const int pad = k / 2;
  const int K = Cin * k;

  auto col = std::make_shared<Tensor>(Tensor::uninit({K, T}));
  for (int c = 0; c < Cin; ++c)
    for (int j = 0; j < k; ++j) {
      const int row = c * k + j;
      for (int i = 0; i < T; ++i) {
        const int src = i + j - pad;
        col->at(row, i) = (src >= 0 && src < T) ? xv.at(src, c) : 0.0;
      }
    }

  Tensor y = Tensor::uninit({T, Cout});
  {
    auto W = as_mat(wv, Cout, K);
    auto C = as_mat(*col, K, T);
    auto Y = as_mat(y, T, Cout);
    Y.noalias() = C.transpose() * W.transpose();
  }
  if (b.valid()) {
    const Tensor& bv = t.val(b);
    for (int i = 0; i < T; ++i)
      for (int c = 0; c < Cout; ++c) y.at(i, c) += bv.at(c);
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(w) || (b.valid() && t.needs_grad(b));
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, w, b, out, col, T, Cin, Cout, k, K, pad](Tape& tt) {
      const Tensor& g = tt.grad(out);
      auto G = as_mat(g, T, Cout);
      if (b.valid() && tt.needs_grad(b)) {
        Tensor gb = Tensor::zeros({Cout});
        for (int i = 0; i < T; ++i)
          for (int c = 0; c < Cout; ++c) gb.at(c) += g.at(i, c);
        tt.add_grad(b, std::move(gb));
      }
      if (tt.needs_grad(w)) {
        Tensor gw = Tensor::uninit({Cout, Cin, k});
        auto GW = as_mat(gw, Cout, K);
        auto C = as_mat(*col, K, T);
        GW.noalias() = G.transpose() * C.transpose();
        tt.add_grad(w, std::move(gw));
      }
      if (tt.needs_grad(x)) {
        const Tensor& wv2 = tt.val(w);
        auto W = as_mat(wv2, Cout, K);
        RowMat dcol(K, T);
        dcol.noalias() = W.transpose() * G.transpose();
        Tensor gx = Tensor::zeros({T, Cin});
        for (int c = 0; c < Cin; ++c)
          for (int j = 0; j < k; ++j) {
            const int row = c * k + j;
            for (int i = 0; i < T; ++i) {
              const int src = i + j - pad;
              if (src >= 0 && src < T) gx.at(src, c) += dcol(row, i);
            }
          }
        tt.add_grad(x, std::move(gx));
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// 2D ops for the spectrogram UNet: tensors are [C, H, W].
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col(const Tensor& x, int kh, int kw, int pad, Tensor& col,
                   int H_out, int W_out) {
  const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  for (int c = 0; c < Cin; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const int row = (c * kh + i) * kw + j;
        double* dst = &col.at(row, 0);
        for (int y = 0; y < H_out; ++y) {
          const int sy = y + i - pad;
          for (int xo = 0; xo < W_out; ++xo) {
            const int sx = xo + j - pad;
            dst[y * W_out + xo] = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                      ? x.at(c, sy, sx)
                                      : 0.0;
          }
        }
      }
}

inline void col2im_add(const RowMat& dcol, int Cin, int H, int W, int kh,
                       int kw, int pad, int H_out, int W_out, Tensor& gx) {
  for (int c = 0; c < Cin; ++c)
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j) {
        const int row = (c * kh + i) * kw + j;
        for (int y = 0; y < H_out; ++y) {
          const int sy = y + i - pad;
          if (sy < 0 || sy >= H) continue;
          for (int xo = 0; xo < W_out; ++xo) {
            const int sx = xo + j - pad;
            if (sx < 0 || sx >= W) continue;
            gx.at(c, sy, sx) += dcol(row, y * W_out + xo);
          }
        }
      }
}

}  // namespace detail

// Stride-1 2D convolution with symmetric zero padding.
inline V conv2d(Tape& t, V x, V w, V b, int pad) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  if (xv.rank() != 3 || wv.rank() != 4)
    throw InvalidInputError("conv2d: expects x [C, H, W], w [Co, Ci, kh, kw]");
  const int Cin = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != Cin) throw InvalidInputError("conv2d: channel mismatch");
  const int H_out = H + 2 * pad - kh + 1;
  const int W_out = W + 2 * pad - kw + 1;
  if (H_out < 1 || W_out < 1) throw InvalidInputError("conv2d: output too small");
  const int K = Cin * kh * kw;
  const int N = H_out * W_out;

  auto col = std::make_shared<Tensor>(Tensor::uninit({K, N}));
  detail::im2col(xv, kh, kw, pad, *col, H_out, W_out);

  Tensor y = Tensor::uninit({Cout, H_out, W_out});
  {
    auto Wm = as_mat(wv, Cout, K);
    auto C = as_mat(*col, K, N);
    MapMat Y(y.v.data(), Cout, N);
    Y.noalias() = Wm * C;
  }
  if (b.valid()) {
    const Tensor& bv = t.val(b);
    for (int c = 0; c < Cout; ++c) {
      const double add = bv.at(c);
      for (int i = 0; i < N; ++i) y.v[static_cast<std::size_t>(c) * N + i] += add;
    }
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(w) || (b.valid() && t.needs_grad(b));
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, w, b, out, col, Cin, H, W, Cout, kh, kw, pad, H_out,
                         W_out, K, N](Tape& tt) {
      const Tensor& g = tt.grad(out);
      MapConst G(g.v.data(), Cout, N);
      if (b.valid() && tt.needs_grad(b)) {
        Tensor gb = Tensor::zeros({Cout});
        for (int c = 0; c < Cout; ++c) {
          double acc = 0.0;
          for (int i = 0; i < N; ++i) acc += g.v[static_cast<std::size_t>(c) * N + i];
          gb.at(c) = acc;
        }
        tt.add_grad(b, std::move(gb));
      }
      if (tt.needs_grad(w)) {
        Tensor gw = Tensor::uninit({Cout, Cin, kh, kw});
        auto GW = as_mat(gw, Cout, K);
        auto C = as_mat(*col, K, N);
        GW.noalias() = G * C.transpose();
        tt.add_grad(w, std::move(gw));
      }
      if (tt.needs_grad(x)) {
        const Tensor& wv2 = tt.val(w);
        auto Wm = as_mat(wv2, Cout, K);
        RowMat dcol(K, N);
        dcol.noalias() = Wm.transpose() * G;
        Tensor gx = Tensor::zeros({Cin, H, W});
        detail::col2im_add(dcol, Cin, H, W, kh, kw, pad, H_out, W_out, gx);
        tt.add_grad(x, std::move(gx));
      }
    });
  return out;
}

inline V maxpool2x2(Tape& t, V x) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("maxpool2x2: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (H % 2 != 0 || W % 2 != 0)
    throw InvalidInputError("maxpool2x2: H and W must be even, got " + xv.shape_str());
  const int Ho = H / 2, Wo = W / 2;
  Tensor y = Tensor::uninit({C, Ho, Wo});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(C) * Ho * Wo);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j) {
        int best_y = 2 * i, best_x = 2 * j;
        double best = xv.at(c, best_y, best_x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const double v = xv.at(c, 2 * i + dy, 2 * j + dx);
            if (v > best) {
              best = v;
              best_y = 2 * i + dy;
              best_x = 2 * j + dx;
            }
          }
        y.at(c, i, j) = best;
        (*arg)[(static_cast<std::size_t>(c) * Ho + i) * Wo + j] = best_y * W + best_x;
      }
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, arg, C, H, W, Ho, Wo](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros({C, H, W});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < Ho; ++i)
          for (int j = 0; j < Wo; ++j) {
            const int flat = (*arg)[(static_cast<std::size_t>(c) * Ho + i) * Wo + j];
            gx.at(c, flat / W, flat % W) += g.at(c, i, j);
          }
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V upsample_nearest2x(Tape& t, V x) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("upsample_nearest2x: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tensor y = Tensor::uninit({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < 2 * H; ++i)
      for (int j = 0; j < 2 * W; ++j) y.at(c, i, j) = xv.at(c, i / 2, j / 2);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, C, H, W](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros({C, H, W});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < 2 * H; ++i)
          for (int j = 0; j < 2 * W; ++j) gx.at(c, i / 2, j / 2) += g.at(c, i, j);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

inline V concat_channels(Tape& t, V a, V b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) ||
      av.dim(2) != bv.dim(2))
    throw InvalidInputError("concat_channels: spatial mismatch");
  const int Ca = av.dim(0), Cb = bv.dim(0), H = av.dim(1), W = av.dim(2);
  Tensor y = Tensor::uninit({Ca + Cb, H, W});
  std::copy(av.v.begin(), av.v.end(), y.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), y.v.begin() + av.numel());
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [a, b, out, Ca, Cb, H, W](Tape& tt) {
      const Tensor& g = tt.grad(out);
      if (tt.needs_grad(a)) {
        Tensor ga = Tensor::uninit({Ca, H, W});
        std::copy(g.v.begin(), g.v.begin() + ga.numel(), ga.v.begin());
        tt.add_grad(a, std::move(ga));
      }
      if (tt.needs_grad(b)) {
        Tensor gb = Tensor::uninit({Cb, H, W});
        std::copy(g.v.begin() + static_cast<std::size_t>(Ca) * H * W, g.v.end(),
                  gb.v.begin());
        tt.add_grad(b, std::move(gb));
      }
    });
  return out;
}

// Pads rows (the time axis) at the bottom up to new_h, filled with `value`.
inline V pad_rows2d(Tape& t, V x, int new_h, double value) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("pad_rows2d: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (new_h < H) throw InvalidInputError("pad_rows2d: new_h < H");
  if (new_h == H) return x;
  Tensor y = Tensor::full({C, new_h, W}, value);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) y.at(c, i, j) = xv.at(c, i, j);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, C, H, W](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::uninit({C, H, W});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) gx.at(c, i, j) = g.at(c, i, j);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

// Keeps the first new_h rows of the time axis.
inline V crop_rows2d(Tape& t, V x, int new_h) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("crop_rows2d: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  if (new_h > H) throw InvalidInputError("crop_rows2d: new_h > H");
  if (new_h == H) return x;
  Tensor y = Tensor::uninit({C, new_h, W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < new_h; ++i)
      for (int j = 0; j < W; ++j) y.at(c, i, j) = xv.at(c, i, j);
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, C, new_h, W](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros(tt.val(x).shape);
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < new_h; ++i)
          for (int j = 0; j < W; ++j) gx.at(c, i, j) = g.at(c, i, j);
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

// Edge-replicating pad on both spatial axes (used by the SSIM window).
inline V pad_replicate2d(Tape& t, V x, int p) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("pad_replicate2d: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tensor y = Tensor::uninit({C, H + 2 * p, W + 2 * p});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H + 2 * p; ++i) {
      const int si = std::clamp(i - p, 0, H - 1);
      for (int j = 0; j < W + 2 * p; ++j) {
        const int sj = std::clamp(j - p, 0, W - 1);
        y.at(c, i, j) = xv.at(c, si, sj);
      }
    }
  const bool rg = t.needs_grad(x);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, out, C, H, W, p](Tape& tt) {
      const Tensor& g = tt.grad(out);
      Tensor gx = Tensor::zeros({C, H, W});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H + 2 * p; ++i) {
          const int si = std::clamp(i - p, 0, H - 1);
          for (int j = 0; j < W + 2 * p; ++j) {
            const int sj = std::clamp(j - p, 0, W - 1);
            gx.at(c, si, sj) += g.at(c, i, j);
          }
        }
      tt.add_grad(x, std::move(gx));
    });
  return out;
}

// Per-channel batch normalization over the spatial axes of one [C, H, W]
// map. In training mode the per-call statistics are returned through
// `stats_out` (mean, var per channel) so the caller can maintain running
// buffers; in eval mode the provided running statistics are used.
inline V batchnorm2d(Tape& t, V x, V gamma, V beta, bool training,
                     const Tensor& running_mean, const Tensor& running_var,
                     Tensor* stats_mean_out, Tensor* stats_var_out,
                     double eps = 1e-5) {
  const Tensor& xv = t.val(x);
  if (xv.rank() != 3) throw InvalidInputError("batchnorm2d: expects [C, H, W]");
  const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  const int N = H * W;
  const Tensor& gv = t.val(gamma);
  const Tensor& bv = t.val(beta);

  Tensor mean({C}), var({C});
  if (training) {
    for (int c = 0; c < C; ++c) {
      double m = 0.0;
      for (int i = 0; i < N; ++i) m += xv.v[static_cast<std::size_t>(c) * N + i];
      m /= N;
      double vv = 0.0;
      for (int i = 0; i < N; ++i) {
        const double d = xv.v[static_cast<std::size_t>(c) * N + i] - m;
        vv += d * d;
      }
      mean.at(c) = m;
      var.at(c) = vv / N;
    }
    if (stats_mean_out) *stats_mean_out = mean;
    if (stats_var_out) *stats_var_out = var;
  } else {
    mean = running_mean;
    var = running_var;
  }

  auto xhat = std::make_shared<Tensor>(Tensor::uninit({C, H, W}));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  Tensor y = Tensor::uninit({C, H, W});
  for (int c = 0; c < C; ++c) {
    const double is = 1.0 / std::sqrt(var.at(c) + eps);
    (*invstd)[static_cast<std::size_t>(c)] = is;
    const double m = mean.at(c);
    for (int i = 0; i < N; ++i) {
      const double xh = (xv.v[static_cast<std::size_t>(c) * N + i] - m) * is;
      xhat->v[static_cast<std::size_t>(c) * N + i] = xh;
      y.v[static_cast<std::size_t>(c) * N + i] = gv.at(c) * xh + bv.at(c);
    }
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  V out = t.make(std::move(y), rg);
  if (rg)
    t.set_backward(out, [x, gamma, beta, out, xhat, invstd, training, C,
                         N](Tape& tt) {
      const Tensor& g = tt.grad(out);
      const Tensor& gv2 = tt.val(gamma);
      if (tt.needs_grad(gamma) || tt.needs_grad(beta)) {
        Tensor gg = Tensor::zeros({C}), gb = Tensor::zeros({C});
        for (int c = 0; c < C; ++c) {
          double sg = 0.0, sgx = 0.0;
          for (int i = 0; i < N; ++i) {
            const std::size_t k = static_cast<std::size_t>(c) * N + i;
            sg += g.v[k];
            sgx += g.v[k] * xhat->v[k];
          }
          gg.at(c) = sgx;
          gb.at(c) = sg;
        }
        tt.add_grad(gamma, std::move(gg));
        tt.add_grad(beta, std::move(gb));
      }
      if (tt.needs_grad(x)) {
        Tensor gx = Tensor::uninit(tt.val(x).shape);
        for (int c = 0; c < C; ++c) {
          const double is = (*invstd)[static_cast<std::size_t>(c)];
          const double gam = gv2.at(c);
          if (training) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (int i = 0; i < N; ++i) {
              const std::size_t k = static_cast<std::size_t>(c) * N + i;
              const double dxh = g.v[k] * gam;
              sum_d += dxh;
              sum_dx += dxh * xhat->v[k];
            }
            for (int i = 0; i < N; ++i) {
              const std::size_t k = static_cast<std::size_t>(c) * N + i;
              const double dxh = g.v[k] * gam;
              gx.v[k] = is * (dxh - sum_d / N - xhat->v[k] * sum_dx / N);
            }
          } else {
            for (int i = 0; i < N; ++i) {
              const std::size_t k = static_cast<std::size_t>(c) * N + i;
              gx.v[k] = g.v[k] * gam * is;
            }
          }
        }
        tt.add_grad(x, std::move(gx));
      }
    });
  return out;
}

}  // namespace cleartts::nn
