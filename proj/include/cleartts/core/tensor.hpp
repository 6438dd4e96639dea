/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cleartts/common.hpp"

namespace cleartts::core {

// Allocator whose default construction leaves trivially constructible
// elements uninitialized; lets GEMM destinations skip the zero-fill pass.
template <typename T>
struct NoInitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using DVec = std::vector<double, NoInitAlloc<double>>;

// Dense row-major double tensor. Rank is dynamic but in practice <= 4:
// sequences are [T, D], feature maps [C, H, W], conv kernels [Co, Ci, Kh, Kw].
struct Tensor {
  std::vector<int> shape;
  DVec v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  // Allocated but not zeroed; every element must be written before use.
  static Tensor uninit(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.v.resize(static_cast<std::size_t>(numel_of(t.shape)));
    return t;
  }

  static Tensor full(std::vector<int> s, double value) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = value;
    return t;
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& at(int i) { return v[static_cast<std::size_t>(i)]; }
  double at(int i) const { return v[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) {
    return v[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double at(int i, int j) const {
    return v[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double& at(int i, int j, int k) {
    return v[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double at(int i, int j, int k) const {
    return v[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return v[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) *
                 shape[3] +
             l];
  }
  double at(int i, int j, int k, int l) const {
    return v[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) *
                 shape[3] +
             l];
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

  std::uint64_t content_hash() const {
    std::uint64_t h = fnv1a(shape.data(), shape.size() * sizeof(int));
    return fnv1a(v.data(), v.size() * sizeof(double), h);
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* where) {
  if (!a.same_shape(b))
    throw InvalidInputError(std::string(where) + ": shape mismatch " +
                            a.shape_str() + " vs " + b.shape_str());
}

}  // namespace cleartts::core
