/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <functional>
#include <map>
#include <string>

#include "cleartts/core/rng.hpp"
#include "cleartts/core/tensor.hpp"
#include "cleartts/nn/tape.hpp"

namespace cleartts::nn {

// Named parameter and buffer storage. Buffers (trainable = false) hold
// batch-norm running statistics. std::map keeps iteration deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor init, bool trainable = true) {
    auto [it, inserted] = entries_.emplace(name, Entry{std::move(init), trainable});
    if (!inserted) throw Error("ParamStore: duplicate parameter " + name);
    return it->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second.value;
  }

  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second.value;
  }

  bool trainable(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second.trainable;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries_mut() { return entries_; }

  // Content hash of every entry whose name starts with `prefix` (all
  // entries when empty). Used by the freeze-contract checks.
  std::uint64_t hash_of(const std::string& prefix = "") const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) != 0) continue;
      h = fnv1a(name.data(), name.size(), h);
      h = fnv1a(e.value.v.data(), e.value.v.size() * sizeof(double), h);
    }
    return h;
  }

 private:
  std::map<std::string, Entry> entries_;
};

// Initializers are seeded from (seed, parameter name), so results do not
// depend on registration order.
inline core::Rng init_rng(std::uint64_t seed, const std::string& name) {
  return core::Rng::derive(seed, {core::hash_str(name)});
}

inline Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out,
                             core::Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

inline Tensor normal_init(std::vector<int> shape, double stddev, core::Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = stddev * rng.normal();
  return t;
}

// Binds store parameters to tape leaves, one leaf per name per tape, and
// collects their gradients afterwards. `trainable_filter` decides which
// parameters participate in backprop for this graph (frozen modules bind as
// constants, so their backward work is skipped entirely).
class Binder {
 public:
  Binder(Tape& tape, ParamStore& store, bool training,
         std::function<bool(const std::string&)> trainable_filter = nullptr)
      : tape_(tape), store_(store), training_(training),
        filter_(std::move(trainable_filter)) {}

  V operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const bool trainable = training_ && store_.trainable(name) &&
                           (!filter_ || filter_(name));
    // Reference binding: parameters are read-only for the tape's lifetime
    // (the optimizer applies updates only after backward).
    V v = tape_.leaf_ref(&store_.at(name), trainable);
    bound_.emplace(name, v);
    return v;
  }

  // Gradients of every bound parameter that received one.
  std::map<std::string, Tensor> gradients() {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : bound_) {
      if (tape_.needs_grad(v) && tape_.has_grad(v)) out.emplace(name, tape_.grad(v));
    }
    return out;
  }

  // Same, but steals the buffers from the tape; valid once after backward.
  std::map<std::string, Tensor> take_gradients() {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : bound_) {
      if (tape_.needs_grad(v) && tape_.has_grad(v))
        out.emplace(name, std::move(tape_.grad(v)));
    }
    return out;
  }

  ParamStore& store() { return store_; }
  bool training() const { return training_; }

 private:
  Tape& tape_;
  ParamStore& store_;
  bool training_;
  std::function<bool(const std::string&)> filter_;
  std::map<std::string, V> bound_;
};

}  // namespace cleartts::nn
