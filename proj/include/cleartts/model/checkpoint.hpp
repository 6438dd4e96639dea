/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "cleartts/common.hpp"
#include "cleartts/nn/adam.hpp"
#include "cleartts/nn/params.hpp"

namespace cleartts::model {

// Versioned binary container holding named double arrays (parameters,
// buffers, optimizer moments), the step counter, and a JSON metadata blob.
// Little-endian, documented in the README for cross-language readers.
//
//   magic "CTTSCKP1" | u32 version | u64 json_len | json bytes
//   | i64 step | u32 n_entries
//   | per entry: u16 name_len, name, u8 kind, u8 trainable,
//                u8 ndim, i32 dims[ndim], f64 data[numel]
//
// kind: 0 = value, 1 = adam first moment, 2 = adam second moment.
struct Checkpoint {
  nlohmann::json config;
  long step = 0;
  nn::ParamStore params;
  std::map<std::string, core::Tensor> adam_m;
  std::map<std::string, core::Tensor> adam_v;
};

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file " + path);
  return v;
}

inline void write_entry(std::ofstream& out, const std::string& name,
                        std::uint8_t kind, std::uint8_t trainable,
                        const core::Tensor& t) {
  write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint8_t>(out, kind);
  write_pod<std::uint8_t>(out, trainable);
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
  for (int d : t.shape) write_pod<std::int32_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const nn::ParamStore& params,
                            nn::AdamOptimizer* opt, long step,
                            const nlohmann::json& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open for write: " + path);
  out.write("CTTSCKP1", 8);
  detail::write_pod<std::uint32_t>(out, 1);
  const std::string cfg = config.dump();
  detail::write_pod<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_pod<std::int64_t>(out, step);

  std::uint32_t n = static_cast<std::uint32_t>(params.entries().size());
  if (opt)
    n += static_cast<std::uint32_t>(opt->first_moments().size() +
                                    opt->second_moments().size());
  detail::write_pod<std::uint32_t>(out, n);
  for (const auto& [name, e] : params.entries())
    detail::write_entry(out, name, 0, e.trainable ? 1 : 0, e.value);
  if (opt) {
    for (const auto& [name, m] : opt->first_moments())
      detail::write_entry(out, name, 1, 1, m);
    for (const auto& [name, v] : opt->second_moments())
      detail::write_entry(out, name, 2, 1, v);
  }
  if (!out) throw DataError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "CTTSCKP1", 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, path);
  if (version != 1)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto json_len = detail::read_pod<std::uint64_t>(in, path);
  std::string cfg(json_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(json_len));
  if (!in) throw DataError("checkpoint: truncated config in " + path);

  Checkpoint ckpt;
  try {
    ckpt.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: invalid config json: " + std::string(e.what()));
  }
  ckpt.step = static_cast<long>(detail::read_pod<std::int64_t>(in, path));
  const auto n = detail::read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = detail::read_pod<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto kind = detail::read_pod<std::uint8_t>(in, path);
    const auto trainable = detail::read_pod<std::uint8_t>(in, path);
    const auto ndim = detail::read_pod<std::uint8_t>(in, path);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = detail::read_pod<std::int32_t>(in, path);
    core::Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated tensor " + name + " in " + path);
    switch (kind) {
      case 0: ckpt.params.add(name, std::move(t), trainable != 0); break;
      case 1: ckpt.adam_m.emplace(name, std::move(t)); break;
      case 2: ckpt.adam_v.emplace(name, std::move(t)); break;
      default: throw DataError("checkpoint: unknown entry kind in " + path);
    }
  }
  return ckpt;
}

// Copies checkpoint values whose names start with `prefix` into an already
// registered store (warm starts). Shapes must match the registered model.
inline int apply_checkpoint_params(nn::ParamStore& dst, const nn::ParamStore& src,
                                   const std::string& prefix = "") {
  int copied = 0;
  for (const auto& [name, e] : src.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!dst.has(name))
      throw DataError("checkpoint: parameter " + name + " not in this model");
    core::Tensor& target = dst.at(name);
    if (target.shape != e.value.shape)
      throw DataError("checkpoint: shape mismatch for " + name + ": model " +
                      target.shape_str() + " vs checkpoint " + e.value.shape_str());
    target = e.value;
    ++copied;
  }
  if (copied == 0)
    throw DataError("checkpoint: no parameters matched prefix '" + prefix + "'");
  return copied;
}

}  // namespace cleartts::model
