/*
 * Copyright (c) cleartts contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace cleartts {

// Error taxonomy. The CLI maps these to distinct exit codes:
// ConfigError -> 2, DataError / InvalidInputError -> 3, anything else -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad argument values at an operation boundary (empty waveform, shape
// mismatch, zero-power signal, ...).
struct InvalidInputError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration (schema violations, unsatisfiable
// corpus splits, frontend/manifest mismatch).
struct ConfigError : Error {
  using Error::Error;
};

// Broken external data: missing files, malformed manifests or WAV headers,
// alignment mismatches, unreadable checkpoints.
struct DataError : Error {
  using Error::Error;
};

// FNV-1a over raw bytes; used for parameter hashing and cheap content checks.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Shortest round-trip decimal for a double. Used everywhere a double is
// logged or serialized as text so reruns produce byte-identical files.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace cleartts
