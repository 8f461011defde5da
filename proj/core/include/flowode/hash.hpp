// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace flowode {

/// FNV-1a 64-bit content hash. Used for run-record drift detection and
/// output checksums; not collision-resistant against adversaries.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

/// Hash of a file's raw bytes. Throws std::runtime_error if unreadable.
std::uint64_t fnv1a64_file(const std::string& path);

std::string hash_hex(std::uint64_t h);

}  // namespace flowode
