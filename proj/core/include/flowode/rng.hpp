// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace flowode {

/// Counter-based pseudorandom generator (Philox-4x32-10).
///
/// Every stream is addressed by a (seed, stream) pair, and the generator
/// walks a 64-bit block counter. Streams are statistically independent, so
/// per-trajectory / per-draw keying gives results that do not depend on how
/// work is split across threads.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream)
      : ctr0_(0), ctr1_(stream), have_cached_gaussian_(false) {
    const std::uint64_t k = splitmix(seed);
    key0_ = static_cast<std::uint32_t>(k);
    key1_ = static_cast<std::uint32_t>(k >> 32);
    pos_ = 4;
  }

  std::uint32_t next_u32() {
    if (pos_ >= 4) {
      block();
      pos_ = 0;
    }
    return out_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw via Box-Muller on explicit uniforms; the second
  /// member of each pair is cached.
  double next_gaussian() {
    if (have_cached_gaussian_) {
      have_cached_gaussian_ = false;
      return cached_gaussian_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_gaussian_ = r * std::sin(a);
    have_cached_gaussian_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void block() {
    std::uint32_t c0 = static_cast<std::uint32_t>(ctr0_);
    std::uint32_t c1 = static_cast<std::uint32_t>(ctr0_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(ctr1_);
    std::uint32_t c3 = static_cast<std::uint32_t>(ctr1_ >> 32);
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out_[0] = c0;
    out_[1] = c1;
    out_[2] = c2;
    out_[3] = c3;
    ++ctr0_;
  }

  std::uint64_t ctr0_, ctr1_;
  std::uint32_t key0_, key1_;
  std::uint32_t out_[4] = {0, 0, 0, 0};
  int pos_;
  bool have_cached_gaussian_;
  double cached_gaussian_ = 0.0;
};

}  // namespace flowode
