// Copyright 2026 The antismooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace antismooth {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based random stream. A stream is identified by a 64-bit key;
/// the i-th draw is a pure function of (key, i), so streams can be split by
/// label or index without shared state and reproduce bit-for-bit on every
/// platform (no std:: distributions are involved).
class Rng {
 public:
  explicit constexpr Rng(std::uint64_t key) noexcept : key_(key) {}

  /// Stream keyed by (master seed, component label).
  static constexpr Rng keyed(std::uint64_t seed, std::string_view label) noexcept {
    return Rng(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a64(label))));
  }

  constexpr Rng split(std::string_view label) const noexcept {
    return keyed(key_, label);
  }
  constexpr Rng split(std::uint64_t index) const noexcept {
    return Rng(detail::splitmix64(key_ ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL)));
  }

  constexpr std::uint64_t key() const noexcept { return key_; }

  constexpr std::uint64_t next_u64() noexcept {
    return detail::splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    return n == 0 ? 0 : next_u64() % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() noexcept {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace antismooth
