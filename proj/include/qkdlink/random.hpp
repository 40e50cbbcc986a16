// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qkdlink {

/// splitmix64; used only for seeding and deriving child streams.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

/// Deterministic random stream (xoshiro256**) with the handful of
/// distributions the simulation needs. The standard-library distributions
/// are implementation-defined, so everything here is spelled out to keep
/// seeded runs bit-identical across toolchains.
class RandomStream {
 public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; safe to pass to log().
  double next_open01() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return next_double() < p;
  }

  /// Poisson sample, Knuth's product-of-uniforms method. Intended for the
  /// small means this simulation uses (mu well below ~50).
  int poisson(double mu) {
    if (mu <= 0.0) return 0;
    return poisson_expneg(std::exp(-mu));
  }

  /// Same as poisson() but with e^-mu precomputed by the caller; this is the
  /// per-slot hot path of the pulse source.
  int poisson_expneg(double exp_neg_mu) {
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= next_double();
    } while (p > exp_neg_mu);
    return k - 1;
  }

  /// Standard normal, Box-Muller (fixed two-uniform consumption per call).
  double gaussian() {
    const double u1 = next_open01();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Exponential with the given mean.
  double exponential(double mean) { return -mean * std::log(next_open01()); }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

/// FNV-1a tag for naming independent sub-streams of a master seed.
constexpr uint64_t stream_tag(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : name) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Child seed for the (tag, index) sub-stream of a master seed. Distinct
/// tags/indices give statistically independent streams; the mapping is fixed
/// so that every run with the same master seed replays identically.
inline uint64_t derive_seed(uint64_t master, uint64_t tag, uint64_t index = 0) {
  SplitMix64 a(master ^ (0x9e3779b97f4a7c15ull * (tag | 1)));
  uint64_t x = a.next();
  SplitMix64 b(x + 0xbf58476d1ce4e5b9ull * (index + 1));
  return b.next();
}

}  // namespace qkdlink
