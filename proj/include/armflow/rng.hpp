#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace armflow {

// Counter-based deterministic RNG. Every draw is a pure function of
// (key, counter), so results never depend on call order or thread count.
class Rng {
 public:
  explicit Rng(uint64_t key = 0) : key_(key) {}

  // splitmix64 finalizer
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  uint64_t key() const { return key_; }

  Rng derive(std::string_view label) const { return Rng(mix(key_ ^ hash_str(label))); }
  Rng derive(uint64_t salt) const { return Rng(mix(key_ ^ mix(salt + 0x51ed2701ULL))); }

  uint64_t bits(uint64_t counter) const { return mix(key_ ^ mix(counter)); }

  // uniform in [0, 1)
  double uniform(uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // standard normal via Box-Muller; consumes two sub-draws of one counter
  double normal(uint64_t counter) const {
    const double u1 = static_cast<double>(bits(2 * counter) >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(bits(2 * counter + 1) >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  uint64_t integer(uint64_t counter, uint64_t n) const {
    // modulo bias is negligible for n << 2^64
    return n == 0 ? 0 : bits(counter) % n;
  }

 private:
  uint64_t key_;
};

// Sequential convenience wrapper around Rng for generation loops.
class RngStream {
 public:
  explicit RngStream(Rng rng) : rng_(rng) {}

  double uniform() { return rng_.uniform(ctr_++); }
  double uniform(double lo, double hi) { return rng_.uniform(ctr_++, lo, hi); }
  double normal() { return rng_.normal(ctr_++); }
  uint64_t integer(uint64_t n) { return rng_.integer(ctr_++, n); }

  // Beta(alpha, beta) via Johnk's algorithm (alpha, beta <= ~a few); fine at desk scale.
  double beta(double alpha, double b) {
    for (int i = 0; i < 256; ++i) {
      const double u = std::pow(uniform(), 1.0 / alpha);
      const double v = std::pow(uniform(), 1.0 / b);
      if (u + v > 1e-300 && u + v <= 1.0) return u / (u + v);
    }
    return 0.5;
  }

 private:
  Rng rng_;
  uint64_t ctr_ = 0;
};

}  // namespace armflow
