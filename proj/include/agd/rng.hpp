#pragma once

#include <cstdint>
#include <stdexcept>

#include "agd/vec.hpp"

// Counter-based pseudo-random streams. A stream is a pure function of
// (key, counter), so any substream can be reconstructed from its key alone:
// runs with the same seed share bit-identical prefixes across horizons, and
// workers can draw from disjoint substreams without coordination.

namespace agd::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// Derives the key of a child stream. Double mixing keeps derived keys
// decorrelated from the parent's own output sequence.
inline std::uint64_t derive(std::uint64_t key, std::uint64_t salt) {
  return mix64(mix64(key + kGolden * (salt + 1)) ^ 0x6a09e667f3bcc909ull);
}

class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    counter_ += kGolden;
    return mix64(key_ + counter_);
  }

  // uniform on [0, 1), 53-bit resolution
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform on (0, 1]
  double uniform01_open_zero() { return 1.0 - uniform01(); }

  bool fair_coin() { return (next_u64() & 1ull) != 0; }

  // uniform integer in [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
    // rejection to remove modulo bias
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // standard normal via Box-Muller; the pair partner is cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_open_zero();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Vec normal_vec(std::size_t d, double scale = 1.0) {
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = scale * normal();
    return v;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace agd::rng
