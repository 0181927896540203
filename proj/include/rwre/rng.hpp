#pragma once

#include <cstdint>
#include <limits>

#include "rwre/core.hpp"

namespace rwre {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output is a pure function of (key, i).
/// Substreams are derived by hashing a parent key with an index, so a batch of
/// trajectories can be simulated in any order and still reproduce exactly.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
      : key_(mix64(key ^ 0x6a09e667f3bcc909ULL)), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Child stream `index`; independent of how many draws the parent made.
  CounterRng split(std::uint64_t index) const {
    CounterRng child;
    child.key_ = mix64(key_ ^ mix64(index + 0x3c6ef372fe94f82bULL));
    child.counter_ = 0;
    return child;
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Stream for a lattice site: depends only on (seed, site).
inline CounterRng site_stream(std::uint64_t seed, const Site& s) {
  std::uint64_t h = mix64(seed ^ 0xa54ff53a5f1d36f1ULL);
  for (auto c : s) h = mix64(h ^ static_cast<std::uint64_t>(c));
  return CounterRng(h);
}

}  // namespace rwre
