#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace cnsc {

/// Deterministic 64-bit generator (xoshiro256++ seeded via splitmix64).
/// Identical seeds produce identical draw sequences on every platform;
/// no std::distribution is used anywhere so streams are bit-reproducible.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform draw strictly inside (0, 1).
  double uniform01();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (two uniforms per draw, no cache).
  double normal();

  bool bernoulli(double p);

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent child stream; (seed, stream) -> child seed is a fixed map.
  SeededRng derive(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace cnsc
