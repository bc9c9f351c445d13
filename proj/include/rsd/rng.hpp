#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace rsd {

/// Counter-based Philox4x32-10 generator.
///
/// A stream is identified by (key, stream id); every draw advances a 64-bit
/// block counter, so any trial can be replayed from (master seed, trial index)
/// without touching other trials' streams. Output is identical on every
/// platform; the Gaussian transform below uses libm and is reproducible
/// within one build.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t key, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n), unbiased (rejection on the top range).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller on two uniforms; caches the sine branch.
  double normal();

  /// Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::uint64_t stream_;
  std::array<std::uint32_t, 4> out_{};
  int used_ = 4;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

/// Derives an independent 64-bit seed for (master, a, b) via SplitMix64 mixing.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// First `count` entries of a uniformly random permutation of [0, n).
std::vector<int> sample_without_replacement(Philox& rng, int n, int count);

}  // namespace rsd
