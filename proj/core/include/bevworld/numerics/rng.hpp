#pragma once

#include <cstdint>
#include <vector>

namespace bevworld::num {

/// splitmix64 step, used for seed derivation.
uint64_t mix64(uint64_t x);

/// Derive a child seed from (seed, tag). Stable across platforms.
uint64_t derive_seed(uint64_t seed, uint64_t tag);
uint64_t derive_seed(uint64_t seed, const char* tag);

/// Deterministic RNG with self-contained distributions. std::mt19937_64
/// supplies the bit stream but all distributions are implemented here, so
/// the values do not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(mix64(seed + 0x9e3779b97f4a7c15ull)) {}

  uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  int64_t randint(int64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev);

  /// Fisher-Yates shuffle of indices 0..n-1.
  std::vector<int64_t> permutation(int64_t n);

  /// Sample k distinct indices from 0..n-1 (k <= n), order randomized.
  std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

 private:
  uint64_t s_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bevworld::num
