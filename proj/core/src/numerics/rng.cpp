#include "bevworld/numerics/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bevworld::num {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, uint64_t tag) { return mix64(seed ^ mix64(tag)); }

uint64_t derive_seed(uint64_t seed, const char* tag) {
  // FNV-1a over the tag string.
  uint64_t h = 1469598103934665603ull;
  for (const char* p = tag; *p; ++p) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(*p));
    h *= 1099511628211ull;
  }
  return derive_seed(seed, h);
}

uint64_t Rng::next_u64() {
  // xorshift-star style walk over the splitmix state.
  s_ = mix64(s_);
  return s_;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::randint(int64_t n) {
  if (n <= 0) throw std::invalid_argument("randint: n must be positive");
  // Rejection-free modulo is fine here: n is always tiny vs 2^64.
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::vector<int64_t> Rng::permutation(int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    int64_t j = randint(i + 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  auto idx = permutation(n);
  idx.resize(static_cast<size_t>(k));
  return idx;
}

}  // namespace bevworld::num
