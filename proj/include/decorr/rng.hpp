#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "decorr/matrix.hpp"

namespace decorr {

/// SplitMix64 generator. Fixed as the repo-wide RNG so that every stochastic
/// result is reproducible bit-for-bit across platforms; all distributions
/// below are derived from the raw stream by hand for the same reason.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "rng: empty range");
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i)
      std::swap(p[i], p[static_cast<int>(below(static_cast<std::uint64_t>(i) + 1))]);
    return p;
  }

  /// k distinct indices from [0, n), returned sorted ascending.
  std::vector<int> sample_without_replacement(int n, int k) {
    require(k >= 0 && k <= n, "rng: sample size exceeds population");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Glorot-uniform matrix: entries uniform in +-sqrt(6 / (fan_in + fan_out)).
inline DenseMatrix glorot_uniform(int rows, int cols, Rng& rng) {
  DenseMatrix w(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  return w;
}

}  // namespace decorr
