#pragma once

// Seeded random source with portable distributions. The standard
// <random> distributions are implementation-defined, which would break
// byte-identical replays across toolchains; only the engine is taken
// from the standard library.

#include <cmath>
#include <cstdint>
#include <random>

namespace corrsched {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  void reseed(std::uint64_t seed) {
    engine_.seed(seed);
    has_spare_ = false;
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent child seed (splitmix64 of the next draw).
  std::uint64_t fork_seed() {
    std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace corrsched
