#pragma once

// Seeded, platform-independent samplers. std::*_distribution is
// implementation-defined, so the normal and Poisson variates are generated
// explicitly: identical seeds give bit-identical streams everywhere.

#include <cmath>
#include <cstdint>
#include <random>

namespace ampr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed2701a9e3c74bULL))) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Box-Muller pair, second variate cached; consumption is exactly two
  // uniforms per pair.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925287 * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
  }

  // Knuth product method, chunked so exp(-mu) never underflows.
  long long poisson(double mu) {
    long long total = 0;
    while (mu > 400.0) {
      total += poisson_product(400.0);
      mu -= 400.0;
    }
    return total + poisson_product(mu);
  }

 private:
  long long poisson_product(double mu) {
    const double limit = std::exp(-mu);
    long long k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ampr
