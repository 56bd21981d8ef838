#pragma once

#include <cmath>
#include <cstdint>

namespace spinmem {

// Small deterministic generator (xorshift-multiply core with splitmix64
// seeding). Used instead of <random> distributions so that streams are
// reproducible by construction, independent of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { state_ = splitmix64(seed + 0x9E3779B97F4A7C15ull); }

  // Derives an independent stream for (seed, index), e.g. one per ensemble
  // member or Monte Carlo trajectory.
  static Rng for_index(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(seed) ^ splitmix64(index * 0xBF58476D1CE4E5B9ull + 1));
  }

  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal (Box-Muller, one value per call; the partner value is
  // cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586;
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

  // Normal with given sigma, rejected until |x| <= bound.
  double truncated_normal(double sigma, double bound) {
    if (sigma <= 0.0) return 0.0;
    for (;;) {
      const double x = sigma * normal();
      if (std::abs(x) <= bound) return x;
    }
  }

  // Exponential waiting time for the given rate; +inf when the rate is 0.
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    double u = uniform();
    while (u <= 1e-300) u = uniform();
    return -std::log(u) / rate;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace spinmem
