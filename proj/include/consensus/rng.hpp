#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace consensus {

// SplitMix64 finalizer; used to derive independent, platform-stable seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// seed' = splitmix64(seed ^ splitmix64(stream)).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// Seed streams inside one experiment. Agent k uses stream kAgentStreamBase + k.
inline constexpr std::uint64_t kInitStream = 0x696E6974ULL;  // "init"
inline constexpr std::uint64_t kAgentStreamBase = 0x1000ULL;

// mt19937_64 output is fixed by the standard; the real-valued conversions
// below are done by hand because <random> distributions are not portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller; one pair of uniforms per sample.
  double normal(double mean, double stddev) {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace consensus
