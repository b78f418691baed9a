#pragma once

// Seedable, platform-stable random variates.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The standard <random> distributions are implementation
// defined, so every transform to a real-valued variate lives here instead.
// Sub-stream seeds are derived with SplitMix64 so results never depend on
// the order in which streams are consumed.

#include <cstdint>
#include <random>

namespace sqzcal {

// One SplitMix64 output step for `state`.
std::uint64_t splitmix64(std::uint64_t state);

// Seed for stream `stream` of a run seeded with `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t bits() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1).
  double uniform_open();
  // Standard normal (Marsaglia polar method).
  double normal();
  // Gamma(shape, scale = 1), Marsaglia-Tsang; shape > 0.
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sqzcal
