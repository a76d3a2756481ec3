#pragma once

#include <cstdint>

namespace duostream {

// Deterministic random generator (xoshiro256** seeded through splitmix64).
// All randomness in the project flows through this class so that runs are
// reproducible across platforms and standard libraries; std::*_distribution
// is never used.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull);

  uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();

  // Unbiased integer in [0, n), n >= 1.
  uint64_t below(uint64_t n);

  // Independent substream derived from this generator's seed and a stream id.
  // fork() does not advance this generator's state.
  Rng fork(uint64_t stream) const;

 private:
  uint64_t state_[4];
  uint64_t seed_;
};

// Stable 64-bit mixing of two values, used to derive stream ids from
// (root seed, index) pairs.
uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace duostream
