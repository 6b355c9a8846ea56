#pragma once

#include <cstdint>

namespace dialoflow::nn {

// Counter-based splittable RNG (splitmix64). The stream is a pure function
// of (seed, counter), so identical seeds give identical streams on every
// platform and substreams can be derived without consuming the parent.
struct RngState {
  uint64_t seed = 0;
  uint64_t counter = 0;

  explicit RngState(uint64_t s = 0) : seed(s) {}

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() {
    ++counter;
    return mix(seed + counter * 0x9E3779B97F4A7C15ULL);
  }

  // Independent substream; does not advance this stream.
  RngState split(uint64_t stream) const {
    return RngState(mix(seed ^ mix((stream + 1) * 0xD1B54A32D192ED03ULL)));
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double next_gaussian();

  // Uniform integer in [lo, hi] inclusive. Requires lo <= hi.
  int64_t next_range(int64_t lo, int64_t hi);

  // True with probability p.
  bool next_bernoulli(double p) { return next_uniform() < p; }
};

}  // namespace dialoflow::nn
