#include "dialoflow/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace dialoflow::nn {

double RngState::next_gaussian() {
  // Box-Muller; u1 nudged away from zero so log() stays finite.
  double u1 = next_uniform();
  double u2 = next_uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  constexpr double two_pi = 6.283185307179586477;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

int64_t RngState::next_range(int64_t lo, int64_t hi) {
  if (lo > hi) throw std::invalid_argument("RngState::next_range: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next_u64() % span);
}

}  // namespace dialoflow::nn
