#include "cropstress/core/rng.hpp"

#include <cmath>
#include <numbers>

#include "cropstress/core/error.hpp"

namespace cropstress::core {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on two fresh uniforms; u1 is nudged away from zero so the log
  // stays finite.
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
  require(n > 0, ErrorKind::config, "Rng::below requires n > 0");
  // Rejection sampling to keep the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit && limit != 0);
  return x % n;
}

std::uint64_t Rng::derive(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  // One splitmix64 scramble over a mixed word; cheap and collision-safe for
  // the handful of streams we use.
  std::uint64_t z = base ^ (0x9e3779b97f4a7c15ULL * (stream + 1)) ^ (0xd1b54a32d192ed03ULL * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace cropstress::core
