#pragma once

#include <cstdint>
#include <vector>

namespace cropstress::core {

// Deterministic generator with platform-stable output. splitmix64 core,
// uniform doubles from the top 53 bits, normals via Box-Muller. Seeded runs
// must reproduce byte-identical artifacts across machines, which rules out
// std::normal_distribution and friends (their streams are implementation
// defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal deviate.
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Stable sub-seed for a named parallel task: mixes the base seed with a
  // stream tag and index so concurrent workers never share a sequence.
  static std::uint64_t derive(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cropstress::core
