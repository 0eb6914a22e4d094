#include "cropstress/phenology/resample.hpp"

#include <algorithm>

#include "cropstress/core/error.hpp"

namespace cropstress::phenology {

using core::ErrorKind;
using core::require;

std::vector<double> make_gdd_grid(double harvest_gdd, int n_steps) {
  require(harvest_gdd > 0.0, ErrorKind::data, "harvest GDD must be positive");
  require(n_steps >= 2, ErrorKind::config, "GDD grid needs at least 2 steps");
  std::vector<double> grid(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    grid[i] = harvest_gdd * static_cast<double>(i) / (n_steps - 1);
  }
  return grid;
}

std::vector<double> resample_to_gdd_grid(const std::vector<GddSample>& samples,
                                         const std::vector<double>& grid) {
  std::vector<GddSample> kept;
  kept.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.valid) continue;
    if (!kept.empty()) {
      require(kept.back().gdd <= s.gdd, ErrorKind::data,
              "GDD samples must be non-decreasing");
      if (kept.back().gdd == s.gdd) continue;  // same thermal time: keep the earlier
    }
    kept.push_back(s);
  }
  require(kept.size() >= 2, ErrorKind::data,
          "resampling needs at least 2 valid observations");

  std::vector<double> out;
  out.reserve(grid.size());
  for (double g : grid) {
    if (g <= kept.front().gdd) {
      out.push_back(kept.front().value);
      continue;
    }
    if (g >= kept.back().gdd) {
      out.push_back(kept.back().value);
      continue;
    }
    const auto hi = std::upper_bound(
        kept.begin(), kept.end(), g,
        [](double value, const GddSample& s) { return value < s.gdd; });
    const auto lo = hi - 1;
    const double t = (g - lo->gdd) / (hi->gdd - lo->gdd);
    out.push_back(lo->value + t * (hi->value - lo->value));
  }
  return out;
}

}  // namespace cropstress::phenology
