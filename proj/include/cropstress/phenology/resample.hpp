#pragma once

#include <vector>

namespace cropstress::phenology {

inline constexpr int kDefaultGddSteps = 48;

struct GddSample {
  double gdd = 0.0;
  double value = 0.0;
  bool valid = true;
};

// n_steps evenly spaced cumulative-GDD values from 0 to harvest_gdd, both
// endpoints included.
std::vector<double> make_gdd_grid(double harvest_gdd, int n_steps = kDefaultGddSteps);

// Piecewise-linear interpolation along the GDD axis after dropping invalid
// samples; grid points outside the observed range take the nearest endpoint
// value. Samples must be non-decreasing in GDD; exact duplicates keep the
// earliest. Throws Error(data) with fewer than 2 valid samples.
std::vector<double> resample_to_gdd_grid(const std::vector<GddSample>& samples,
                                         const std::vector<double>& grid);

}  // namespace cropstress::phenology
