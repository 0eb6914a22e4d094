#pragma once

#include <vector>

#include "cropstress/core/date.hpp"
#include "cropstress/phenology/weather.hpp"

namespace cropstress::phenology {

inline constexpr double kDefaultBaseTemperature = 10.0;  // °C

// max(0, (t_max + t_min)/2 - t_base). Throws Error(data) when t_min > t_max.
double daily_gdd(double t_max, double t_min, double t_base);

// Cumulative thermal time, one point per day: 0 on the start date, each later
// day adding its own daily_gdd.
struct GddCurve {
  core::Date start;
  std::vector<double> cumulative;  // cumulative[k] = GDD accrued through start+k
  double base_temperature = kDefaultBaseTemperature;

  core::Date end() const { return start.plus_days(static_cast<int>(cumulative.size()) - 1); }
  bool covers(const core::Date& d) const { return start <= d && d <= end(); }
  // Exact-day lookup; throws Error(data) outside [start, end].
  double at(const core::Date& d) const;
};

// Weather must cover [transplant, harvest] without gaps.
GddCurve cumulative_gdd(const WeatherSeries& weather, const core::Date& transplant,
                        const core::Date& harvest, double t_base = kDefaultBaseTemperature);

}  // namespace cropstress::phenology
