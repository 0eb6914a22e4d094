#include "cropstress/phenology/gdd.hpp"

#include <algorithm>

#include "cropstress/core/error.hpp"

namespace cropstress::phenology {

using core::ErrorKind;
using core::require;

double daily_gdd(double t_max, double t_min, double t_base) {
  require(t_min <= t_max, ErrorKind::data, "daily_gdd: t_min exceeds t_max");
  return std::max(0.0, (t_max + t_min) / 2.0 - t_base);
}

double GddCurve::at(const core::Date& d) const {
  require(covers(d), ErrorKind::data,
          "date " + d.to_iso() + " outside GDD curve [" + start.to_iso() + ", " +
              end().to_iso() + "]");
  return cumulative[static_cast<std::size_t>(core::days_between(start, d))];
}

GddCurve cumulative_gdd(const WeatherSeries& weather, const core::Date& transplant,
                        const core::Date& harvest, double t_base) {
  validate_weather(weather);
  require(transplant < harvest, ErrorKind::data, "transplant must precede harvest");
  require(weather.front().date <= transplant && harvest <= weather.back().date,
          ErrorKind::data,
          "weather does not cover the season [" + transplant.to_iso() + ", " +
              harvest.to_iso() + "]");

  GddCurve curve;
  curve.start = transplant;
  curve.base_temperature = t_base;
  const std::size_t offset =
      static_cast<std::size_t>(core::days_between(weather.front().date, transplant));
  const std::size_t n_days =
      static_cast<std::size_t>(core::days_between(transplant, harvest)) + 1;

  curve.cumulative.reserve(n_days);
  curve.cumulative.push_back(0.0);
  for (std::size_t k = 1; k < n_days; ++k) {
    const WeatherDay& day = weather[offset + k];
    curve.cumulative.push_back(curve.cumulative.back() +
                               daily_gdd(day.t_max, day.t_min, t_base));
  }
  return curve;
}

}  // namespace cropstress::phenology
