#pragma once

#include <vector>

#include "cropstress/core/date.hpp"
#include "cropstress/phenology/gdd.hpp"

namespace cropstress::phenology {

struct CccObservation {
  core::Date date;
  double value = 0.0;  // field-median CCC
};

struct StageDates {
  core::Date transplant;
  core::Date peak;
  core::Date harvest;
};

struct StageEstimate {
  core::Date transplant_date;
  core::Date peak_date;
  core::Date harvest_date;
  double transplant_gdd = 0.0;
  double peak_gdd = 0.0;
  double harvest_gdd = 0.0;
};

// Centered moving average, edges truncated to the available neighbors.
std::vector<double> moving_average(const std::vector<double>& values, int window);

// Peak = argmax of the smoothed curve (earliest on ties); transplant = the
// last observation before the smoothed curve first exceeds min + theta_low *
// amplitude; harvest = the first post-peak observation below min +
// theta_high * amplitude. Throws Error(data) for constant curves, a missing
// rise, or a missing post-peak decline.
StageDates detect_stage_dates(const std::vector<CccObservation>& series,
                              double theta_low = 0.2, double theta_high = 0.5,
                              int window = 3);

// Attaches cumulative-GDD values; enforces transplant < peak < harvest in
// both dates and GDD.
StageEstimate make_stage_estimate(const StageDates& dates, const GddCurve& curve);

StageEstimate detect_stages(const std::vector<CccObservation>& series, const GddCurve& curve,
                            double theta_low = 0.2, double theta_high = 0.5, int window = 3);

}  // namespace cropstress::phenology
