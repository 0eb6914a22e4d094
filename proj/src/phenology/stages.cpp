#include "cropstress/phenology/stages.hpp"

#include <algorithm>

#include "cropstress/core/error.hpp"

namespace cropstress::phenology {

using core::ErrorKind;
using core::require;

std::vector<double> moving_average(const std::vector<double>& values, int window) {
  require(window >= 1 && window % 2 == 1, ErrorKind::config,
          "moving average window must be odd and positive");
  const int n = static_cast<int>(values.size());
  const int half = window / 2;
  std::vector<double> out(values.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += values[k];
    out[i] = sum / (hi - lo + 1);
  }
  return out;
}

StageDates detect_stage_dates(const std::vector<CccObservation>& series, double theta_low,
                              double theta_high, int window) {
  require(series.size() >= 5, ErrorKind::data,
          "stage detection needs at least 5 observations");
  require(0.0 < theta_low && theta_low < theta_high && theta_high < 1.0, ErrorKind::config,
          "stage thresholds need 0 < theta_low < theta_high < 1");
  for (std::size_t i = 1; i < series.size(); ++i) {
    require(series[i - 1].date < series[i].date, ErrorKind::data,
            "CCC observations must be strictly increasing in date");
  }

  std::vector<double> raw(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) raw[i] = series[i].value;
  const std::vector<double> s = moving_average(raw, window);

  const auto [min_it, max_it] = std::minmax_element(s.begin(), s.end());
  const double amplitude = *max_it - *min_it;
  require(amplitude > 0.0, ErrorKind::data,
          "stage detection impossible on a constant CCC curve");

  const std::size_t peak =
      static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());

  const double rise_level = *min_it + theta_low * amplitude;
  std::size_t first_rise = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] > rise_level) {
      first_rise = i;
      break;
    }
  }
  require(first_rise != s.size(), ErrorKind::data, "CCC curve never rises");
  require(first_rise > 0, ErrorKind::data,
          "season start not covered: CCC already risen at the first observation");

  const double fall_level = *min_it + theta_high * amplitude;
  std::size_t harvest = s.size();
  for (std::size_t i = peak + 1; i < s.size(); ++i) {
    if (s[i] < fall_level) {
      harvest = i;
      break;
    }
  }
  require(harvest != s.size(), ErrorKind::data,
          "no post-peak decline: harvest undetectable");

  return {series[first_rise - 1].date, series[peak].date, series[harvest].date};
}

StageEstimate make_stage_estimate(const StageDates& dates, const GddCurve& curve) {
  require(dates.transplant < dates.peak && dates.peak < dates.harvest, ErrorKind::data,
          "stages must be ordered transplant < peak < harvest");
  StageEstimate est;
  est.transplant_date = dates.transplant;
  est.peak_date = dates.peak;
  est.harvest_date = dates.harvest;
  est.transplant_gdd = curve.at(dates.transplant);
  est.peak_gdd = curve.at(dates.peak);
  est.harvest_gdd = curve.at(dates.harvest);
  require(est.transplant_gdd < est.peak_gdd && est.peak_gdd < est.harvest_gdd,
          ErrorKind::data, "stage GDD values must be strictly increasing");
  return est;
}

StageEstimate detect_stages(const std::vector<CccObservation>& series, const GddCurve& curve,
                            double theta_low, double theta_high, int window) {
  return make_stage_estimate(detect_stage_dates(series, theta_low, theta_high, window), curve);
}

}  // namespace cropstress::phenology
