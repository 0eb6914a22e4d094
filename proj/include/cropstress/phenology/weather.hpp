#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cropstress/core/date.hpp"

namespace cropstress::phenology {

struct WeatherDay {
  core::Date date;
  double t_min = 0.0;  // °C
  double t_max = 0.0;
};

using WeatherSeries = std::vector<WeatherDay>;

// Throws Error(data) unless dates are consecutive (gap-free, strictly
// increasing) and t_min <= t_max every day.
void validate_weather(const WeatherSeries& series);

// CSV with header date,t_min,t_max and ISO dates.
WeatherSeries load_weather_csv(const std::filesystem::path& path);
void write_weather_csv(const WeatherSeries& series, const std::filesystem::path& path);

// Returns the response body for a URL; injectable so tests never touch the
// network.
using HttpFetcher = std::function<std::string(const std::string& url)>;
HttpFetcher default_http_fetcher();

std::string open_meteo_url(double latitude, double longitude, const core::Date& start,
                           const core::Date& end);
std::string weather_cache_name(double latitude, double longitude, const core::Date& start,
                               const core::Date& end);

// Parses the archive endpoint's daily block and checks it covers
// [start, end] without gaps.
WeatherSeries parse_open_meteo(const std::string& body, const core::Date& start,
                               const core::Date& end, const std::string& what);

// Cache-first fetch: a hit under cache_dir bypasses the fetcher entirely;
// a miss stores the raw response before parsing.
WeatherSeries fetch_weather(double latitude, double longitude, const core::Date& start,
                            const core::Date& end, const std::filesystem::path& cache_dir,
                            const HttpFetcher& fetch = default_http_fetcher());

}  // namespace cropstress::phenology
