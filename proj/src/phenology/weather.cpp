#include "cropstress/phenology/weather.hpp"

#include "cropstress/core/error.hpp"
#include "cropstress/core/jsonio.hpp"
#include "cropstress/core/util.hpp"
#include "httplib.h"

namespace cropstress::phenology {

using core::ErrorKind;
using core::require;

void validate_weather(const WeatherSeries& series) {
  require(!series.empty(), ErrorKind::data, "weather series is empty");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& day = series[i];
    require(day.t_min <= day.t_max, ErrorKind::data,
            "weather " + day.date.to_iso() + ": t_min exceeds t_max");
    if (i > 0) {
      require(core::days_between(series[i - 1].date, day.date) == 1, ErrorKind::data,
              "weather gap or disorder between " + series[i - 1].date.to_iso() + " and " +
                  day.date.to_iso());
    }
  }
}

WeatherSeries load_weather_csv(const std::filesystem::path& path) {
  const std::string text = core::slurp(path);
  const auto lines = core::split(core::trim(text), '\n');
  require(!lines.empty() && core::trim(lines[0]) == "date,t_min,t_max", ErrorKind::data,
          path.string() + ": expected header 'date,t_min,t_max'");
  WeatherSeries series;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string line = core::trim(lines[i]);
    if (line.empty()) continue;
    const auto cells = core::split(line, ',');
    require(cells.size() == 3, ErrorKind::data,
            path.string() + ": row " + std::to_string(i) + " needs 3 columns");
    WeatherDay day;
    day.date = core::Date::from_iso(cells[0]);
    day.t_min = core::parse_double(cells[1]);
    day.t_max = core::parse_double(cells[2]);
    series.push_back(day);
  }
  validate_weather(series);
  return series;
}

void write_weather_csv(const WeatherSeries& series, const std::filesystem::path& path) {
  validate_weather(series);
  std::string csv = "date,t_min,t_max\n";
  for (const auto& day : series) {
    csv += day.date.to_iso();
    csv += ',';
    csv += core::format_double(day.t_min);
    csv += ',';
    csv += core::format_double(day.t_max);
    csv += '\n';
  }
  core::spit(path, csv);
}

HttpFetcher default_http_fetcher() {
  return [](const std::string& url) -> std::string {
    const auto scheme_end = url.find("://");
    require(scheme_end != std::string::npos, ErrorKind::config, "malformed URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(30, 0);
    auto res = client.Get(path);
    require(res != nullptr, ErrorKind::io,
            "weather request failed: " + httplib::to_string(res.error()) + " (" + url + ")");
    require(res->status == 200, ErrorKind::io,
            "weather request returned HTTP " + std::to_string(res->status) + " (" + url + ")");
    return res->body;
  };
}

std::string open_meteo_url(double latitude, double longitude, const core::Date& start,
                           const core::Date& end) {
  return "https://archive-api.open-meteo.com/v1/archive?latitude=" +
         core::format_double(latitude) + "&longitude=" + core::format_double(longitude) +
         "&start_date=" + start.to_iso() + "&end_date=" + end.to_iso() +
         "&daily=temperature_2m_max,temperature_2m_min&timezone=UTC";
}

std::string weather_cache_name(double latitude, double longitude, const core::Date& start,
                               const core::Date& end) {
  return core::format_double(latitude) + "_" + core::format_double(longitude) + "_" +
         start.to_iso() + "_" + end.to_iso() + ".json";
}

WeatherSeries parse_open_meteo(const std::string& body, const core::Date& start,
                               const core::Date& end, const std::string& what) {
  const core::Json j = core::parse_json(body, what);
  const core::Json& daily = core::member(j, "daily", what);
  const core::Json& time = core::member(daily, "time", what);
  const core::Json& tmax = core::member(daily, "temperature_2m_max", what);
  const core::Json& tmin = core::member(daily, "temperature_2m_min", what);
  require(time.is_array() && tmax.is_array() && tmin.is_array(), ErrorKind::data,
          what + ": daily block must hold arrays");
  require(time.size() == tmax.size() && time.size() == tmin.size(), ErrorKind::data,
          what + ": daily arrays disagree in length");

  const std::int64_t expected = core::days_between(start, end) + 1;
  require(static_cast<std::int64_t>(time.size()) == expected, ErrorKind::data,
          what + ": expected " + std::to_string(expected) + " days, got " +
              std::to_string(time.size()));

  WeatherSeries series;
  series.reserve(time.size());
  for (std::size_t i = 0; i < time.size(); ++i) {
    require(time[i].is_string(), ErrorKind::data, what + ": daily.time must hold dates");
    require(tmax[i].is_number() && tmin[i].is_number(), ErrorKind::data,
            what + ": null or non-numeric temperature at " + time[i].get<std::string>());
    WeatherDay day;
    day.date = core::Date::from_iso(time[i].get<std::string>());
    require(day.date == start.plus_days(static_cast<int>(i)), ErrorKind::data,
            what + ": gap in returned dates at " + day.date.to_iso());
    day.t_max = tmax[i].get<double>();
    day.t_min = tmin[i].get<double>();
    series.push_back(day);
  }
  validate_weather(series);
  return series;
}

WeatherSeries fetch_weather(double latitude, double longitude, const core::Date& start,
                            const core::Date& end, const std::filesystem::path& cache_dir,
                            const HttpFetcher& fetch) {
  require(start <= end, ErrorKind::config, "weather range start must not exceed end");
  const auto cache_path = cache_dir / weather_cache_name(latitude, longitude, start, end);
  const std::string what = "open-meteo response " + cache_path.filename().string();

  if (std::filesystem::exists(cache_path)) {
    return parse_open_meteo(core::slurp(cache_path), start, end, what + " (cached)");
  }
  const std::string body = fetch(open_meteo_url(latitude, longitude, start, end));
  const WeatherSeries series = parse_open_meteo(body, start, end, what);
  core::spit(cache_path, body);  // cache only after the payload parsed clean
  return series;
}

}  // namespace cropstress::phenology
