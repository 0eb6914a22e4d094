#include "cropstress/core/jsonio.hpp"

#include "cropstress/core/error.hpp"
#include "cropstress/core/util.hpp"

namespace cropstress::core {

Json parse_json(const std::string& text, const std::string& what) {
  Json j = Json::parse(text, nullptr, false);
  require(!j.is_discarded(), ErrorKind::data, "malformed JSON in " + what);
  return j;
}

Json load_json(const std::filesystem::path& path) {
  return parse_json(slurp(path), path.string());
}

const Json& member(const Json& j, const std::string& key, const std::string& what) {
  auto it = j.find(key);
  require(it != j.end(), ErrorKind::data, what + ": missing key '" + key + "'");
  return *it;
}

double get_number(const Json& j, const std::string& key, const std::string& what) {
  const Json& v = member(j, key, what);
  require(v.is_number(), ErrorKind::data, what + ": '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_int(const Json& j, const std::string& key, const std::string& what) {
  const Json& v = member(j, key, what);
  require(v.is_number_integer(), ErrorKind::data, what + ": '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string get_string(const Json& j, const std::string& key, const std::string& what) {
  const Json& v = member(j, key, what);
  require(v.is_string(), ErrorKind::data, what + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool_or(const Json& j, const std::string& key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  require(it->is_boolean(), ErrorKind::data, "'" + key + "' must be a boolean");
  return it->get<bool>();
}

double get_number_or(const Json& j, const std::string& key, double fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  require(it->is_number(), ErrorKind::data, "'" + key + "' must be a number");
  return it->get<double>();
}

}  // namespace cropstress::core
