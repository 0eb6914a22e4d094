#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace cropstress::core {

using Json = nlohmann::json;

// Parse/reload helpers that convert library exceptions into Error(data) with
// the offending source named.
Json parse_json(const std::string& text, const std::string& what);
Json load_json(const std::filesystem::path& path);

// Required-member accessors; throw Error(data) naming `what` when the key is
// absent or of the wrong type.
const Json& member(const Json& j, const std::string& key, const std::string& what);
double get_number(const Json& j, const std::string& key, const std::string& what);
std::int64_t get_int(const Json& j, const std::string& key, const std::string& what);
std::string get_string(const Json& j, const std::string& key, const std::string& what);
bool get_bool_or(const Json& j, const std::string& key, bool fallback);
double get_number_or(const Json& j, const std::string& key, double fallback);

}  // namespace cropstress::core
