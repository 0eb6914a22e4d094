#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace cropstress::core {

// Proleptic Gregorian calendar date with ISO-8601 text form.
struct Date {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  auto operator<=>(const Date&) const = default;

  // Days since 1970-01-01 (negative before the epoch).
  std::int64_t to_days() const;
  static Date from_days(std::int64_t days);

  Date plus_days(std::int64_t n) const { return from_days(to_days() + n); }

  std::string to_iso() const;                    // "YYYY-MM-DD"
  static Date from_iso(const std::string& s);    // throws Error(data) on malformed input
  static bool is_valid(int y, int m, int d);
};

// b - a, in days.
inline std::int64_t days_between(const Date& a, const Date& b) {
  return b.to_days() - a.to_days();
}

}  // namespace cropstress::core
