#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace dstt::data {

/// UTC timestamp at hourly resolution, counted from 1970-01-01T00:00Z.
struct HourStamp {
  std::int64_t hours = 0;

  static HourStamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0);
  /// Day of year is 1-based, as in OMNI tables.
  static HourStamp from_day_of_year(int year, unsigned day_of_year, unsigned hour);
  /// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH", "YYYY-MM-DDTHH:MM[:SS][Z]" (minutes
  /// and seconds must be zero).
  static HourStamp parse(std::string_view text);

  int year() const;
  unsigned day_of_year() const;
  unsigned hour_of_day() const;
  /// "YYYY-MM-DDTHH:00:00Z"
  std::string iso() const;

  HourStamp operator+(std::int64_t h) const { return {hours + h}; }
  std::int64_t operator-(HourStamp other) const { return hours - other.hours; }
  auto operator<=>(const HourStamp&) const = default;
};

}  // namespace dstt::data
