#include "dstt/time.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "dstt/errors.hpp"

namespace dstt::data {

namespace {

using std::chrono::days;
using std::chrono::sys_days;
using std::chrono::year_month_day;

std::int64_t days_since_epoch(const year_month_day& ymd) {
  return sys_days(ymd).time_since_epoch().count();
}

year_month_day civil(std::int64_t hours) {
  std::int64_t d = hours >= 0 ? hours / 24 : -((-hours + 23) / 24);
  return year_month_day(sys_days(days(d)));
}

template <typename T>
bool read_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

HourStamp HourStamp::from_civil(int year, unsigned month, unsigned day, unsigned hour) {
  const year_month_day ymd{std::chrono::year(year), std::chrono::month(month), std::chrono::day(day)};
  if (!ymd.ok() || hour > 23) {
    throw ParseError("invalid calendar date " + std::to_string(year) + "-" + std::to_string(month) +
                     "-" + std::to_string(day) + " hour " + std::to_string(hour));
  }
  return {days_since_epoch(ymd) * 24 + hour};
}

HourStamp HourStamp::from_day_of_year(int year, unsigned day_of_year, unsigned hour) {
  const std::chrono::year y(year);
  const unsigned length = y.is_leap() ? 366 : 365;
  if (day_of_year < 1 || day_of_year > length || hour > 23) {
    throw ParseError("invalid day-of-year " + std::to_string(year) + "/" +
                     std::to_string(day_of_year) + " hour " + std::to_string(hour));
  }
  const std::int64_t jan1 = days_since_epoch(year_month_day{y, std::chrono::January, std::chrono::day(1)});
  return {(jan1 + day_of_year - 1) * 24 + hour};
}

HourStamp HourStamp::parse(std::string_view text) {
  auto fail = [&] { return ParseError("invalid timestamp '" + std::string(text) + "'"); };
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') throw fail();
  int year = 0;
  unsigned month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!read_number(text.substr(0, 4), year) || !read_number(text.substr(5, 2), month) ||
      !read_number(text.substr(8, 2), day)) {
    throw fail();
  }
  std::string_view rest = text.substr(10);
  if (!rest.empty()) {
    if (rest[0] != 'T' && rest[0] != ' ') throw fail();
    rest.remove_prefix(1);
    if (rest.size() < 2 || !read_number(rest.substr(0, 2), hour)) throw fail();
    rest.remove_prefix(2);
    if (!rest.empty()) {
      if (rest.size() < 3 || rest[0] != ':' || !read_number(rest.substr(1, 2), minute)) throw fail();
      rest.remove_prefix(3);
      if (!rest.empty()) {
        if (rest.size() != 3 || rest[0] != ':' || !read_number(rest.substr(1, 2), second)) throw fail();
      }
    }
  }
  if (minute != 0 || second != 0) throw ParseError("timestamp '" + std::string(text) + "' is not on the hour");
  return from_civil(year, month, day, hour);
}

int HourStamp::year() const { return static_cast<int>(civil(hours).year()); }

unsigned HourStamp::day_of_year() const {
  const year_month_day ymd = civil(hours);
  const std::int64_t jan1 = days_since_epoch(year_month_day{ymd.year(), std::chrono::January, std::chrono::day(1)});
  return static_cast<unsigned>(days_since_epoch(ymd) - jan1 + 1);
}

unsigned HourStamp::hour_of_day() const {
  const std::int64_t h = hours % 24;
  return static_cast<unsigned>(h < 0 ? h + 24 : h);
}

std::string HourStamp::iso() const {
  const year_month_day ymd = civil(hours);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02u:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hour_of_day());
  return buf;
}

}  // namespace dstt::data
