#pragma once

// Civil-date arithmetic on the proleptic Gregorian calendar.
// Dates are day counts from 1970-01-01; conversions use the
// days_from_civil / civil_from_days algorithms.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>

#include "phdst/error.hpp"

namespace phdst {

struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return Date{static_cast<std::int32_t>(era * 146097 + static_cast<int>(doe) - 719468)};
  }

  std::tuple<int, int, int> ymd() const {
    std::int32_t z = days + 719468;
    const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
  }

  // 0 = Monday .. 6 = Sunday (1970-01-01 was a Thursday).
  int weekday() const { return static_cast<int>(((days % 7) + 7 + 3) % 7); }
  bool is_weekend() const { return weekday() >= 5; }

  std::string iso() const {
    auto [y, m, d] = ymd();
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
  }

  static std::optional<Date> parse_iso(std::string_view s) {
    int y = 0, m = 0, d = 0;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    char buf[11];
    s.copy(buf, 10);
    buf[10] = '\0';
    if (std::sscanf(buf, "%4d-%2d-%2d", &y, &m, &d) != 3) return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    Date date = from_ymd(y, m, d);
    auto [yy, mm, dd] = date.ymd();
    if (yy != y || mm != m || dd != d) return std::nullopt;  // e.g. Feb 30
    return date;
  }

  friend auto operator<=>(const Date&, const Date&) = default;
  Date operator+(int n) const { return Date{days + n}; }
  Date operator-(int n) const { return Date{days - n}; }
  int operator-(Date o) const { return days - o.days; }
  Date& operator++() { ++days; return *this; }
};

// Inclusive day range.
struct DateRange {
  Date first;
  Date last;

  int size() const { return last.days - first.days + 1; }
  bool contains(Date d) const { return first <= d && d <= last; }
  bool valid() const { return first <= last; }
};

struct DateTime {
  Date date;
  int sec_of_day = 0;  // [0, 86400)

  std::int64_t total_seconds() const {
    return static_cast<std::int64_t>(date.days) * 86400 + sec_of_day;
  }
  friend auto operator<=>(const DateTime&, const DateTime&) = default;
};

// Toll timestamps look like "2018/1/23 15:55:44" (month and day unpadded).
inline std::optional<DateTime> parse_timestamp(std::string_view s) {
  int y, mo, d, h, mi, se;
  char buf[32];
  if (s.size() >= sizeof(buf)) return std::nullopt;
  s.copy(buf, s.size());
  buf[s.size()] = '\0';
  if (std::sscanf(buf, "%d/%d/%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
  if (h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 59) return std::nullopt;
  Date date = Date::from_ymd(y, mo, d);
  auto [yy, mm, dd] = date.ymd();
  if (yy != y || mm != mo || dd != d) return std::nullopt;
  return DateTime{date, h * 3600 + mi * 60 + se};
}

inline std::string format_timestamp(const DateTime& t) {
  auto [y, m, d] = t.date.ymd();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%d/%d/%d %02d:%02d:%02d", y, m, d, t.sec_of_day / 3600,
                (t.sec_of_day / 60) % 60, t.sec_of_day % 60);
  return buf;
}

inline Date parse_iso_or_throw(std::string_view s, const char* what) {
  auto d = Date::parse_iso(s);
  if (!d) throw ValidationError(std::string(what) + ": bad date '" + std::string(s) + "'");
  return *d;
}

}  // namespace phdst
