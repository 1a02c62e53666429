#pragma once

// Timestamps are UTC seconds since the Unix epoch. Local-time views
// (hour of day, calendar date, weekday) go through a fixed-offset TimeZone.

#include <charconv>
#include <cstdio>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "odflow/error.hpp"

namespace odflow {

using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerHour = 3600;
inline constexpr Timestamp kSecondsPerDay = 86400;

enum class TimestampFormat { unix_seconds, rfc3339 };

inline TimestampFormat parse_timestamp_format(std::string_view s) {
  if (s == "unix") return TimestampFormat::unix_seconds;
  if (s == "rfc3339") return TimestampFormat::rfc3339;
  fail(ErrorKind::config, "unknown timestamp format '" + std::string(s) +
                              "' (expected unix or rfc3339)");
}

inline std::string_view timestamp_format_name(TimestampFormat f) {
  return f == TimestampFormat::unix_seconds ? "unix" : "rfc3339";
}

namespace detail {

inline bool parse_fixed_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

inline std::optional<Timestamp> civil_to_unix(int y, int mo, int d, int h,
                                              int mi, int s) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
  const Timestamp days = sys_days{ymd}.time_since_epoch().count();
  return days * kSecondsPerDay + h * 3600 + mi * 60 + s;
}

inline Timestamp floor_div(Timestamp a, Timestamp b) {
  Timestamp q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)`. Fractional seconds
/// are truncated.
inline std::optional<Timestamp> parse_rfc3339(std::string_view s) {
  if (s.size() < 20 || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':')
    return std::nullopt;
  int y, mo, d, h, mi, sec;
  if (!detail::parse_fixed_int(s.substr(0, 4), y) ||
      !detail::parse_fixed_int(s.substr(5, 2), mo) ||
      !detail::parse_fixed_int(s.substr(8, 2), d) ||
      !detail::parse_fixed_int(s.substr(11, 2), h) ||
      !detail::parse_fixed_int(s.substr(14, 2), mi) ||
      !detail::parse_fixed_int(s.substr(17, 2), sec))
    return std::nullopt;
  std::string_view rest = s.substr(19);
  if (!rest.empty() && rest.front() == '.') {
    std::size_t i = 1;
    while (i < rest.size() && rest[i] >= '0' && rest[i] <= '9') ++i;
    if (i == 1) return std::nullopt;
    rest.remove_prefix(i);
  }
  int offset_s = 0;
  if (rest == "Z" || rest == "z") {
    offset_s = 0;
  } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') &&
             rest[3] == ':') {
    int oh, om;
    if (!detail::parse_fixed_int(rest.substr(1, 2), oh) ||
        !detail::parse_fixed_int(rest.substr(4, 2), om) || oh > 23 || om > 59)
      return std::nullopt;
    offset_s = (oh * 3600 + om * 60) * (rest[0] == '-' ? -1 : 1);
  } else {
    return std::nullopt;
  }
  auto local = detail::civil_to_unix(y, mo, d, h, mi, sec);
  if (!local) return std::nullopt;
  return *local - offset_s;
}

inline std::optional<Timestamp> parse_unix_seconds(std::string_view s) {
  Timestamp v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<Timestamp> parse_timestamp(std::string_view s,
                                                TimestampFormat fmt) {
  return fmt == TimestampFormat::unix_seconds ? parse_unix_seconds(s)
                                              : parse_rfc3339(s);
}

/// Accepts either format; used for configuration values.
inline std::optional<Timestamp> parse_timestamp_any(std::string_view s) {
  if (auto t = parse_unix_seconds(s)) return t;
  return parse_rfc3339(s);
}

inline std::string format_rfc3339(Timestamp t) {
  using namespace std::chrono;
  const Timestamp days = detail::floor_div(t, kSecondsPerDay);
  const Timestamp sod = t - days * kSecondsPerDay;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(sod / 3600),
                static_cast<int>(sod / 60 % 60), static_cast<int>(sod % 60));
  return buf;
}

/// Fixed UTC offset. Named zones are limited to offsets without DST.
class TimeZone {
 public:
  TimeZone() = default;
  explicit TimeZone(int offset_s, std::string name = {})
      : offset_s_(offset_s), name_(std::move(name)) {}

  static TimeZone parse(std::string_view s) {
    if (s == "UTC" || s == "Etc/UTC" || s == "Z") return TimeZone(0, "UTC");
    if (s == "Asia/Singapore" || s == "Singapore")
      return TimeZone(8 * 3600, std::string(s));
    if (s.size() == 6 && (s[0] == '+' || s[0] == '-') && s[3] == ':') {
      int h, m;
      if (detail::parse_fixed_int(s.substr(1, 2), h) &&
          detail::parse_fixed_int(s.substr(4, 2), m) && h <= 14 && m < 60)
        return TimeZone((h * 3600 + m * 60) * (s[0] == '-' ? -1 : 1),
                        std::string(s));
    }
    fail(ErrorKind::config, "unsupported timezone '" + std::string(s) +
                                "' (use UTC, Asia/Singapore or +HH:MM)");
  }

  int offset_s() const { return offset_s_; }
  const std::string& name() const { return name_; }

  Timestamp to_local(Timestamp utc) const { return utc + offset_s_; }
  Timestamp to_utc(Timestamp local) const { return local - offset_s_; }

  /// Days since 1970-01-01 of the local calendar date.
  std::int64_t local_day(Timestamp utc) const {
    return detail::floor_div(to_local(utc), kSecondsPerDay);
  }
  /// Seconds since local midnight.
  Timestamp seconds_of_day(Timestamp utc) const {
    return to_local(utc) - local_day(utc) * kSecondsPerDay;
  }
  int hour_of_day(Timestamp utc) const {
    return static_cast<int>(seconds_of_day(utc) / 3600);
  }
  /// 0 = Sunday ... 6 = Saturday.
  unsigned weekday(Timestamp utc) const {
    using namespace std::chrono;
    return std::chrono::weekday{sys_days{std::chrono::days{local_day(utc)}}}
        .c_encoding();
  }
  bool is_weekday(Timestamp utc) const {
    const unsigned wd = weekday(utc);
    return wd >= 1 && wd <= 5;
  }
  /// UTC instant of local midnight that starts the local day of `utc`.
  Timestamp local_midnight(Timestamp utc) const {
    return to_utc(local_day(utc) * kSecondsPerDay);
  }

 private:
  int offset_s_ = 0;
  std::string name_ = "UTC";
};

/// Parses a calendar date `YYYY-MM-DD` into days since the epoch.
inline std::optional<std::int64_t> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y, m, d;
  if (!detail::parse_fixed_int(s.substr(0, 4), y) ||
      !detail::parse_fixed_int(s.substr(5, 2), m) ||
      !detail::parse_fixed_int(s.substr(8, 2), d))
    return std::nullopt;
  auto t = detail::civil_to_unix(y, m, d, 0, 0, 0);
  if (!t) return std::nullopt;
  return *t / kSecondsPerDay;
}

}  // namespace odflow
