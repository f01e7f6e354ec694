#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace aircast {

/// A UTC timestamp truncated to the hour.
using Hour = std::chrono::sys_time<std::chrono::hours>;

/// Day-of-year (1..366) and hour-of-day (0..23).
struct TimeCode {
    int doy = 1;
    int hod = 0;

    friend bool operator==(const TimeCode&, const TimeCode&) = default;
};

TimeCode encode_time(Hour t);

Hour make_hour(int year, unsigned month, unsigned day, int hour);

/// Accepts `YYYY-MM-DDTHH`, optionally followed by `:MM`, `:MM:SS` and `Z`.
/// Minutes and seconds must be zero.
Hour parse_hour(std::string_view text);
/// Formats as `YYYY-MM-DDTHH:00:00Z`.
std::string format_hour(Hour t);
/// Compact form used in file names: `YYYYMMDDTHH`.
std::string compact_hour(Hour t);

/// (year, month) of the calendar month containing `t`.
struct YearMonth {
    int year;
    unsigned month;
    friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};
YearMonth year_month(Hour t);
Hour month_start(YearMonth ym);

std::int64_t hours_between(Hour from, Hour to);

} // namespace aircast
