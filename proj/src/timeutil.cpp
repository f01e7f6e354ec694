#include "aircast/timeutil.hpp"

#include "aircast/error.hpp"

#include <charconv>
#include <cstdio>

namespace aircast {

using namespace std::chrono;

TimeCode encode_time(Hour t)
{
    const sys_days day = floor<days>(t);
    const year_month_day ymd{day};
    const sys_days jan1 = sys_days{ymd.year() / January / 1};
    const auto hod = (t - floor<days>(t)).count();
    return TimeCode{static_cast<int>((day - jan1).count()) + 1, static_cast<int>(hod)};
}

Hour make_hour(int y, unsigned m, unsigned d, int h)
{
    const year_month_day ymd{year{y}, month{m}, day{d}};
    if (!ymd.ok() || h < 0 || h > 23) {
        throw ValidationError("invalid calendar time " + std::to_string(y) + "-" + std::to_string(m) + "-"
                              + std::to_string(d) + " hour " + std::to_string(h));
    }
    return Hour{sys_days{ymd}} + hours{h};
}

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole)
{
    int v = 0;
    if (pos + len > text.size()) {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    const auto* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) {
        throw ValidationError("malformed timestamp '" + std::string(whole) + "'");
    }
    return v;
}

} // namespace

Hour parse_hour(std::string_view text)
{
    // YYYY-MM-DDTHH[:MM[:SS]][Z]
    if (text.size() < 13 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ')) {
        throw ValidationError("malformed timestamp '" + std::string(text) + "'");
    }
    const int y = parse_int(text, 0, 4, text);
    const int mo = parse_int(text, 5, 2, text);
    const int d = parse_int(text, 8, 2, text);
    const int h = parse_int(text, 11, 2, text);
    std::size_t pos = 13;
    for (int field = 0; field < 2 && pos < text.size() && text[pos] == ':'; ++field) {
        if (parse_int(text, pos + 1, 2, text) != 0) {
            throw ValidationError("timestamp '" + std::string(text) + "' is not on the hour");
        }
        pos += 3;
    }
    if (pos < text.size() && text[pos] == 'Z') {
        ++pos;
    }
    if (pos != text.size()) {
        throw ValidationError("malformed timestamp '" + std::string(text) + "'");
    }
    return make_hour(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h);
}

std::string format_hour(Hour t)
{
    const year_month_day ymd{floor<days>(t)};
    const auto h = (t - floor<days>(t)).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00Z", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h));
    return buf;
}

std::string compact_hour(Hour t)
{
    const year_month_day ymd{floor<days>(t)};
    const auto h = (t - floor<days>(t)).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%02u%02uT%02d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(h));
    return buf;
}

YearMonth year_month(Hour t)
{
    const year_month_day ymd{floor<days>(t)};
    return YearMonth{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month())};
}

Hour month_start(YearMonth ym)
{
    return make_hour(ym.year, ym.month, 1, 0);
}

std::int64_t hours_between(Hour from, Hour to)
{
    return (to - from).count();
}

} // namespace aircast
