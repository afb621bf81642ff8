#include "aquamon/timestamp.hpp"

#include <charconv>
#include <cstdio>

#include "aquamon/error.hpp"

namespace aquamon {

namespace {

[[noreturn]] void bad(std::string_view text, std::string_view token, std::string_view why) {
    throw Error(Errc::parse, "bad timestamp '" + std::string(text) + "': " + std::string(why) +
                                 " at '" + std::string(token) + "'");
}

int read_field(std::string_view text, std::size_t pos, std::size_t width, std::string_view name) {
    auto token = text.substr(pos, width);
    int value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        bad(text, token, std::string("non-numeric ") + std::string(name));
    }
    return value;
}

}  // namespace

UtcSeconds parse_timestamp(std::string_view text) {
    // YYYY-MM-DD?HH:MM:SS, optionally "Z" after the ISO 'T' form
    if (text.size() == 20 && text[10] == 'T' && text[19] == 'Z') text.remove_suffix(1);
    if (text.size() != 19) bad(text, text, "expected 19 characters");
    if (text[4] != '-' || text[7] != '-') bad(text, text.substr(4, 4), "expected '-' date separators");
    if (text[10] != ':' && text[10] != ' ' && text[10] != 'T') {
        bad(text, text.substr(10, 1), "expected ':', ' ' or 'T' between date and time");
    }
    if (text[13] != ':' || text[16] != ':') bad(text, text.substr(13, 4), "expected ':' time separators");

    const int y = read_field(text, 0, 4, "year");
    const int mo = read_field(text, 5, 2, "month");
    const int d = read_field(text, 8, 2, "day");
    const int h = read_field(text, 11, 2, "hour");
    const int mi = read_field(text, 14, 2, "minute");
    const int s = read_field(text, 17, 2, "second");

    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.month().ok()) bad(text, text.substr(5, 2), "invalid month");
    if (!ymd.ok()) bad(text, text.substr(8, 2), "invalid day");
    if (h > 23) bad(text, text.substr(11, 2), "invalid hour");
    if (mi > 59) bad(text, text.substr(14, 2), "invalid minute");
    if (s > 59) bad(text, text.substr(17, 2), "invalid second");

    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

namespace {

std::string format_with(UtcSeconds t, char date_time_sep, bool zulu) {
    using namespace std::chrono;
    const auto days = floor<std::chrono::days>(t);
    const year_month_day ymd{days};
    const hh_mm_ss tod{t - days};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u%c%02d:%02d:%02d%s", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), date_time_sep,
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()), zulu ? "Z" : "");
    return buf;
}

}  // namespace

std::string format_timestamp(UtcSeconds t) { return format_with(t, ':', false); }

std::string format_iso8601(UtcSeconds t) { return format_with(t, 'T', true); }

UtcSeconds floor_to_step(UtcSeconds t, Seconds step) {
    const auto s = to_epoch(t);
    const auto k = step.count();
    auto q = s / k;
    if (s % k != 0 && s < 0) --q;
    return from_epoch(q * k);
}

}  // namespace aquamon
