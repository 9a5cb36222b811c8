#include "crowd/time.hpp"

#include <cctype>
#include <cstdio>
#include <stdexcept>

namespace crowd {

namespace {

using std::chrono::days;
using std::chrono::sys_days;

int read_digits(std::string_view text, std::size_t& pos, std::size_t count) {
    if (pos + count > text.size()) {
        throw std::invalid_argument("timestamp truncated: " + std::string(text));
    }
    int value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const char c = text[pos + i];
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            throw std::invalid_argument("timestamp has non-digit field: " + std::string(text));
        }
        value = value * 10 + (c - '0');
    }
    pos += count;
    return value;
}

void expect(std::string_view text, std::size_t& pos, char c) {
    if (pos >= text.size() || text[pos] != c) {
        throw std::invalid_argument("malformed timestamp: " + std::string(text));
    }
    ++pos;
}

Instant compose(int y, int mo, int d, int h, int mi, int s, int ms, int offset_minutes,
                std::string_view text) {
    const std::chrono::year_month_day ymd{std::chrono::year{y},
                                          std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
        throw std::invalid_argument("timestamp out of range: " + std::string(text));
    }
    return Instant{sys_days{ymd}} + std::chrono::hours{h} + std::chrono::minutes{mi} +
           std::chrono::seconds{s} + Millis{ms} - std::chrono::minutes{offset_minutes};
}

// "YYYY.MM.DD hh:mm:ss:sss Z"
Instant parse_legacy(std::string_view text) {
    std::size_t pos = 0;
    const int y = read_digits(text, pos, 4);
    expect(text, pos, '.');
    const int mo = read_digits(text, pos, 2);
    expect(text, pos, '.');
    const int d = read_digits(text, pos, 2);
    expect(text, pos, ' ');
    const int h = read_digits(text, pos, 2);
    expect(text, pos, ':');
    const int mi = read_digits(text, pos, 2);
    expect(text, pos, ':');
    const int s = read_digits(text, pos, 2);
    expect(text, pos, ':');
    const int ms = read_digits(text, pos, 3);
    if (text.substr(pos) != " Z") {
        throw std::invalid_argument("legacy timestamp must end in ' Z': " + std::string(text));
    }
    return compose(y, mo, d, h, mi, s, ms, 0, text);
}

}  // namespace

Instant parse_timestamp(std::string_view text) {
    if (text.size() >= 5 && text[4] == '.') {
        return parse_legacy(text);
    }
    std::size_t pos = 0;
    const int y = read_digits(text, pos, 4);
    expect(text, pos, '-');
    const int mo = read_digits(text, pos, 2);
    expect(text, pos, '-');
    const int d = read_digits(text, pos, 2);
    if (pos >= text.size() || (text[pos] != 'T' && text[pos] != ' ')) {
        throw std::invalid_argument("malformed timestamp: " + std::string(text));
    }
    ++pos;
    const int h = read_digits(text, pos, 2);
    expect(text, pos, ':');
    const int mi = read_digits(text, pos, 2);
    expect(text, pos, ':');
    const int s = read_digits(text, pos, 2);
    int ms = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        // Keep millisecond precision, truncate anything finer.
        std::size_t digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 3) ms = ms * 10 + (text[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) throw std::invalid_argument("empty fraction: " + std::string(text));
        for (std::size_t i = digits; i < 3; ++i) ms *= 10;
    }
    int offset = 0;
    if (pos < text.size() && text[pos] == 'Z') {
        ++pos;
    } else if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
        const int sign = text[pos] == '-' ? -1 : 1;
        ++pos;
        const int oh = read_digits(text, pos, 2);
        if (pos < text.size() && text[pos] == ':') ++pos;
        const int om = read_digits(text, pos, 2);
        offset = sign * (oh * 60 + om);
    } else {
        throw std::invalid_argument("timestamp lacks UTC offset: " + std::string(text));
    }
    if (pos != text.size()) {
        throw std::invalid_argument("trailing characters in timestamp: " + std::string(text));
    }
    return compose(y, mo, d, h, mi, s, ms, offset, text);
}

std::string format_timestamp(Instant t) {
    const auto day = std::chrono::floor<days>(t);
    const std::chrono::year_month_day ymd{day};
    const std::chrono::hh_mm_ss<Millis> tod{t - day};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03d+00:00",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                  static_cast<int>(tod.minutes().count()), static_cast<int>(tod.seconds().count()),
                  static_cast<int>(tod.subseconds().count()));
    return buf;
}

Instant utc_midnight(Instant t) { return std::chrono::floor<days>(t); }

int utc_weekday(Instant t) {
    const std::chrono::weekday wd{std::chrono::floor<days>(t)};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

double utc_hour_of_day(Instant t) {
    const auto since_midnight = t - utc_midnight(t);
    return static_cast<double>(since_midnight.count()) / 3'600'000.0;
}

TimeWindow WindowGrid::window_for(Instant t) const {
    return crowd::window_for(t, duration, origin);
}

TimeWindow WindowGrid::at(std::int64_t index) const {
    if (index < 0) throw std::out_of_range("negative window index");
    return TimeWindow{index, origin + duration * index, duration};
}

TimeWindow window_for(Instant timestamp, std::chrono::seconds duration, Instant epoch_origin) {
    if (duration.count() <= 0) {
        throw std::invalid_argument("window duration must be positive");
    }
    if (timestamp < epoch_origin) {
        throw std::out_of_range("timestamp " + format_timestamp(timestamp) +
                                " precedes epoch origin " + format_timestamp(epoch_origin));
    }
    const Millis span = std::chrono::duration_cast<Millis>(duration);
    const std::int64_t index = (timestamp - epoch_origin) / span;
    return TimeWindow{index, epoch_origin + span * index, duration};
}

}  // namespace crowd
