#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace crowd {

using Millis = std::chrono::milliseconds;
using Instant = std::chrono::sys_time<Millis>;

/// Parses ISO 8601 ("2017-04-10T08:15:00.000Z", "...+12:00", fraction optional)
/// and the legacy "YYYY.MM.DD hh:mm:ss:sss Z" form. Throws std::invalid_argument.
Instant parse_timestamp(std::string_view text);

/// Always emits "YYYY-MM-DDThh:mm:ss.sss+00:00".
std::string format_timestamp(Instant t);

/// Midnight UTC of the day containing t.
Instant utc_midnight(Instant t);

/// Day of week for t in UTC, 0 = Monday .. 6 = Sunday.
int utc_weekday(Instant t);

/// Fractional hour of day in UTC, in [0, 24).
double utc_hour_of_day(Instant t);

/// A tumbling window [start, start + duration).
struct TimeWindow {
    std::int64_t index = 0;
    Instant start{};
    std::chrono::seconds duration{900};

    Instant end() const { return start + duration; }
    bool contains(Instant t) const { return t >= start && t < end(); }
    friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Fixed window grid anchored at an epoch origin.
struct WindowGrid {
    Instant origin{};
    std::chrono::seconds duration{900};

    TimeWindow window_for(Instant t) const;
    TimeWindow at(std::int64_t index) const;
};

/// Throws std::out_of_range when timestamp precedes origin and
/// std::invalid_argument when duration is not positive.
TimeWindow window_for(Instant timestamp, std::chrono::seconds duration, Instant epoch_origin);

}  // namespace crowd
