#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace evsched {

/// Wall-clock instant at minute resolution, UTC.
using Timestamp = std::chrono::sys_time<std::chrono::minutes>;

/// Parses ISO-8601 ("2019-10-17T18:06:41Z", "2019-10-17 18:06+09:00", ...) and
/// RFC 1123 ("Thu, 17 Oct 2019 18:06:41 GMT") timestamps. Seconds are
/// truncated to the minute after applying any UTC offset.
/// Throws ParseError on anything else.
Timestamp parse_timestamp(std::string_view text);

/// "YYYY-MM-DDTHH:MM:00Z"
std::string format_timestamp(Timestamp t);

/// Signed difference b - a in minutes.
inline double minutes_between(Timestamp a, Timestamp b) {
  return static_cast<double>((b - a).count());
}

/// Minutes elapsed since the preceding UTC midnight, in [0, 1440).
int minute_of_day(Timestamp t);

}  // namespace evsched
