#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace aquamon {

// All instants are UTC with one-second resolution.
using UtcSeconds = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline UtcSeconds from_epoch(std::int64_t s) { return UtcSeconds{Seconds{s}}; }
inline std::int64_t to_epoch(UtcSeconds t) { return t.time_since_epoch().count(); }

// Accepts "YYYY-MM-DD:HH:MM:SS" (dataset form) as well as the ' ' and 'T'
// separated ISO variants ("Z" suffix allowed after 'T'). Throws Errc::parse naming the offending token.
UtcSeconds parse_timestamp(std::string_view text);

// Dataset form, "YYYY-MM-DD:HH:MM:SS".
std::string format_timestamp(UtcSeconds t);

// "YYYY-MM-DDTHH:MM:SSZ", used in logs and the API.
std::string format_iso8601(UtcSeconds t);

// floor(t / step) * step on the epoch grid, correct for negative instants.
UtcSeconds floor_to_step(UtcSeconds t, Seconds step);

}  // namespace aquamon
