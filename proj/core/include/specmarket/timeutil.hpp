#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace specmarket {

/// Seconds since the Unix epoch, UTC.
using UnixSeconds = std::int64_t;

/// Parses `YYYY-MM-DDTHH:MM:SS` with an optional trailing `Z`. A space is
/// accepted in place of `T`. Throws std::invalid_argument on anything else.
UnixSeconds parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_iso8601(UnixSeconds t);

} // namespace specmarket
