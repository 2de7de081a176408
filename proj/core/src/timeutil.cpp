#include "specmarket/timeutil.hpp"

#include <chrono>
#include <cstdio>
#include <stdexcept>

namespace specmarket {

UnixSeconds parse_iso8601(std::string_view text)
{
  std::string s(text);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r'))
    s.pop_back();
  if (!s.empty() && s.back() == 'Z')
    s.pop_back();

  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &sec, &consumed) != 7
      || static_cast<std::size_t>(consumed) != s.size() || (sep != 'T' && sep != ' '))
    throw std::invalid_argument("not an ISO-8601 timestamp: '" + std::string(text) + "'");

  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59 || h < 0 || mi < 0 || sec < 0)
    throw std::invalid_argument("invalid calendar time: '" + std::string(text) + "'");

  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<UnixSeconds>(days_since_epoch) * 86400 + h * 3600 + mi * 60 + sec;
}

std::string format_iso8601(UnixSeconds t)
{
  using namespace std::chrono;
  auto days_part = t / 86400;
  auto rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days_part;
  }
  const year_month_day ymd{sys_days{days{days_part}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

} // namespace specmarket
