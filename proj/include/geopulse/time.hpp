#ifndef GEOPULSE_TIME_HPP
#define GEOPULSE_TIME_HPP

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <optional>
#include <stdexcept>
#include <string>

namespace geopulse {

// Milliseconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;
// Milliseconds.
using Duration = std::int64_t;

constexpr Duration kMillisPerSecond = 1000;
constexpr Duration kMillisPerMinute = 60 * kMillisPerSecond;
constexpr Duration kMillisPerHour = 60 * kMillisPerMinute;
constexpr Duration kMillisPerDay = 24 * kMillisPerHour;

// 2000-01-01T00:00:00Z, the default binning epoch.
constexpr Timestamp kDefaultEpoch = 946684800000LL;

namespace detail {

inline bool is_leap(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
  static const int d[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return d[m - 1];
}

// Days since 1970-01-01 for a civil date. Valid for years >= 1970.
inline std::int64_t days_from_civil(int y, int m, int d) {
  std::int64_t days = 0;
  for (int yy = 1970; yy < y; ++yy) days += is_leap(yy) ? 366 : 365;
  for (int mm = 1; mm < m; ++mm) days += days_in_month(y, mm);
  return days + (d - 1);
}

inline void civil_from_days(std::int64_t days, int& y, int& m, int& d) {
  y = 1970;
  while (true) {
    int len = is_leap(y) ? 366 : 365;
    if (days < len) break;
    days -= len;
    ++y;
  }
  m = 1;
  while (days >= days_in_month(y, m)) {
    days -= days_in_month(y, m);
    ++m;
  }
  d = static_cast<int>(days) + 1;
}

}  // namespace detail

// Parses an RFC 3339 timestamp ("2012-02-19T14:30:05Z",
// "2012-02-19T14:30:05.123+02:00"). Returns nullopt on malformed input.
inline std::optional<Timestamp> parse_rfc3339(const std::string& s) {
  int y, mo, d, h, mi;
  double sec;
  int n = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%lf%n", &y, &mo, &d, &h, &mi,
                  &sec, &n) != 6)
    return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > detail::days_in_month(y, mo) ||
      h > 23 || mi > 59 || sec < 0 || sec >= 61)
    return std::nullopt;
  const char* rest = s.c_str() + n;
  std::int64_t offset_ms = 0;
  if (*rest == 'Z' || *rest == 'z') {
    if (rest[1] != '\0') return std::nullopt;
  } else if (*rest == '+' || *rest == '-') {
    int oh, om;
    if (std::sscanf(rest + 1, "%2d:%2d", &oh, &om) != 2) return std::nullopt;
    offset_ms = (oh * kMillisPerHour + om * kMillisPerMinute) *
                (*rest == '+' ? 1 : -1);
  } else {
    return std::nullopt;
  }
  std::int64_t days = detail::days_from_civil(y, mo, d);
  std::int64_t ms = days * kMillisPerDay + h * kMillisPerHour +
                    mi * kMillisPerMinute +
                    static_cast<std::int64_t>(sec * 1000.0 + 0.5);
  return ms - offset_ms;
}

inline std::string format_rfc3339(Timestamp t) {
  std::int64_t days = t / kMillisPerDay;
  std::int64_t rem = t % kMillisPerDay;
  if (rem < 0) {
    rem += kMillisPerDay;
    --days;
  }
  int y, mo, d;
  detail::civil_from_days(days, y, mo, d);
  int h = static_cast<int>(rem / kMillisPerHour);
  int mi = static_cast<int>(rem % kMillisPerHour / kMillisPerMinute);
  int s = static_cast<int>(rem % kMillisPerMinute / kMillisPerSecond);
  int ms = static_cast<int>(rem % kMillisPerSecond);
  char buf[48];
  if (ms != 0)
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", y,
                  mo, d, h, mi, s, ms);
  else
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, mo, d,
                  h, mi, s);
  return buf;
}

// "1m", "10m", "1h", "30s" -> milliseconds.
inline std::optional<Duration> parse_duration(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char unit = s.back();
  std::string num = s.substr(0, s.size() - 1);
  std::int64_t v;
  try {
    size_t pos;
    v = std::stoll(num, &pos);
    if (pos != num.size() || v <= 0) return std::nullopt;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  switch (unit) {
    case 's': return v * kMillisPerSecond;
    case 'm': return v * kMillisPerMinute;
    case 'h': return v * kMillisPerHour;
    case 'd': return v * kMillisPerDay;
    default: return std::nullopt;
  }
}

// Seconds into the UTC day, as a fraction of the day in [0, 1).
inline double day_phase(Timestamp t) {
  std::int64_t rem = t % kMillisPerDay;
  if (rem < 0) rem += kMillisPerDay;
  return static_cast<double>(rem) / static_cast<double>(kMillisPerDay);
}

}  // namespace geopulse

#endif  // GEOPULSE_TIME_HPP
