#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace longbio {

// Proleptic Gregorian day number math (days since 1970-01-01), so date
// sampling is exact and platform-independent.
constexpr int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<int64_t>(doe) - 719468;
}

struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  static constexpr Date from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
  }

  constexpr int64_t to_days() const { return days_from_civil(year, month, day); }

  // Canonical YYYY-MM-DD
  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return std::string(buf);
  }

  friend constexpr bool operator==(const Date& a, const Date& b) {
    return a.year == b.year && a.month == b.month && a.day == b.day;
  }
  friend constexpr bool operator<(const Date& a, const Date& b) {
    return a.to_days() < b.to_days();
  }
};

}  // namespace longbio
