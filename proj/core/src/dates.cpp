#include "strokesig/dates.hpp"

#include <cstdio>
#include <stdexcept>

namespace strokesig {

// Howard Hinnant's civil calendar algorithms.
Day civil_to_day(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

void day_to_civil(Day z, int& year, unsigned& month, unsigned& day) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int y = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = doy - (153 * mp + 2) / 5 + 1;
  month = mp + (mp < 10 ? 3 : -9);
  year = y + (month <= 2);
}

std::string format_date(Day d) {
  int y;
  unsigned m, dd;
  day_to_civil(d, y, m, dd);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, dd);
  return buf;
}

Day parse_date(const std::string& iso) {
  int y;
  unsigned m, d;
  if (std::sscanf(iso.c_str(), "%d-%u-%u", &y, &m, &d) != 3 || m < 1 ||
      m > 12 || d < 1 || d > 31) {
    throw std::invalid_argument("bad ISO-8601 date: " + iso);
  }
  return civil_to_day(y, m, d);
}

}  // namespace strokesig
