#pragma once

#include <cstdint>
#include <string>

namespace strokesig {

// Dates are day counts since 1970-01-01 (proleptic Gregorian). Day is the
// universal internal time unit; years appear only at interfaces.
using Day = std::int32_t;

inline constexpr double kDaysPerYear = 365.25;
inline constexpr Day kDaysPerMonth = 30;

constexpr double days_to_years(double d) { return d / kDaysPerYear; }
constexpr double years_to_days(double y) { return y * kDaysPerYear; }

Day civil_to_day(int year, unsigned month, unsigned day);
void day_to_civil(Day z, int& year, unsigned& month, unsigned& day);

// ISO-8601 "YYYY-MM-DD".
std::string format_date(Day d);
Day parse_date(const std::string& iso);

}  // namespace strokesig
