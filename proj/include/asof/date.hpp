#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace asof {

/// A proleptic Gregorian calendar day, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;

  static std::optional<Date> from_ymd(int year, unsigned month, unsigned day);
  /// Strict `YYYY-MM-DD`; throws Error(kMalformedRecord) otherwise.
  static Date parse_iso(std::string_view text);
  static std::optional<Date> try_parse_iso(std::string_view text);
  static Date from_days(std::int32_t days) { return Date(days); }
  static Date today();

  std::int32_t days() const { return days_; }
  int year() const;
  unsigned month() const;
  unsigned day() const;
  std::string iso() const;

  Date plus_days(std::int32_t n) const { return Date(days_ + n); }

  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  constexpr explicit Date(std::int32_t days) : days_(days) {}
  std::int32_t days_ = 0;
};

}  // namespace asof
