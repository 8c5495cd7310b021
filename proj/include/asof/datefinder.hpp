#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asof/date.hpp"

namespace asof {

/// A calendar date found in question text. Offsets are UTF-8 byte offsets
/// into the searched string, half-open.
struct DatedSpan {
  Date date;
  std::size_t start_offset = 0;
  std::size_t end_offset = 0;
  std::string surface;

  friend bool operator==(const DatedSpan&, const DatedSpan&) = default;
};

enum class DateProvenance { kExplicitExtraction, kCallerSupplied };

struct FactDate {
  Date date;
  DateProvenance provenance = DateProvenance::kExplicitExtraction;

  friend bool operator==(const FactDate&, const FactDate&) = default;
};

/// Which extracted date becomes the as-of date.
enum class AsOfPolicy { kLatest, kEarliest, kFirstMentioned };

/// German day-resolution dates: "3.3.2017", "03.03.2017", "10. Februar 2025"
/// (month names case-insensitive, "März"/"Maerz"). Calendar-invalid matches
/// are dropped; overlapping candidates resolve leftmost-longest.
std::vector<DatedSpan> extract_dates(std::string_view text);

/// Throws Error(kNoDateFound) on empty input.
FactDate select_as_of(std::span<const DatedSpan> spans, AsOfPolicy policy = AsOfPolicy::kLatest);

/// extract_dates + select_as_of.
FactDate fact_date_of(std::string_view question, AsOfPolicy policy = AsOfPolicy::kLatest);

/// "10. Februar 2025"
std::string german_long_date(Date d);
/// "10.02.2025"
std::string german_numeric_date(Date d);

}  // namespace asof
