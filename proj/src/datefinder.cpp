#include "asof/datefinder.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <regex>

#include "asof/error.hpp"

namespace asof {

namespace {

constexpr std::array<std::string_view, 12> kMonths = {
    "Januar", "Februar", "März",      "April",   "Mai",      "Juni",
    "Juli",   "August",  "September", "Oktober", "November", "Dezember"};

// Lower-cases ASCII and the German umlauts without changing byte length, so
// offsets in the folded copy are offsets in the original.
std::string fold_case(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = static_cast<unsigned char>(out[i]);
    if (c >= 'A' && c <= 'Z') {
      out[i] = static_cast<char>(c - 'A' + 'a');
    } else if (c == 0xC3 && i + 1 < out.size()) {
      auto n = static_cast<unsigned char>(out[i + 1]);
      if (n == 0x84 || n == 0x96 || n == 0x9C) out[i + 1] = static_cast<char>(n + 0x20);  // Ä Ö Ü
      ++i;
    }
  }
  return out;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

unsigned month_from_name(std::string_view name) {
  if (name == "märz" || name == "maerz") return 3;
  for (std::size_t i = 0; i < kMonths.size(); ++i) {
    std::string lower;
    for (char c : kMonths[i]) lower.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    if (lower == name) return static_cast<unsigned>(i + 1);
  }
  return 0;
}

struct Candidate {
  std::size_t start;
  std::size_t end;
  int year;
  unsigned month;
  unsigned day;
};

const std::regex& numeric_pattern() {
  static const std::regex re(R"((\d{1,2})\.(\d{1,2})\.(\d{4}))");
  return re;
}

const std::regex& named_pattern() {
  static const std::regex re(
      "(\\d{1,2})\\.?[ \\t]*(januar|februar|märz|maerz|april|mai|juni|juli|august|september|oktober|november|dezember)"
      "[ \\t]+(\\d{4})");
  return re;
}

void collect(const std::string& folded, const std::regex& re, bool named, std::vector<Candidate>& out) {
  for (auto it = std::sregex_iterator(folded.begin(), folded.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto start = static_cast<std::size_t>(m.position(0));
    auto end = start + static_cast<std::size_t>(m.length(0));
    // Digit boundaries stand in for the lookbehind ECMAScript regex lacks.
    if (start > 0 && is_digit(folded[start - 1])) continue;
    if (end < folded.size() && is_digit(folded[end])) continue;
    unsigned month = named ? month_from_name(m.str(2)) : static_cast<unsigned>(std::stoi(m.str(2)));
    out.push_back({start, end, std::stoi(m.str(3)), month, static_cast<unsigned>(std::stoi(m.str(1)))});
  }
}

}  // namespace

std::vector<DatedSpan> extract_dates(std::string_view text) {
  auto folded = fold_case(text);
  std::vector<Candidate> candidates;
  collect(folded, numeric_pattern(), false, candidates);
  collect(folded, named_pattern(), true, candidates);

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end > b.end;
  });

  std::vector<DatedSpan> spans;
  std::size_t last_end = 0;
  for (const auto& c : candidates) {
    if (!spans.empty() && c.start < last_end) continue;
    auto date = Date::from_ymd(c.year, c.month, c.day);
    if (!date) continue;
    spans.push_back({*date, c.start, c.end, std::string(text.substr(c.start, c.end - c.start))});
    last_end = c.end;
  }
  return spans;
}

FactDate select_as_of(std::span<const DatedSpan> spans, AsOfPolicy policy) {
  if (spans.empty()) fail(ErrorCode::kNoDateFound, "no fact date found in question");
  Date chosen = spans.front().date;
  for (const auto& s : spans) {
    if (policy == AsOfPolicy::kLatest && s.date > chosen) chosen = s.date;
    if (policy == AsOfPolicy::kEarliest && s.date < chosen) chosen = s.date;
  }
  return {chosen, DateProvenance::kExplicitExtraction};
}

FactDate fact_date_of(std::string_view question, AsOfPolicy policy) {
  auto spans = extract_dates(question);
  return select_as_of(spans, policy);
}

std::string german_long_date(Date d) {
  return std::to_string(d.day()) + ". " + std::string(kMonths[d.month() - 1]) + " " + std::to_string(d.year());
}

std::string german_numeric_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u.%02u.%04d", d.day(), d.month(), d.year());
  return buf;
}

}  // namespace asof
