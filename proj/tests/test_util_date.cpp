#include <doctest.h>

#include "asof/date.hpp"
#include "asof/error.hpp"
#include "asof/util.hpp"

using namespace asof;

namespace {

// Day counting by brute force from 1970-01-01, independent of <chrono>.
bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }
int month_len(int y, int m) {
  static const int len[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : len[m - 1];
}
int naive_days(int y, int m, int d) {
  int n = 0;
  if (y >= 1970) {
    for (int yy = 1970; yy < y; ++yy) n += leap(yy) ? 366 : 365;
  } else {
    for (int yy = y; yy < 1970; ++yy) n -= leap(yy) ? 366 : 365;
  }
  for (int mm = 1; mm < m; ++mm) n += month_len(y, mm);
  return n + d - 1;
}

}  // namespace

TEST_CASE("date: ymd round trip against a naive day counter") {
  SplitMix64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    int y = 1850 + static_cast<int>(rng.below(250));
    int m = 1 + static_cast<int>(rng.below(12));
    int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(month_len(y, m))));
    auto date = Date::from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
    REQUIRE(date);
    CHECK(date->days() == naive_days(y, m, d));
    CHECK(date->year() == y);
    CHECK(date->month() == static_cast<unsigned>(m));
    CHECK(date->day() == static_cast<unsigned>(d));
    CHECK(Date::parse_iso(date->iso()) == *date);
  }
}

TEST_CASE("date: invalid calendar days and malformed text") {
  CHECK_FALSE(Date::from_ymd(2020, 2, 30));
  CHECK_FALSE(Date::from_ymd(2021, 2, 29));
  CHECK(Date::from_ymd(2024, 2, 29));
  CHECK_FALSE(Date::from_ymd(2024, 13, 1));
  CHECK_FALSE(Date::try_parse_iso("2024-1-01"));
  CHECK_FALSE(Date::try_parse_iso("2024/01/01"));
  CHECK_FALSE(Date::try_parse_iso("20x4-01-01"));
  try {
    Date::parse_iso("31.02.2020");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
  }
}

TEST_CASE("date: ordering follows days") {
  auto a = Date::parse_iso("2024-12-31"), b = Date::parse_iso("2025-01-01");
  CHECK(a < b);
  CHECK(a.plus_days(1) == b);
  CHECK(Date::from_days(0).iso() == "1970-01-01");
}

TEST_CASE("util: fnv1a reference vectors") {
  // Published FNV-1a 64 test vectors.
  CHECK(Fnv1a().add("").hex() == "cbf29ce484222325");
  CHECK(Fnv1a().add("a").hex() == "af63dc4c8601ec8c");
  CHECK(Fnv1a().add("foobar").hex() == "85944171f73967e8");
  CHECK(Fnv1a().field("ab").field("c").value() != Fnv1a().field("a").field("bc").value());
}

TEST_CASE("util: splitmix64 reference stream") {
  // First outputs for seed 0 from the reference implementation.
  SplitMix64 r(0);
  CHECK(r.next() == 0xe220a8397b1dcdafULL);
  CHECK(r.next() == 0x6e789e6aa1b965f4ULL);
  CHECK(r.next() == 0x06c45d188009454fULL);
  SplitMix64 u(42);
  for (int i = 0; i < 1000; ++i) {
    double x = u.unit();
    CHECK((x >= 0.0 && x < 1.0));
  }
}

TEST_CASE("util: whitespace and utf-8 helpers") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(normalize_whitespace(" a \t\n b  ") == "a b");
  CHECK(normalize_whitespace("") == "");
  CHECK(utf8_length("Prüfung") == 7);
  CHECK(utf8_truncate("Prüfung", 3) == "Prü");
  CHECK(utf8_truncate("abc", 10) == "abc");
  CHECK(split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
  CHECK(render_template("{a}-{b}-{c}", {{"a", "1"}, {"b", "2"}}) == "1-2-{c}");
}

TEST_CASE("util: line iteration skips blanks and strips CR") {
  std::vector<std::pair<std::string, std::size_t>> seen;
  for_each_line("x\r\n\n  \ny", [&](std::string_view l, std::size_t n) { seen.emplace_back(std::string(l), n); });
  REQUIRE(seen.size() == 2);
  CHECK(seen[0] == std::make_pair(std::string("x"), std::size_t{1}));
  CHECK(seen[1] == std::make_pair(std::string("y"), std::size_t{4}));
}
