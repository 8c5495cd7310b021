#include <doctest.h>

#include <algorithm>
#include <json.hpp>

#include "asof/corpus.hpp"
#include "asof/error.hpp"
#include "asof/util.hpp"
#include "sim.hpp"

using namespace asof;
using asof::testing::fixture_corpus;
using nlohmann::json;

namespace {

Date d(const char* iso) { return Date::parse_iso(iso); }

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::kIo;
}

std::string version_line(const std::string& statute, const std::string& par, Date from, std::optional<Date> to,
                         const std::string& text) {
  return json{{"statute", statute},
              {"paragraph", par},
              {"heading", "H"},
              {"valid_from", from.iso()},
              {"valid_to", to ? json(to->iso()) : json(nullptr)},
              {"text", text}}
             .dump();
}

/// Random gapless chains for a handful of provisions, lines shuffled.
struct RandomCorpus {
  std::string jsonl;
  std::map<ProvisionRef, std::vector<std::pair<Date, std::optional<Date>>>> chains;
};

RandomCorpus random_corpus(SplitMix64& rng) {
  RandomCorpus rc;
  std::vector<std::string> lines;
  int provisions = 1 + static_cast<int>(rng.below(6));
  for (int p = 0; p < provisions; ++p) {
    ProvisionRef ref{StatuteCode::kBGB, std::to_string(100 + p)};
    Date from = Date::from_days(static_cast<std::int32_t>(rng.below(20000)));
    int versions = 1 + static_cast<int>(rng.below(5));
    for (int v = 0; v < versions; ++v) {
      std::optional<Date> to;
      if (v + 1 < versions) to = from.plus_days(1 + static_cast<std::int32_t>(rng.below(3000)));
      rc.chains[ref].emplace_back(from, to);
      lines.push_back(version_line("BGB", ref.paragraph, from, to, "Text " + std::to_string(v)));
      if (to) from = *to;
    }
  }
  for (std::size_t i = lines.size(); i > 1; --i) std::swap(lines[i - 1], lines[rng.below(i)]);
  for (const auto& l : lines) rc.jsonl += l + "\n";
  return rc;
}

}  // namespace

TEST_CASE("corpus: fixture loads with the expected chains") {
  const auto& c = fixture_corpus();
  CHECK(c.provision_count() == 12);
  CHECK(c.version_count() == 18);
  auto chain = c.version_history({StatuteCode::kBGB, "574b"});
  REQUIRE(chain.size() == 2);
  CHECK(chain[0].text.find("schriftlich") != std::string::npos);
  CHECK(chain[1].text.find("Textform") != std::string::npos);
  CHECK(c.version_history({StatuteCode::kBGB, "126"}).size() == 1);
  CHECK(code_of([&] { c.version_history({StatuteCode::kBGB, "999x"}); }) == ErrorCode::kNotFound);
}

TEST_CASE("corpus: as-of resolution at the worked-example boundaries") {
  const auto& c = fixture_corpus();
  ProvisionRef b574b{StatuteCode::kBGB, "574b"}, s81a{StatuteCode::kStPO, "81a"}, h323{StatuteCode::kHGB, "323"};
  CHECK(c.resolve_as_of(b574b, d("2025-02-20")).valid_from == d("2025-01-01"));
  CHECK(c.resolve_as_of(b574b, d("2024-12-31")).valid_from == d("2001-09-01"));
  CHECK(c.resolve_as_of(b574b, d("2025-01-01")).valid_from == d("2025-01-01"));
  CHECK(c.resolve_as_of(s81a, d("2017-03-03")).valid_to == d("2017-08-24"));
  CHECK(c.resolve_as_of(s81a, d("2017-08-24")).valid_from == d("2017-08-24"));
  CHECK(c.resolve_as_of(h323, d("2020-03-10")).text.find("eine Million Euro") != std::string::npos);
  CHECK(c.resolve_as_of(h323, d("2021-07-01")).text.find("1,5 Millionen Euro") != std::string::npos);
  CHECK(code_of([&] { c.resolve_as_of(s81a, d("2000-01-01")); }) == ErrorCode::kNotYetInForce);
}

TEST_CASE("corpus: transitions after a cutoff") {
  const auto& c = fixture_corpus();
  auto after = c.list_transitions(d("2024-11-01"));
  REQUIRE(after.size() == 2);
  std::vector<std::string> names;
  for (const auto& t : after) names.push_back(display(t.next.provision) + "@" + t.next.valid_from.iso());
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"§ 317 HGB@2025-02-01", "§ 574b BGB@2025-01-01"});
  CHECK(c.list_transitions().size() == 6);
  CHECK(c.list_transitions(d("2030-01-01")).empty());
  for (const auto& t : c.list_transitions()) CHECK(t.previous.valid_to == t.next.valid_from);
}

TEST_CASE("corpus: outlines") {
  const auto& c = fixture_corpus();
  auto leaves = toc_leaves(c.toc(StatuteCode::kHGB));
  std::vector<std::string> pars;
  for (const auto& l : leaves) pars.push_back(l.paragraph);
  CHECK(pars == std::vector<std::string>{"316", "317", "322", "323"});
  CHECK(code_of([&] { c.toc(StatuteCode::kAO); }) == ErrorCode::kNotFound);
  CHECK_FALSE(c.has_toc(StatuteCode::kEStG));
}

TEST_CASE("corpus: ingest errors") {
  CHECK(ingest_corpus("").provision_count() == 0);
  auto both_open = version_line("BGB", "1", d("2000-01-01"), std::nullopt, "a") + "\n" +
                   version_line("BGB", "1", d("2001-01-01"), std::nullopt, "b") + "\n";
  CHECK(code_of([&] { ingest_corpus(both_open); }) == ErrorCode::kChainViolation);
  auto gap = version_line("BGB", "1", d("2000-01-01"), d("2000-06-01"), "a") + "\n" +
             version_line("BGB", "1", d("2000-07-01"), std::nullopt, "b") + "\n";
  CHECK(code_of([&] { ingest_corpus(gap); }) == ErrorCode::kChainViolation);
  auto overlap = version_line("BGB", "1", d("2000-01-01"), d("2000-08-01"), "a") + "\n" +
                 version_line("BGB", "1", d("2000-07-01"), std::nullopt, "b") + "\n";
  CHECK(code_of([&] { ingest_corpus(overlap); }) == ErrorCode::kChainViolation);
  CHECK(code_of([&] { ingest_corpus(version_line("XYZ", "1", d("2000-01-01"), std::nullopt, "a")); }) ==
        ErrorCode::kUnknownStatute);
  try {
    ingest_corpus(version_line("BGB", "1", d("2000-01-01"), std::nullopt, "a") + "\n{not json\n");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  auto dangling = std::string(R"({"statute":"AO","toc":{"label":"AO","heading":"","children":[{"label":"§ 1","heading":"x","paragraph":"1","children":[]}]}})");
  CHECK(code_of([&] { ingest_corpus(dangling); }) == ErrorCode::kMalformedRecord);
}

TEST_CASE("corpus: repealed versions carry no text") {
  auto lines = version_line("BGB", "7", d("2000-01-01"), d("2010-01-01"), "alt") + "\n" +
               R"({"statute":"BGB","paragraph":"7","heading":"","valid_from":"2010-01-01","valid_to":null,"text":"","repealed":true})" + "\n";
  auto c = ingest_corpus(lines);
  CHECK(c.current_version({StatuteCode::kBGB, "7"}).repealed);
  auto bad = version_line("BGB", "7", d("2000-01-01"), std::nullopt, "x");
  bad.insert(bad.size() - 1, R"(,"repealed":true)");
  CHECK(code_of([&] { ingest_corpus(bad); }) == ErrorCode::kMalformedRecord);
}

TEST_CASE("corpus: single-leaf outline round-trips byte for byte") {
  auto src = version_line("AO", "1", d("1977-01-01"), std::nullopt, "Anwendungsbereich") + "\n" +
             R"({"statute":"AO","toc":{"label":"AO","heading":"Abgabenordnung","children":[{"label":"§ 1","heading":"Anwendungsbereich","paragraph":"1","children":[]}]}})" + "\n";
  auto once = ingest_corpus(src).serialize();
  CHECK(ingest_corpus(once).serialize() == once);
}

TEST_CASE("corpus property: serialize is a fixpoint and resolution matches a linear scan") {
  SplitMix64 rng(2024);
  for (int round = 0; round < 60; ++round) {
    auto rc = random_corpus(rng);
    auto c = ingest_corpus(rc.jsonl);
    auto once = c.serialize();
    REQUIRE(ingest_corpus(once).serialize() == once);
    for (const auto& [ref, spans] : rc.chains) {
      for (int q = 0; q < 20; ++q) {
        Date probe = spans.front().first.plus_days(static_cast<std::int32_t>(rng.below(30000)) - 500);
        std::optional<Date> expect;
        for (const auto& [from, to] : spans) {
          if (from <= probe && (!to || probe < *to)) expect = from;
        }
        if (expect) {
          CHECK(c.resolve_as_of(ref, probe).valid_from == *expect);
        } else {
          CHECK(code_of([&] { c.resolve_as_of(ref, probe); }) == ErrorCode::kNotYetInForce);
        }
      }
    }
  }
}

TEST_CASE("corpus: statute tokens") {
  CHECK(parse_statute("HGB") == StatuteCode::kHGB);
  CHECK_FALSE(parse_statute("hgb"));
  CHECK(statute_name(StatuteCode::kHGB) == "Handelsgesetzbuch");
  CHECK(display({StatuteCode::kBGB, "574b"}) == "§ 574b BGB");
}
