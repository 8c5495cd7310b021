#include <doctest.h>

#include <atomic>
#include <set>

#include "asof/error.hpp"
#include "asof/qagen.hpp"
#include "sim.hpp"

using namespace asof;
using asof::testing::fixture_corpus;
using asof::testing::make_generator;
using asof::testing::mock_config;
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

std::string verdict(bool substantive) {
  return substantive ? R"({"substantive": true, "changed_aspects": ["requirements"], "rationale": "Form geändert"})"
                     : R"({"substantive": false, "changed_aspects": [], "rationale": "redaktionell"})";
}

std::string qa(const std::string& q, const std::string& a) { return json{{"question", q}, {"answer", a}}.dump(); }

const PromptSet kPrompts = PromptSet::defaults();

}  // namespace

TEST_CASE("qagen: verdict parsing") {
  auto v = parse_substantive_verdict("Ergebnis:\n```json\n" + verdict(true) + "\n```");
  CHECK(v.substantive);
  CHECK(v.changed_aspects == std::vector<ChangeAspect>{ChangeAspect::kRequirements});
  CHECK_FALSE(parse_substantive_verdict(verdict(false)).substantive);
  CHECK(code_of([] { parse_substantive_verdict("I think it is substantive."); }) == ErrorCode::kUnparseableVerdict);
  CHECK(code_of([] { parse_substantive_verdict(R"({"substantive": true, "changed_aspects": []})"); }) ==
        ErrorCode::kUnparseableVerdict);
  CHECK(code_of([] { parse_substantive_verdict(R"({"substantive": true, "changed_aspects": ["vibes"]})"); }) ==
        ErrorCode::kUnparseableVerdict);
}

TEST_CASE("qagen: classify_transition on the form change and on a punctuation edit") {
  auto gen = make_generator();
  auto ts = fixture_corpus().list_transitions(d("2024-11-01"));
  for (auto& t : ts) {
    auto v = classify_transition(*gen, t, kPrompts);
    REQUIRE(t.substantive);
    if (t.next.provision.paragraph == "574b") {
      CHECK(v.substantive);
      CHECK(v.changed_aspects == std::vector<ChangeAspect>{ChangeAspect::kRequirements});
    } else {
      CHECK(t.next.provision.paragraph == "317");
      CHECK_FALSE(v.substantive);
    }
  }
}

TEST_CASE("qagen: scripted post-cutoff worked example") {
  MockChat chat(mock_config("gen"));
  chat.add_rule("versions of § 574b BGB", verdict(true));
  chat.add_rule("versions of § 317 HGB", verdict(false));
  chat.add_rule("NEXT version of § 574b BGB",
                qa("Am 10. Februar 2025 erhält Mieter M die Kündigung seines Vermieters V. Am 20. Februar 2025 "
                   "widerspricht M per E-Mail. Ist der Widerspruch formwirksam?",
                   "Ja. Seit dem 1. Januar 2025 genügt nach § 574b Abs. 1 S. 1 BGB die Textform."));
  GenerationOptions opts;
  opts.seed = 1;
  auto p = gen_post_cutoff(fixture_corpus(), chat, opts, kPrompts);
  CHECK(p.fact_date == d("2025-02-20"));
  REQUIRE(p.target_versions.size() == 1);
  CHECK(p.target_versions[0].provision == ProvisionRef{StatuteCode::kBGB, "574b"});
  CHECK(p.target_versions[0].valid_from == d("2025-01-01"));
  CHECK(p.generation_trace.cutoff == d("2024-11-01"));
  CHECK(p.category == QACategory::kPostCutoff);
  CHECK(p.review.status == ReviewStatus::kPending);
  CHECK(p.id == make_pair_id(QACategory::kPostCutoff, p.question));
  CHECK_FALSE(structural_violation(p, opts.cutoff));
  CHECK_FALSE(p.generation_trace.steps.empty());
}

TEST_CASE("qagen: scripted pre-amendment worked example") {
  MockChat chat(mock_config("gen"));
  chat.add_rule("versions of § 81a StPO", verdict(true));
  chat.add_rule("Compare two consecutive versions", verdict(false));
  chat.add_rule("OLDER version of § 81a StPO",
                qa("Am 3.3.2017 wird B wegen Trunkenheit im Verkehr kontrolliert. Die Polizei ordnet ohne "
                   "Richter eine Blutprobe an. Rechtmäßig?",
                   "Nein, nach § 81a Abs. 2 StPO in der damaligen Fassung bedurfte es einer richterlichen Anordnung."));
  GenerationOptions opts;
  opts.max_attempts = 60;
  auto p = gen_pre_amendment(fixture_corpus(), chat, opts, kPrompts);
  CHECK(p.fact_date == d("2017-03-03"));
  REQUIRE(p.target_versions.size() == 1);
  CHECK(p.target_versions[0].valid_to == d("2017-08-24"));
  CHECK(p.statute == StatuteCode::kStPO);
}

TEST_CASE("qagen: scripted multi-provision worked example") {
  MockChat chat(mock_config("gen"));
  chat.add_rule("The anchor paragraph is", "§ 316, § 317, § 322, § 323");
  chat.add_rule("versions of § 323 HGB", verdict(true));
  chat.add_rule("Compare two consecutive versions", verdict(false));
  chat.add_rule("Write a temporally neutral",
                qa("Die A-AG lässt ihren Jahresabschluss prüfen; Prüfer P handelt fahrlässig. Welche Ansprüche "
                   "bestehen?",
                   "Haftung nach § 323 HGB, begrenzt auf 1,5 Millionen Euro."));
  chat.add_rule("Rewrite the draft case",
                qa("Am 10.03.2020 erteilt Prüfer P der A-AG fahrlässig einen falschen Bestätigungsvermerk. Welche "
                   "Ansprüche bestehen?",
                   "Haftung nach § 323 Abs. 2 HGB, damals begrenzt auf eine Million Euro."));
  GenerationOptions opts;
  opts.statute = StatuteCode::kHGB;
  auto p = gen_multi_provision(fixture_corpus(), chat, opts, kPrompts);
  CHECK(p.fact_date == d("2020-03-10"));
  REQUIRE(p.target_versions.size() == 4);
  std::map<std::string, TargetVersion> by;
  for (const auto& t : p.target_versions) by[t.provision.paragraph] = t;
  CHECK(by.at("323").valid_to == d("2021-07-01"));
  CHECK(by.at("316").valid_from == d("2016-06-17"));
  CHECK_FALSE(by.at("316").valid_to);
  CHECK_FALSE(by.at("322").valid_to);
  CHECK(by.at("317").valid_to == d("2025-02-01"));
  std::vector<std::string> stages;
  for (const auto& s : p.generation_trace.steps) stages.push_back(s.stage);
  CHECK(std::find(stages.begin(), stages.end(), "temporalize") != stages.end());
}

TEST_CASE("qagen: failure paths") {
  const auto& corpus = fixture_corpus();
  GenerationOptions opts;
  opts.max_attempts = 5;
  MockChat editorial(mock_config("gen"));
  editorial.add_rule("Compare two consecutive versions", verdict(false));
  CHECK(code_of([&] { gen_post_cutoff(corpus, editorial, opts, kPrompts); }) == ErrorCode::kExhausted);

  auto late = opts;
  late.cutoff = d("2030-01-01");
  CHECK(code_of([&] { gen_post_cutoff(corpus, editorial, late, kPrompts); }) == ErrorCode::kNoCandidates);

  auto single = ingest_corpus(
      R"({"statute":"BGB","paragraph":"1","heading":"","valid_from":"2000-01-01","valid_to":null,"text":"x"})");
  CHECK(code_of([&] { gen_pre_amendment(single, editorial, opts, kPrompts); }) == ErrorCode::kNoCandidates);

  auto ao = opts;
  ao.statute = StatuteCode::kAO;
  CHECK(code_of([&] { gen_multi_provision(corpus, editorial, ao, kPrompts); }) == ErrorCode::kNoCandidates);

  MockChat flat(mock_config("gen"));
  flat.add_rule("The anchor paragraph is", "§ 81, § 81c");
  flat.add_rule("Compare two consecutive versions", verdict(false));
  auto stpo = opts;
  stpo.statute = StatuteCode::kStPO;
  CHECK(code_of([&] { gen_multi_provision(corpus, flat, stpo, kPrompts); }) == ErrorCode::kExhausted);
}

TEST_CASE("qagen: a draft dated outside the historical interval is rejected and retried") {
  std::atomic<int> drafts{0};
  MockChat chat(mock_config("gen"), [&](const ChatExchange& ex) -> std::optional<std::string> {
    if (ex.user_prompt.find("OLDER version") == std::string::npos) return std::nullopt;
    return drafts++ == 0 ? qa("Am 1.9.2017 wird B kontrolliert.", "a") : qa("Am 1.9.2016 wird B kontrolliert.", "a");
  });
  chat.add_rule("versions of § 81a StPO", verdict(true));
  chat.add_rule("Compare two consecutive versions", verdict(false));
  GenerationOptions opts;
  opts.max_attempts = 80;
  auto p = gen_pre_amendment(fixture_corpus(), chat, opts, kPrompts);
  CHECK(p.fact_date == d("2016-09-01"));
  CHECK(drafts.load() == 2);
  bool noted = false;
  for (const auto& n : p.generation_trace.notes) noted |= n.find("draft rejected") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("qagen property: simulated generator satisfies the structural invariants") {
  auto gen = make_generator();
  for (auto cat : kAllCategories) {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      GenerationOptions opts;
      opts.seed = seed;
      auto p = generate_pair(cat, fixture_corpus(), *gen, opts, kPrompts);
      CHECK_FALSE(structural_violation(p, opts.cutoff));
      CHECK(fact_date_of(p.question).date == p.fact_date);
      for (const auto& t : p.target_versions) CHECK(t.valid_at(p.fact_date));
    }
  }
}

TEST_CASE("qagen: structural violations are named") {
  QAPair p = asof::testing::simple_pair("x", "Am 1.1.2026 passiert etwas.", QACategory::kPostCutoff, d("2026-01-01"),
                                        {{{StatuteCode::kBGB, "574b"}, d("2025-01-01"), std::nullopt}});
  CHECK_FALSE(structural_violation(p, d("2024-11-01")));
  CHECK(structural_violation(p, d("2025-06-01")));
  p.fact_date = d("2026-01-02");
  CHECK(structural_violation(p, d("2024-11-01")));
  p.question = "kein Datum";
  CHECK(structural_violation(p, d("2024-11-01")));

  QAPair pre = asof::testing::simple_pair("y", "Am 1.1.2010 passiert etwas.", QACategory::kPreAmendment, d("2010-01-01"),
                                          {{{StatuteCode::kBGB, "126"}, d("2001-08-01"), std::nullopt}});
  CHECK(structural_violation(pre, d("2024-11-01")));
  QAPair multi = asof::testing::simple_pair("z", "Am 1.1.2010 passiert etwas.", QACategory::kMultiProvision,
                                            d("2010-01-01"),
                                            {{{StatuteCode::kBGB, "126"}, d("2001-08-01"), std::nullopt},
                                             {{StatuteCode::kBGB, "568"}, d("2001-09-01"), std::nullopt}});
  CHECK(structural_violation(multi, d("2024-11-01")));
}

TEST_CASE("qagen: duplicate groups follow shared amendment events") {
  CHECK(detect_duplicates({}).empty());
  TargetVersion new574b{{StatuteCode::kBGB, "574b"}, d("2025-01-01"), std::nullopt};
  TargetVersion old574b{{StatuteCode::kBGB, "574b"}, d("2001-09-01"), d("2025-01-01")};
  TargetVersion old126b{{StatuteCode::kBGB, "126b"}, d("2001-08-01"), d("2014-06-13")};
  auto a = asof::testing::simple_pair("a", "Am 20.2.2025 A", QACategory::kPostCutoff, d("2025-02-20"), {new574b});
  auto b = asof::testing::simple_pair("b", "Am 21.2.2025 B", QACategory::kPostCutoff, d("2025-02-21"), {new574b});
  auto c = asof::testing::simple_pair("c", "Am 1.1.2020 C", QACategory::kPreAmendment, d("2020-01-01"), {old574b});
  auto e = asof::testing::simple_pair("e", "Am 1.1.2010 E", QACategory::kPreAmendment, d("2010-01-01"), {old126b});
  auto out = detect_duplicates({a, b, c, e});
  REQUIRE(out[0].duplicate_group);
  CHECK(out[0].duplicate_group == out[1].duplicate_group);
  // The pre-amendment pair probes the same 2025-01-01 amendment.
  CHECK(out[2].duplicate_group == out[0].duplicate_group);
  CHECK_FALSE(out[3].duplicate_group);

  TargetVersion s316a{{StatuteCode::kHGB, "316"}, d("2009-05-29"), d("2016-06-17")};
  TargetVersion s323a{{StatuteCode::kHGB, "323"}, d("2009-05-29"), d("2021-07-01")};
  auto f = asof::testing::simple_pair("f", "Am 1.1.2012 F", QACategory::kPreAmendment, d("2012-01-01"), {s316a});
  auto g = asof::testing::simple_pair("g", "Am 1.1.2012 G", QACategory::kPreAmendment, d("2012-01-01"), {s323a});
  auto fg = detect_duplicates({f, g});
  CHECK_FALSE(fg[0].duplicate_group);
  CHECK_FALSE(fg[1].duplicate_group);
}

TEST_CASE("qagen: dataset serialization round trip") {
  auto gen = make_generator();
  std::vector<QAPair> pairs;
  for (auto cat : kAllCategories) {
    GenerationOptions opts;
    opts.seed = 7;
    pairs.push_back(generate_pair(cat, fixture_corpus(), *gen, opts, kPrompts));
  }
  pairs = detect_duplicates(pairs);
  auto text = serialize_dataset(pairs);
  auto back = parse_dataset(text);
  REQUIRE(back.size() == 3);
  CHECK(serialize_dataset(back) == text);
  CHECK(back[2].target_versions == pairs[2].target_versions);
  CHECK(back[0].generation_trace.steps.size() == pairs[0].generation_trace.steps.size());
  try {
    parse_dataset(text + "{\"id\": 3}\n");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}
