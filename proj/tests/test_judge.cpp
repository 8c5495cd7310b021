#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>

#include "asof/judge.hpp"
#include "asof/util.hpp"
#include "sim.hpp"

using namespace asof;
using asof::testing::mock_config;
using asof::testing::simple_pair;

namespace {

Date d(const char* iso) { return Date::parse_iso(iso); }

const PromptSet kPrompts = PromptSet::defaults();

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

// Oracles: textbook formulas in long double, written independently of the library.
long double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

int quarter_bin(double v) { return static_cast<int>(std::lround(v * 4.0 + 1e-12 * (v >= 0 ? 1 : -1))); }

long double naive_kappa(const std::vector<double>& x, const std::vector<double>& y) {
  long double m[5][5] = {};
  for (std::size_t i = 0; i < x.size(); ++i) m[quarter_bin(x[i])][quarter_bin(y[i])] += 1;
  long double n = x.size(), po = 0, pe = 0;
  for (int a = 0; a < 5; ++a) {
    po += m[a][a] / n;
    long double r = 0, c = 0;
    for (int b = 0; b < 5; ++b) {
      r += m[a][b];
      c += m[b][a];
    }
    pe += (r / n) * (c / n);
  }
  return (po - pe) / (1 - pe);
}

std::string scores_reply(double o, double r, double b, double v) {
  return "```json\n" + nlohmann::json{{"outcome", o}, {"reasoning", r}, {"basis", b}, {"version", v}, {"rationale", "x"}}.dump() +
         "\n```";
}

}  // namespace

TEST_CASE("judge: score parsing") {
  auto s = parse_judge_scores(scores_reply(1, 0.75, 0.5, 0));
  CHECK(s.outcome == 1.0);
  CHECK(s.reasoning == 0.75);
  CHECK(s.basis == 0.5);
  CHECK(s.version == 0.0);
  CHECK(s.get(Criterion::kReasoning) == 0.75);
  CHECK(code_of([] { parse_judge_scores(scores_reply(1.3, 0, 0, 0)); }) == ErrorCode::kUnparseableScores);
  CHECK(code_of([] { parse_judge_scores(R"({"outcome": 1, "reasoning": 1, "basis": 1})"); }) ==
        ErrorCode::kUnparseableScores);
  CHECK(code_of([] { parse_judge_scores(R"({"outcome": "gut", "reasoning": 1, "basis": 1, "version": 1})"); }) ==
        ErrorCode::kUnparseableScores);
  CHECK(code_of([] { parse_judge_scores("Sehr gut."); }) == ErrorCode::kUnparseableScores);
}

TEST_CASE("judge: one retry on an unparseable reply") {
  auto qa = simple_pair("q", "Am 1.1.2020 Frage?", QACategory::kPreAmendment, d("2020-01-01"));
  std::atomic<int> calls{0};
  MockChat flaky(mock_config("judge"), [&](const ChatExchange& ex) -> std::optional<std::string> {
    ++calls;
    if (ex.user_prompt.find("could not be parsed") == std::string::npos) return "Ich vergebe volle Punkte.";
    return scores_reply(1, 1, 0.5, 0.5);
  });
  auto s = judge_answer(flaky, qa, "Antwort", kPrompts);
  CHECK(calls.load() == 2);
  CHECK(s.basis == 0.5);
  CHECK(s.judge_model_id == "judge");

  MockChat stubborn(mock_config("judge"));
  stubborn.set_default("keine Ahnung");
  CHECK(code_of([&] { judge_answer(stubborn, qa, "Antwort", kPrompts); }) == ErrorCode::kUnparseableScores);
  CHECK(stubborn.call_count() == 2);
  CHECK(code_of([&] { judge_answer(stubborn, qa, "  ", kPrompts); }) == ErrorCode::kPrecondition);
}

TEST_CASE("judge: the prompt carries question, reference and candidate") {
  auto qa = simple_pair("q", "Am 1.1.2020 Frage?", QACategory::kPreAmendment, d("2020-01-01"));
  std::string seen;
  MockChat judge(mock_config("judge"), [&](const ChatExchange& ex) -> std::optional<std::string> {
    seen = ex.user_prompt;
    return scores_reply(1, 1, 1, 1);
  });
  judge_answer(judge, qa, "Kandidat", kPrompts);
  CHECK(seen.find("Am 1.1.2020 Frage?") != std::string::npos);
  CHECK(seen.find("Referenzantwort zu q") != std::string::npos);
  CHECK(seen.find("Kandidat") != std::string::npos);
}

TEST_CASE("judge: judge_records fills scores and skips errors") {
  std::vector<QAPair> ds{simple_pair("a", "Am 1.1.2020 A?", QACategory::kPostCutoff, d("2020-01-01")),
                         simple_pair("b", "Am 1.1.2020 B?", QACategory::kPostCutoff, d("2020-01-01"))};
  std::vector<RunRecord> recs(4);
  recs[0].qa_id = "a";
  recs[0].answer_text = "x";
  recs[1].qa_id = "b";
  recs[1].error = RecordError{ErrorCode::kNoDateFound, "no date"};
  recs[2].qa_id = "ghost";
  recs[2].answer_text = "x";
  recs[3].qa_id = "b";
  recs[3].answer_text = "x";
  recs[3].scores = JudgeScores{};
  MockChat judge(mock_config("judge"));
  judge.set_default(scores_reply(1, 0.5, 1, 0.25));
  auto s = judge_records(recs, ds, judge, kPrompts, 2);
  CHECK(s.scored == 1);
  CHECK(s.skipped_errors == 1);
  CHECK(s.already_scored == 1);
  CHECK(s.failures == 1);
  REQUIRE(recs[0].scores);
  CHECK(recs[0].scores->version == 0.25);
  CHECK_FALSE(recs[1].scores);
}

TEST_CASE("judge: pearson") {
  CHECK(pearson_r({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pearson_r({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pearson_r({1, 2, 3, 4, 5}, {1, 3, 2, 5, 4}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(pearson_r({1, 2, 3, 4}, {2, 4, 5, 4}) == doctest::Approx(0.7181848464596079).epsilon(1e-12));
  CHECK(pearson_r({0.1, 0.7, 0.3}, {0.1, 0.7, 0.3}) == doctest::Approx(1.0));
  CHECK(code_of([] { pearson_r({1}, {1}); }) == ErrorCode::kDegenerateInput);
  CHECK(code_of([] { pearson_r({1, 1, 1}, {1, 2, 3}); }) == ErrorCode::kDegenerateInput);
  CHECK(code_of([] { pearson_r({1, 2}, {1, 2, 3}); }) == ErrorCode::kDegenerateInput);
}

TEST_CASE("judge: kappa and error measures") {
  auto b = KappaBins::binary();
  CHECK(cohens_kappa({0, 0, 1, 1}, {0, 1, 1, 1}, b) == doctest::Approx(0.5));
  CHECK(cohens_kappa({0, 1, 0, 1}, {0, 0, 1, 1}, b) == doctest::Approx(0.0));
  CHECK(cohens_kappa({1, 1, 1, 0}, {1, 1, 0, 0}, b) == doctest::Approx(0.5));
  CHECK(cohens_kappa({1, 1, 0, 0}, {1, 0, 0, 1}, b) == doctest::Approx(0.0));
  CHECK(cohens_kappa({0.5, 0.5}, {0.5, 0.5}) == 1.0);
  CHECK(code_of([] { cohens_kappa({}, {}); }) == ErrorCode::kDegenerateInput);
  auto q = KappaBins::quarters();
  CHECK(q.bin(0.0) == 0);
  CHECK(q.bin(0.2) == 1);
  CHECK(q.bin(0.25) == 1);
  CHECK(q.bin(0.5) == 2);
  CHECK(q.bin(1.0) == 4);
  CHECK(b.bin(0.49) == 0);
  CHECK(b.bin(0.5) == 1);

  CHECK(mean_absolute_error({0, 0.5, 1, 0.75}, {0, 0.5, 0.5, 0.75}) == doctest::Approx(0.125));
  CHECK(mean_absolute_error({0, 0, 0}, {1, 1, 1}) == 1.0);
  CHECK(mean_absolute_error({0.5, 1.0}, {0.25, 1.0}) == 0.125);
  CHECK(mean_bias({0.5, 1}, {0, 0.5}) == doctest::Approx(0.5));
  CHECK(code_of([] { mean_absolute_error({}, {}); }) == ErrorCode::kDegenerateInput);
}

TEST_CASE("judge property: agreement statistics match naive oracles") {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 2 + rng.below(60);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.below(5)) / 4.0;
      y[i] = rng.unit() < 0.6 ? x[i] : static_cast<double>(rng.below(5)) / 4.0;
    }
    bool flat = std::set<double>(x.begin(), x.end()).size() < 2 || std::set<double>(y.begin(), y.end()).size() < 2;
    if (!flat) CHECK(pearson_r(x, y) == doctest::Approx(static_cast<double>(naive_pearson(x, y))).epsilon(1e-12));
    if (!flat) CHECK(cohens_kappa(x, y) == doctest::Approx(static_cast<double>(naive_kappa(x, y))).epsilon(1e-12));
    CHECK(cohens_kappa(x, x) == 1.0);
    CHECK(pearson_r(x, y) == doctest::Approx(pearson_r(y, x)));
  }
}

TEST_CASE("judge: ratings CSV, pairing, report") {
  const std::string csv =
      "rater_id,qa_id,model_id,setting,criterion,score\n"
      "r1,a,m,vanilla,outcome,1\n"
      "r1,a,m,vanilla,version,0.5\n"
      "r2,b,m,\"rag_knn\",outcome,0\n"
      "r2,b,m,rag_knn,version,0.25\n";
  auto h = parse_human_ratings_csv(csv);
  REQUIRE(h.size() == 4);
  CHECK(h[1].criterion == Criterion::kVersion);
  CHECK(h[2].setting == "rag_knn");

  try {
    parse_human_ratings_csv("qa_id,model_id,setting,criterion,score,rater_id\na,m,vanilla,outcome,1.5,r\n");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMalformedRecord);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(code_of([] { parse_human_ratings_csv("qa_id,score\n"); }) == ErrorCode::kMalformedRecord);
  CHECK(code_of([] { parse_human_ratings_csv("qa_id,model_id,setting,criterion,score,rater_id\na,m,v,taste,1,r\n"); }) ==
        ErrorCode::kMalformedRecord);

  std::vector<QAPair> ds{simple_pair("a", "Am 1.1.2020 A?", QACategory::kPostCutoff, d("2020-01-01")),
                         simple_pair("b", "Am 1.1.2020 B?", QACategory::kMultiProvision, d("2020-01-01"))};
  std::vector<RunRecord> recs(2);
  recs[0].qa_id = "a";
  recs[0].model_id = "m";
  recs[0].scores = JudgeScores{1, 1, 1, 0.5, "j", ""};
  recs[1].qa_id = "b";
  recs[1].model_id = "m";
  recs[1].setting = Setting{SettingKind::kRagKnn};
  recs[1].scores = JudgeScores{0.25, 0, 0, 0.25, "j", ""};
  auto paired = pair_ratings(h, recs, ds);
  REQUIRE(paired.size() == 4);
  CHECK(paired[0].judge == 1.0);
  CHECK(paired[2].judge == 0.25);
  CHECK(paired[2].category == QACategory::kMultiProvision);

  auto report = validate_judge(paired);
  CHECK(report.overall.n == 4);
  CHECK(report.overall.mae == doctest::Approx(0.0625));
  CHECK(report.per_criterion.at("outcome").n == 2);
  CHECK(report.per_setting.at("rag_knn").n == 2);
  CHECK(report.kappa_binning == "quarters");
  nlohmann::json j = report;
  CHECK(j["overall"]["n"] == 4);

  auto missing = h;
  missing[0].model_id = "other";
  CHECK(code_of([&] { pair_ratings(missing, recs, ds); }) == ErrorCode::kUnmatchedRatings);
}

TEST_CASE("judge: stratified sample") {
  std::vector<QAPair> ds;
  for (int i = 0; i < 60; ++i) {
    auto p = simple_pair("p" + std::to_string(i), "Am 1.1.2020 x", kAllCategories[static_cast<std::size_t>(i) % 3],
                         d("2020-01-01"));
    p.statute = i % 2 == 0 ? StatuteCode::kBGB : StatuteCode::kHGB;
    ds.push_back(p);
  }
  auto s = stratified_sample(ds, 12, 5);
  REQUIRE(s.size() == 12);
  std::map<std::pair<QACategory, StatuteCode>, int> per;
  std::set<std::string> ids;
  for (const auto& p : s) {
    ++per[{p.category, p.statute}];
    ids.insert(p.id);
  }
  CHECK(ids.size() == 12);
  CHECK(per.size() == 6);
  for (const auto& [_, c] : per) CHECK(c == 2);
  CHECK(stratified_sample(ds, 12, 5)[3].id == s[3].id);
  CHECK(stratified_sample(ds, 500, 5).size() == 60);
}
