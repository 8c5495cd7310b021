#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asof/harness.hpp"
#include "asof/prompts.hpp"
#include "asof/providers.hpp"
#include "asof/qagen.hpp"
#include "asof/scores.hpp"

namespace asof {

/// Structured block -> scores. Throws UnparseableScores.
JudgeScores parse_judge_scores(std::string_view reply);

/// Scores one candidate. A reply that does not parse gets one re-prompt with
/// the retry suffix; a second failure raises UnparseableScores.
JudgeScores judge_answer(ChatProvider& judge, const QAPair& qa, const std::string& answer_text,
                         const PromptSet& prompts);

struct JudgeRunSummary {
  std::size_t scored = 0;
  std::size_t already_scored = 0;
  std::size_t skipped_errors = 0;  // records carrying an answer error
  std::size_t failures = 0;        // judge could not score
  std::vector<std::string> messages;
};

/// Fills `scores` on every unscored, error-free record. Records whose qa_id
/// is not in the dataset count as failures.
JudgeRunSummary judge_records(std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                              ChatProvider& judge, const PromptSet& prompts, int concurrency = 4);

// ---------------------------------------------------------------------------
// Agreement statistics

/// Sample Pearson correlation. DegenerateInput for n < 2, unequal lengths or
/// zero variance.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// Ordered bin edges; a value falls into bin i where i = #edges <= value.
struct KappaBins {
  std::string name;
  std::vector<double> edges;

  std::size_t bin(double v) const;
  std::size_t count() const { return edges.size() + 1; }

  /// Nearest of {0, .25, .5, .75, 1}.
  static KappaBins quarters();
  /// Below / at-or-above 0.5.
  static KappaBins binary();
};

/// Unweighted κ with marginal-product chance agreement. When chance
/// agreement is 1, returns 1 if observed agreement is 1 and throws
/// DegenerateInput otherwise.
double cohens_kappa(const std::vector<double>& x, const std::vector<double>& y,
                    const KappaBins& bins = KappaBins::quarters());

/// DegenerateInput on empty or unequal input.
double mean_absolute_error(const std::vector<double>& x, const std::vector<double>& y);
/// mean(x - y)
double mean_bias(const std::vector<double>& x, const std::vector<double>& y);

struct HumanRating {
  std::string qa_id;
  std::string model_id;
  std::string setting;  // setting label
  Criterion criterion = Criterion::kOutcome;
  double score = 0.0;
  std::string rater_id;
};

/// CSV with header qa_id,model_id,setting,criterion,score,rater_id (any
/// column order). Throws MalformedRecord naming the line.
std::vector<HumanRating> parse_human_ratings_csv(std::string_view csv);
std::vector<HumanRating> load_human_ratings_csv(const std::filesystem::path& path);

struct PairedRating {
  std::string qa_id;
  std::string model_id;
  std::string setting;
  Criterion criterion = Criterion::kOutcome;
  QACategory category = QACategory::kPostCutoff;
  StatuteCode statute = StatuteCode::kBGB;
  double judge = 0.0;
  double human = 0.0;
};

/// Joins each human rating with the judge score of the same
/// qa_id x model x setting x criterion. UnmatchedRatings when any is missing.
std::vector<PairedRating> pair_ratings(const std::vector<HumanRating>& human, const std::vector<RunRecord>& records,
                                       const std::vector<QAPair>& dataset);

struct AgreementStats {
  std::size_t n = 0;
  std::optional<double> pearson_r;  // absent when degenerate
  std::optional<double> kappa;
  double mae = 0.0;
  double mean_bias = 0.0;
};

struct AgreementReport {
  AgreementStats overall;
  std::map<std::string, AgreementStats> per_criterion;
  std::map<std::string, AgreementStats> per_category;
  std::map<std::string, AgreementStats> per_setting;
  std::string kappa_binning;
  std::vector<std::string> notes;
};

AgreementStats agreement(const std::vector<PairedRating>& pairs, const KappaBins& bins);
AgreementReport validate_judge(const std::vector<PairedRating>& pairs, const KappaBins& bins = KappaBins::quarters());

void to_json(nlohmann::json& j, const AgreementStats& s);
void to_json(nlohmann::json& j, const AgreementReport& r);

/// Draws `n` questions spread evenly over (category x statute) strata:
/// strata are visited round-robin in a fixed order, each shuffled with the seed.
std::vector<QAPair> stratified_sample(const std::vector<QAPair>& dataset, std::size_t n, std::uint64_t seed);

}  // namespace asof
