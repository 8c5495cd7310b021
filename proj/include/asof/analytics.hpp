#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asof/harness.hpp"
#include "asof/qagen.hpp"
#include "asof/scores.hpp"

namespace asof {

/// A criterion score counts as perfect when within this distance of 1.0.
inline constexpr double kPerfectTolerance = 1e-9;
inline constexpr double kSignificanceLevel = 0.05;

bool is_perfect(double score);

struct MetricRow {
  std::string model_id;
  QACategory category = QACategory::kPostCutoff;
  std::string setting;  // label
  SettingKind kind = SettingKind::kVanilla;
  std::size_t n = 0;         // error-free records in the cell
  std::size_t scored = 0;    // of those, with judge scores
  std::size_t refusals = 0;  // RC
  std::array<std::size_t, 4> perfect{};
  std::array<double, 4> percent{};  // 100 * perfect / n
  std::array<double, 4> mean{};     // over scored records; NaN when none
};

struct MetricTable {
  std::vector<MetricRow> rows;  // ordered by (model, category, setting)
  std::size_t excluded_errors = 0;
  std::size_t unknown_questions = 0;
};

/// Both the perfect-score percentages and the criterion means per cell.
MetricTable aggregate_metrics(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset);
MetricTable perfect_score_table(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset);
MetricTable metric_means(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset);

/// "%.2f"
std::string format_percent(double pct);
/// Aligned text mirroring the results table: CO % | R % | LB % | V % | RC | n.
std::string render_perfect_text(const MetricTable& t);
std::string render_perfect_csv(const MetricTable& t);
/// Four decimals.
std::string render_means_text(const MetricTable& t);
std::string render_means_csv(const MetricTable& t);

// ---------------------------------------------------------------------------

/// Regularized incomplete beta I_x(a, b) by continued fraction (modified
/// Lentz). DomainError unless a, b > 0 and 0 <= x <= 1.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom. DomainError for df <= 0 or non-finite input.
double student_t_sf(double t, double df);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
  double mean1 = 0.0, mean2 = 0.0;
  double var1 = 0.0, var2 = 0.0;  // sample variances
  std::size_t n1 = 0, n2 = 0;
};

/// DegenerateInput when either group has fewer than two values or both
/// variances are zero.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

void to_json(nlohmann::json& j, const WelchResult& w);

struct Comparison {
  std::string model_id;
  std::string scope;  // category or setting held fixed
  std::string group_a;
  std::string group_b;
  Criterion criterion = Criterion::kOutcome;
  std::optional<WelchResult> result;
  std::string note;  // why a test was not possible

  bool significant() const { return result && result->p_two_sided < kSignificanceLevel; }
};

/// For each model and criterion, every pair of settings on per-question
/// scores, optionally restricted to one category.
std::vector<Comparison> setting_comparisons(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                                            std::optional<QACategory> category = std::nullopt);
/// For each model, setting and criterion: category a vs category b.
std::vector<Comparison> category_comparisons(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                                             QACategory a, QACategory b);
std::string render_comparisons_text(const std::vector<Comparison>& cs);
std::string render_comparisons_csv(const std::vector<Comparison>& cs);

// ---------------------------------------------------------------------------

Date default_recency_midpoint();
/// 1 when fact_date < midpoint, else 2.
int recency_interval(Date fact_date, Date midpoint);

struct RecencyCell {
  std::string model_id;
  std::string setting;
  Criterion criterion = Criterion::kOutcome;
  std::size_t n1 = 0, n2 = 0;
  double mean1 = 0.0, mean2 = 0.0;  // NaN for an empty side
  double delta = 0.0;               // mean2 - mean1
  std::optional<WelchResult> welch;
  std::string note;
};

struct RecencyReport {
  Date midpoint;
  std::size_t n = 0;
  std::size_t interval1 = 0;
  std::size_t interval2 = 0;
  std::vector<RecencyCell> cells;
};

/// Scored, error-free records whose question is in one of `categories`
/// (all when empty).
RecencyReport recency_split(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                            Date midpoint = default_recency_midpoint(), std::vector<QACategory> categories = {});
std::string render_recency_text(const RecencyReport& r);
std::string render_recency_csv(const RecencyReport& r);

// ---------------------------------------------------------------------------

struct SpreadEntry {
  std::string group;
  std::string model_id;
  std::string setting;
  Criterion criterion = Criterion::kOutcome;
  std::size_t members = 0;
  double spread = 0.0;  // max - min
};

struct DuplicateReport {
  std::vector<SpreadEntry> entries;
  std::size_t groups = 0;
  double mean_spread = 0.0;
  double max_spread = 0.0;
  std::size_t zero_spread = 0;
};

/// Spread of scores inside each duplicate group, per model, setting and
/// criterion; only cells with at least two scored members.
DuplicateReport duplicate_consistency(const std::vector<RunRecord>& records, const std::vector<QAPair>& dataset);
std::string render_duplicates_text(const DuplicateReport& r);
std::string render_duplicates_csv(const DuplicateReport& r);

}  // namespace asof
