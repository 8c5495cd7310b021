#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace asof {

enum class Criterion { kOutcome, kReasoning, kBasis, kVersion };

inline constexpr std::array<Criterion, 4> kAllCriteria = {Criterion::kOutcome, Criterion::kReasoning, Criterion::kBasis,
                                                          Criterion::kVersion};

/// "outcome", "reasoning", "basis", "version"
std::string_view to_string(Criterion c);
/// Table column header: CO, R, LB, V.
std::string_view column_label(Criterion c);
std::optional<Criterion> parse_criterion(std::string_view s);

/// Rubric scores, each in [0, 1].
struct JudgeScores {
  double outcome = 0.0;
  double reasoning = 0.0;
  double basis = 0.0;
  double version = 0.0;
  std::string judge_model_id;
  std::string rationale;

  double get(Criterion c) const;
};

void to_json(nlohmann::json& j, const JudgeScores& s);
/// Throws UnparseableScores on missing, non-numeric, non-finite or out-of-range values.
void from_json(const nlohmann::json& j, JudgeScores& s);

}  // namespace asof
