#include "asof/scores.hpp"

#include <cmath>

#include "asof/error.hpp"

namespace asof {

using nlohmann::json;

namespace {
constexpr std::array<std::string_view, 4> kNames = {"outcome", "reasoning", "basis", "version"};
constexpr std::array<std::string_view, 4> kColumns = {"CO", "R", "LB", "V"};
}  // namespace

std::string_view to_string(Criterion c) { return kNames[static_cast<std::size_t>(c)]; }
std::string_view column_label(Criterion c) { return kColumns[static_cast<std::size_t>(c)]; }

std::optional<Criterion> parse_criterion(std::string_view s) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == s || kColumns[i] == s) return static_cast<Criterion>(i);
  }
  return std::nullopt;
}

double JudgeScores::get(Criterion c) const {
  switch (c) {
    case Criterion::kOutcome: return outcome;
    case Criterion::kReasoning: return reasoning;
    case Criterion::kBasis: return basis;
    case Criterion::kVersion: return version;
  }
  return 0.0;
}

void to_json(json& j, const JudgeScores& s) {
  j = json{{"outcome", s.outcome},
           {"reasoning", s.reasoning},
           {"basis", s.basis},
           {"version", s.version},
           {"judge_model_id", s.judge_model_id},
           {"rationale", s.rationale}};
}

void from_json(const json& j, JudgeScores& s) {
  auto read = [&](std::string_view key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number())
      fail(ErrorCode::kUnparseableScores, "score '" + std::string(key) + "' missing or not a number");
    double v = it->get<double>();
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      fail(ErrorCode::kUnparseableScores, "score '" + std::string(key) + "' outside [0, 1]");
    return v;
  };
  s.outcome = read("outcome");
  s.reasoning = read("reasoning");
  s.basis = read("basis");
  s.version = read("version");
  s.judge_model_id = j.contains("judge_model_id") && j["judge_model_id"].is_string() ? j["judge_model_id"].get<std::string>() : "";
  s.rationale = j.contains("rationale") && j["rationale"].is_string() ? j["rationale"].get<std::string>() : "";
}

}  // namespace asof
