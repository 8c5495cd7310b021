#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace asof {

inline constexpr std::string_view kDefaultRefusalSentinel =
    "The information provided is not sufficient to answer the question";

/// Prompt templates. `{name}` placeholders are filled by the callers; the
/// defaults are English instructions around German legal material and can be
/// overridden key-by-key from a JSON file.
struct PromptSet {
  // Answering (all four settings).
  std::string answer_system;
  std::string answer_vanilla;
  std::string answer_with_context;
  std::string answer_with_snippets;

  // Retrieval steps.
  std::string identify_statute;
  std::string toc_select;

  // Dataset synthesis.
  std::string generation_system;
  std::string classify_transition;
  std::string generate_post_cutoff;
  std::string generate_pre_amendment;
  std::string multi_select;
  std::string multi_draft;
  std::string multi_temporalize;

  // Judging.
  std::string judge_system;
  std::string judge_user;
  std::string judge_retry_suffix;

  static PromptSet defaults();
  /// Defaults overlaid with the keys present in `overrides`.
  static PromptSet from_json(const nlohmann::json& overrides);
  static PromptSet load(const std::filesystem::path& path);
};

/// First JSON object in a model reply: a ```json fenced block if present,
/// otherwise the span from the first '{' to the last '}'.
std::optional<nlohmann::json> extract_json_block(std::string_view reply);

}  // namespace asof
