#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asof/corpus.hpp"
#include "asof/datefinder.hpp"
#include "asof/prompts.hpp"
#include "asof/providers.hpp"

namespace asof {

enum class QACategory { kPostCutoff, kPreAmendment, kMultiProvision };

inline constexpr std::array<QACategory, 3> kAllCategories = {QACategory::kPostCutoff, QACategory::kPreAmendment,
                                                             QACategory::kMultiProvision};

std::string_view to_string(QACategory c);
std::optional<QACategory> parse_category(std::string_view s);

/// The four expert rejection grounds, in the order the review form lists them.
enum class RejectionReason { kEditorialOnly, kMultipleSubquestions, kOutcomeInvariant, kLegalError };
std::string_view to_string(RejectionReason r);
std::optional<RejectionReason> parse_rejection_reason(std::string_view s);

enum class ReviewStatus { kPending, kAccepted, kRejected };
std::string_view to_string(ReviewStatus s);
std::optional<ReviewStatus> parse_review_status(std::string_view s);

struct ReviewState {
  ReviewStatus status = ReviewStatus::kPending;
  std::vector<RejectionReason> reasons;  // non-empty iff rejected
  std::string reviewer;
  std::string decided_at;
  std::int64_t revision = 1;

  friend bool operator==(const ReviewState&, const ReviewState&) = default;
};

/// A version the reference answer depends on. `valid_to` is carried along so
/// a pair is self-describing without the corpus.
struct TargetVersion {
  ProvisionRef provision;
  Date valid_from;
  std::optional<Date> valid_to;

  bool valid_at(Date d) const { return valid_from <= d && (!valid_to || d < *valid_to); }
  friend bool operator==(const TargetVersion&, const TargetVersion&) = default;
};

struct GenerationStep {
  std::string stage;
  std::string system_prompt;
  std::string user_prompt;
  std::string transcript_id;
};

struct GenerationTrace {
  std::uint64_t seed = 0;
  int attempts = 0;
  std::optional<Date> cutoff;
  std::vector<GenerationStep> steps;
  std::vector<std::string> notes;
};

struct QAPair {
  std::string id;
  QACategory category = QACategory::kPostCutoff;
  StatuteCode statute = StatuteCode::kBGB;
  std::string question;
  std::string reference_answer;
  Date fact_date;
  std::vector<TargetVersion> target_versions;
  std::optional<std::string> duplicate_group;
  ReviewState review;
  GenerationTrace generation_trace;
};

/// Stable id from category and question text.
std::string make_pair_id(QACategory category, std::string_view question);

struct GenerationOptions {
  std::uint64_t seed = 0;
  int max_attempts = 20;
  Date cutoff = *Date::from_ymd(2024, 11, 1);
  std::optional<StatuteCode> statute;  // multi-provision anchor statute
  std::size_t max_select = 8;
  AsOfPolicy as_of_policy = AsOfPolicy::kLatest;
};

/// Parses the structured verdict block. Throws UnparseableVerdict when the
/// block is missing, malformed, or substantive=true with no aspects.
SubstantiveVerdict parse_substantive_verdict(std::string_view reply);
/// Classifies and stores the verdict onto `t`.
SubstantiveVerdict classify_transition(ChatProvider& chat, VersionTransition& t, const PromptSet& prompts);

QAPair gen_post_cutoff(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                       const PromptSet& prompts);
QAPair gen_pre_amendment(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                         const PromptSet& prompts);
QAPair gen_multi_provision(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                           const PromptSet& prompts);
QAPair generate_pair(QACategory category, const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                     const PromptSet& prompts);

/// Structural checks on a finished pair; nullopt when it passes. Covers the
/// fact-date round trip, validity of every target at the fact date, and the
/// category-specific shape.
std::optional<std::string> structural_violation(const QAPair& pair, Date cutoff,
                                                AsOfPolicy policy = AsOfPolicy::kLatest);

/// Amendment events a pair probes: (provision, date the newer version took effect).
std::vector<std::pair<ProvisionRef, Date>> amendment_events(const QAPair& pair);

/// Pairs connected through a shared amendment event (transitively) get one
/// group id ("dup-" + hash of the smallest member id); singletons get none.
std::vector<QAPair> detect_duplicates(std::vector<QAPair> pairs);

void to_json(nlohmann::json& j, const ReviewState& s);
void from_json(const nlohmann::json& j, ReviewState& s);
void to_json(nlohmann::json& j, const TargetVersion& t);
void from_json(const nlohmann::json& j, TargetVersion& t);
void to_json(nlohmann::json& j, const QAPair& p);
void from_json(const nlohmann::json& j, QAPair& p);

std::vector<QAPair> parse_dataset(std::string_view jsonl);
std::vector<QAPair> load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const std::vector<QAPair>& pairs);

}  // namespace asof
