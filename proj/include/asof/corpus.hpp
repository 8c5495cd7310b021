#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asof/date.hpp"

namespace asof {

enum class StatuteCode { kBGB, kStPO, kAO, kEStG, kBauGB, kHGB };

inline constexpr std::array<StatuteCode, 6> kAllStatutes = {
    StatuteCode::kBGB, StatuteCode::kStPO, StatuteCode::kAO,
    StatuteCode::kEStG, StatuteCode::kBauGB, StatuteCode::kHGB};

std::string_view to_string(StatuteCode code);
/// Full German title, e.g. "Handelsgesetzbuch".
std::string_view statute_name(StatuteCode code);
/// Exact code token only ("BGB", "StPO", ...).
std::optional<StatuteCode> parse_statute(std::string_view token);
StatuteCode parse_statute_or_throw(std::string_view token);

struct ProvisionRef {
  StatuteCode statute = StatuteCode::kBGB;
  std::string paragraph;

  friend auto operator<=>(const ProvisionRef&, const ProvisionRef&) = default;
};

/// "§ 574b BGB"
std::string display(const ProvisionRef& ref);

/// One consolidated text of a provision, in force on [valid_from, valid_to).
struct ProvisionVersion {
  ProvisionRef provision;
  Date valid_from;
  std::optional<Date> valid_to;  // absent: currently in force
  std::string heading;
  std::string text;
  bool repealed = false;  // repeal marker; text is empty when set

  bool valid_at(Date d) const { return valid_from <= d && (!valid_to || d < *valid_to); }
  friend bool operator==(const ProvisionVersion&, const ProvisionVersion&) = default;
};

struct ToCNode {
  std::string label;
  std::string heading;
  std::vector<ToCNode> children;
  std::optional<ProvisionRef> provision;  // leaves only

  friend bool operator==(const ToCNode&, const ToCNode&) = default;
};

/// Depth-first list of provision refs on the leaves of `root`.
std::vector<ProvisionRef> toc_leaves(const ToCNode& root);

enum class ChangeAspect {
  kRightsObligations,
  kRequirements,
  kDeadlines,
  kThresholds,
  kPercentages,
  kAmounts,
  kJurisdictions,
};

std::string_view to_string(ChangeAspect aspect);
std::optional<ChangeAspect> parse_change_aspect(std::string_view token);

struct SubstantiveVerdict {
  bool substantive = false;
  std::string rationale;
  std::vector<ChangeAspect> changed_aspects;  // sorted, unique
};

struct VersionTransition {
  ProvisionVersion previous;
  ProvisionVersion next;
  std::optional<SubstantiveVerdict> substantive;
};

struct CorpusMetadata {
  std::string source;
  std::string ingested_at;
};

struct IngestOptions {
  std::string source_label = "stdin";
  /// Empty means "now" in UTC.
  std::string ingested_at;
};

/// Immutable store of provision version chains and statute outlines.
/// Construct through ingest_corpus(); every accessor is const and safe to call
/// from any number of threads.
class Corpus {
 public:
  Corpus() = default;

  const ProvisionVersion& resolve_as_of(const ProvisionRef& ref, Date date) const;
  const std::vector<ProvisionVersion>& version_history(const ProvisionRef& ref) const;
  const ProvisionVersion& current_version(const ProvisionRef& ref) const;
  std::vector<VersionTransition> list_transitions(std::optional<Date> after = std::nullopt) const;
  const ToCNode& toc(StatuteCode statute) const;
  bool has_toc(StatuteCode statute) const { return tocs_.contains(statute); }
  bool contains(const ProvisionRef& ref) const { return chains_.contains(ref); }

  std::vector<ProvisionRef> provisions() const;
  std::vector<ProvisionRef> provisions(StatuteCode statute) const;
  std::size_t provision_count() const { return chains_.size(); }
  std::size_t version_count() const;
  const CorpusMetadata& metadata() const { return metadata_; }

  /// Normalized JSON Lines: versions ordered by (statute, paragraph,
  /// valid_from), then one outline record per statute.
  std::string serialize() const;

 private:
  friend Corpus ingest_corpus(std::string_view, const IngestOptions&);

  std::map<ProvisionRef, std::vector<ProvisionVersion>> chains_;
  std::map<StatuteCode, ToCNode> tocs_;
  CorpusMetadata metadata_;
};

/// Parse the JSON Lines ingest format. Throws Error with kMalformedRecord
/// (message carries the line number), kChainViolation or kUnknownStatute.
Corpus ingest_corpus(std::string_view jsonl, const IngestOptions& options = {});
Corpus load_corpus(const std::string& path);

void to_json(nlohmann::json& j, const ProvisionRef& ref);
void from_json(const nlohmann::json& j, ProvisionRef& ref);
void to_json(nlohmann::json& j, const ProvisionVersion& v);
void from_json(const nlohmann::json& j, ProvisionVersion& v);
void to_json(nlohmann::json& j, const ToCNode& node);
void to_json(nlohmann::json& j, const SubstantiveVerdict& v);
void from_json(const nlohmann::json& j, SubstantiveVerdict& v);

}  // namespace asof
