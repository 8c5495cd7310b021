#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asof/corpus.hpp"
#include "asof/error.hpp"
#include "asof/prompts.hpp"
#include "asof/providers.hpp"
#include "asof/qagen.hpp"
#include "asof/retrieval.hpp"
#include "asof/scores.hpp"

namespace asof {

enum class SettingKind { kVanilla, kWebNative, kWebInject, kRagKnn, kRagToc };

std::string_view to_string(SettingKind kind);
std::optional<SettingKind> parse_setting_kind(std::string_view s);

struct Setting {
  SettingKind kind = SettingKind::kVanilla;
  std::size_t k = 6;
  bool filter_enabled = true;
  std::size_t top_n = 5;

  bool is_rag() const { return kind == SettingKind::kRagKnn || kind == SettingKind::kRagToc; }
  bool is_web() const { return kind == SettingKind::kWebNative || kind == SettingKind::kWebInject; }
  /// "vanilla", "web_native", ..., with "+nofilter" appended for ablated RAG.
  std::string label() const;

  friend bool operator==(const Setting&, const Setting&) = default;
};

void to_json(nlohmann::json& j, const Setting& s);
void from_json(const nlohmann::json& j, Setting& s);

/// A requested setting before it is bound to a model. "web" resolves to
/// web_native or web_inject depending on the model's capability.
struct SettingSpec {
  std::string name;  // vanilla | web | web_native | web_inject | rag_knn | rag_toc
  std::size_t k = 6;
  bool filter_enabled = true;
  std::size_t top_n = 5;
};

/// Comma list, hyphens and underscores interchangeable ("rag-knn" == "rag_knn").
/// Throws FatalConfig on unknown names.
std::vector<SettingSpec> parse_setting_list(std::string_view csv);
/// Throws FatalConfig when web_native is requested for a model without the
/// native tool, or web_inject for one with it.
Setting resolve_setting(const SettingSpec& spec, const ProviderConfig& model);

struct RecordError {
  ErrorCode code = ErrorCode::kIo;
  std::string message;
};

struct Timing {
  double total_ms = 0.0;
  double retrieval_ms = 0.0;
  double answer_ms = 0.0;
};

struct RunRecord {
  std::string qa_id;
  std::string model_id;
  Setting setting;
  std::string answer_text;
  bool refusal = false;
  std::optional<ContextBundle> context;
  std::optional<std::vector<WebSnippet>> snippets;
  std::optional<JudgeScores> scores;
  Timing timing;
  std::optional<RecordError> error;
  std::string transcript_id;

  /// qa_id|model_id|setting label
  std::string key() const;
};

/// Timing is not part of the record JSON; it goes to a sidecar file so that
/// record files are reproducible byte for byte.
void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

std::vector<RunRecord> parse_run_records(std::string_view jsonl);
std::vector<RunRecord> load_run_records(const std::filesystem::path& path);
std::string serialize_run_records(const std::vector<RunRecord>& records);

/// True iff the whitespace-normalized answer equals the whitespace-normalized sentinel.
bool detect_refusal(std::string_view answer_text, std::string_view sentinel);

/// Heading, paragraph label and validity interval, then the text.
std::string render_provision(const ProvisionVersion& v);
std::string render_snippets(const std::vector<WebSnippet>& snippets);

/// Everything a setting may need. Pointers left null are only an error for
/// settings that use them.
struct AnswerDeps {
  const Corpus* corpus = nullptr;
  const ChunkIndex* index = nullptr;
  EmbeddingProvider* embedder = nullptr;
  WebSearchProvider* web = nullptr;
  PromptSet prompts = PromptSet::defaults();
  std::string refusal_sentinel = std::string(kDefaultRefusalSentinel);
  AsOfPolicy as_of_policy = AsOfPolicy::kLatest;
  std::size_t max_select = 8;
  /// Milliseconds on some monotonic scale.
  std::function<double()> clock;
};

/// Runs one question under one setting. Failures land in RunRecord.error.
RunRecord answer_question(const QAPair& qa, const Setting& setting, ChatProvider& model, const AnswerDeps& deps);

struct RunConfig {
  std::filesystem::path output_path;
  std::vector<SettingSpec> settings;
  int concurrency = 4;
  std::chrono::milliseconds record_timeout{120000};
  std::uint64_t seed = 0;
  bool resume = true;
  bool retry_errors = false;
};

struct RunSummary {
  std::size_t planned = 0;
  std::size_t executed = 0;
  std::size_t reused = 0;
  std::size_t skipped_unaccepted = 0;
  std::size_t errors = 0;
  std::vector<std::string> warnings;
  /// Final canonical contents of the output file.
  std::vector<RunRecord> records;
};

/// Every accepted pair x model x setting. Records already in the output are
/// kept as they are. New records are appended as they finish; at the end the
/// file is rewritten in grid order (dataset order, then model, then setting).
RunSummary run_benchmark(const RunConfig& config, const std::vector<QAPair>& dataset,
                         const std::vector<std::shared_ptr<ChatProvider>>& models, const AnswerDeps& deps);

/// `<output>.timing.jsonl`
std::filesystem::path timing_path(const std::filesystem::path& output);

}  // namespace asof
