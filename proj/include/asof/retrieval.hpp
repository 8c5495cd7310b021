#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asof/corpus.hpp"
#include "asof/datefinder.hpp"
#include "asof/prompts.hpp"
#include "asof/providers.hpp"

namespace asof {

struct ChunkParams {
  std::size_t max_chars = 1200;
  std::size_t overlap_chars = 200;

  friend bool operator==(const ChunkParams&, const ChunkParams&) = default;
};

struct VersionKey {
  ProvisionRef provision;
  Date valid_from;

  friend auto operator<=>(const VersionKey&, const VersionKey&) = default;
};

/// A slice of one version's text. Lengths are counted in code points;
/// `begin`/`end` are byte offsets into the version text.
struct Chunk {
  VersionKey version;
  std::optional<Date> valid_to;  // copied from the version for query-time filtering
  std::size_t chunk_index = 0;
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty_marker = false;  // repealed / empty version text

  bool valid_at(Date d) const { return version.valid_from <= d && (!valid_to || d < *valid_to); }
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Splits into chunks of at most `max_chars` code points; consecutive chunks
/// share exactly `overlap_chars` code points. Within the last quarter of each
/// window the split moves back to a sentence end when one exists.
/// Throws Precondition unless overlap_chars < max_chars.
std::vector<Chunk> chunk_version(const ProvisionVersion& version, const ChunkParams& params = {});

/// Inverse of chunking: first chunk whole, then each later chunk minus the
/// bytes it shares with its predecessor.
std::string reconstruct_text(const std::vector<Chunk>& chunks);

/// Exact cosine index over the chunks of every version (historical and
/// current). Immutable after construction.
class ChunkIndex {
 public:
  ChunkIndex() = default;
  ChunkIndex(std::vector<Chunk> chunks, std::vector<double> matrix, std::size_t dim, std::string embedder_fingerprint,
             ChunkParams params);

  std::size_t size() const { return chunks_.size(); }
  bool empty() const { return chunks_.empty(); }
  std::size_t dimension() const { return dim_; }
  const std::vector<Chunk>& chunks() const { return chunks_; }
  const std::vector<double>& matrix() const { return matrix_; }
  const std::vector<double>& norms() const { return norms_; }
  std::span<const double> vector(std::size_t row) const { return {matrix_.data() + row * dim_, dim_}; }
  const std::string& embedder_fingerprint() const { return embedder_fingerprint_; }
  const ChunkParams& params() const { return params_; }

  /// Hash over header, chunk metadata and vector bits.
  std::string fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static ChunkIndex load(const std::filesystem::path& path);
  nlohmann::json to_debug_json() const;

 private:
  std::vector<Chunk> chunks_;
  std::vector<double> matrix_;
  std::vector<double> norms_;
  std::size_t dim_ = 0;
  std::string embedder_fingerprint_;
  ChunkParams params_;
};

/// Chunks every version and embeds in batches of `batch_size`. Any provider
/// failure aborts the build; no partial index escapes.
ChunkIndex build_index(const Corpus& corpus, EmbeddingProvider& embedder, const ChunkParams& params = {},
                       std::size_t batch_size = 64);

/// Throws DimensionMismatch or ZeroVector. Result clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct ScoredChunk {
  std::size_t row = 0;  // position in the index
  double score = 0.0;
};

struct KnnQuery {
  std::size_t k = 6;
  Date as_of;
  StatuteCode statute = StatuteCode::kBGB;
  bool filter_enabled = true;
};

/// Exact top-k by descending cosine among chunks of `statute` (and, when the
/// filter is on, of versions valid at `as_of`). Ties order by
/// (statute, paragraph, valid_from, chunk_index). Uses the parallel kernel.
std::vector<ScoredChunk> knn_retrieve(const ChunkIndex& index, const EmbeddingVector& query, const KnnQuery& q);
/// Same contract, serial kernel.
std::vector<ScoredChunk> knn_retrieve_serial(const ChunkIndex& index, const EmbeddingVector& query, const KnnQuery& q);

enum class RetrievalStrategy { kKnn, kToc };
std::string_view to_string(RetrievalStrategy s);

struct TraceEntry {
  std::string kind;  // "hit", "selected", "dropped", "filter_disabled"
  std::string label;
  std::optional<double> score;
  std::string note;
};

struct ContextBundle {
  std::string question_id;
  FactDate as_of;
  StatuteCode statute = StatuteCode::kBGB;
  std::vector<ProvisionVersion> provisions;
  RetrievalStrategy strategy = RetrievalStrategy::kKnn;
  bool filter_enabled = true;
  std::vector<TraceEntry> trace;
};

/// Every provision valid at the as-of date and no ProvisionRef twice.
bool is_temporally_sound(const ContextBundle& bundle);

/// Reply must name exactly one code (token) or full German statute title.
StatuteCode parse_statute_verdict(std::string_view reply);
StatuteCode identify_statute(const std::string& question, ChatProvider& chat, const PromptSet& prompts);

/// Indented outline, one node per line, leaves prefixed with "§".
std::string render_toc(const ToCNode& toc);
/// Labels in order of appearance, deduplicated, restricted to the outline,
/// capped at `max_select`. Throws UnparseableVerdict when nothing valid remains.
std::vector<ProvisionRef> parse_toc_selection(std::string_view reply, const ToCNode& toc, std::size_t max_select);
std::vector<ProvisionRef> toc_select(ChatProvider& chat, const ToCNode& toc, const std::string& question,
                                     std::size_t max_select, const PromptSet& prompts);

struct RagOptions {
  std::size_t k = 6;
  std::size_t max_select = 8;
  bool filter_enabled = true;
  AsOfPolicy as_of_policy = AsOfPolicy::kLatest;
};

ContextBundle rag_knn_context(const std::string& question_id, const std::string& question, const Corpus& corpus,
                              const ChunkIndex& index, EmbeddingProvider& embedder, ChatProvider& chat,
                              const PromptSet& prompts, const RagOptions& options = {});

ContextBundle rag_toc_context(const std::string& question_id, const std::string& question, const Corpus& corpus,
                              ChatProvider& chat, const PromptSet& prompts, const RagOptions& options = {});

void to_json(nlohmann::json& j, const ContextBundle& b);
void from_json(const nlohmann::json& j, ContextBundle& b);

}  // namespace asof
