#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace asof {

enum class ProviderKind { kChat, kEmbedding, kWebSearch };
enum class WireFormat { kOpenAI, kAnthropic, kGemini, kGoogleSearch, kMock };
enum class ToolPolicy { kNone, kNativeWebSearch };

std::string_view to_string(ProviderKind kind);
std::string_view to_string(WireFormat wire);
std::string_view to_string(ToolPolicy policy);

struct ProviderConfig {
  std::string name;
  ProviderKind kind = ProviderKind::kChat;
  WireFormat wire = WireFormat::kMock;
  std::string endpoint;
  std::string model_id;
  /// Name of the environment variable holding the API key. The key itself is
  /// read at request time and never stored.
  std::string credentials_env;
  bool native_web_tool = false;
  std::chrono::milliseconds request_timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  int concurrency = 4;
  double temperature = 0.0;
  // Mock backends.
  std::filesystem::path fixture_path;
  std::size_t embedding_dim = 64;
  std::uint64_t seed = 0;

  /// Stable hash of everything that affects outputs; excludes credentials.
  std::string fingerprint() const;
};

/// Without credentials. `base_dir` resolves relative fixture paths.
void to_json(nlohmann::json& j, const ProviderConfig& c);
ProviderConfig provider_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatExchange {
  std::string system_prompt;
  std::string user_prompt;
  ToolPolicy tool_policy = ToolPolicy::kNone;
  std::string response_text;
  std::optional<TokenUsage> token_usage;
  std::string transcript_id;
};

/// Pure function of the four inputs; 16 lowercase hex digits.
std::string transcript_id(std::string_view system_prompt, std::string_view user_prompt, ToolPolicy policy,
                          std::string_view model_id);

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

struct WebSnippet {
  std::string title;
  std::string url;
  std::string snippet_text;
  std::string retrieved_at;
};

void to_json(nlohmann::json& j, const WebSnippet& s);
void from_json(const nlohmann::json& j, WebSnippet& s);

/// Bounded concurrency gate shared by all callers of one provider.
class ConcurrencyLimit {
 public:
  explicit ConcurrencyLimit(int limit) : available_(limit < 1 ? 1 : limit) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

class ChatProvider {
 public:
  explicit ChatProvider(ProviderConfig config);
  virtual ~ChatProvider() = default;
  ChatProvider(const ChatProvider&) = delete;
  ChatProvider& operator=(const ChatProvider&) = delete;

  const ProviderConfig& config() const { return config_; }

  /// Throws CapabilityUnsupported for a native web request on a backend
  /// without the tool, EmptyResponse for blank replies, and whatever the
  /// backend raises (Transport, AuthRejected, MissingFixture).
  ChatExchange chat(const std::string& system_prompt, const std::string& user_prompt,
                    ToolPolicy policy = ToolPolicy::kNone);

  std::size_t call_count() const { return calls_.load(); }

 protected:
  struct Reply {
    std::string text;
    std::optional<TokenUsage> usage;
  };
  virtual Reply complete(const ChatExchange& request) = 0;

 private:
  ProviderConfig config_;
  ConcurrencyLimit limit_;
  std::atomic<std::size_t> calls_{0};
};

class EmbeddingProvider {
 public:
  explicit EmbeddingProvider(ProviderConfig config);
  virtual ~EmbeddingProvider() = default;
  EmbeddingProvider(const EmbeddingProvider&) = delete;
  EmbeddingProvider& operator=(const EmbeddingProvider&) = delete;

  const ProviderConfig& config() const { return config_; }

  /// One vector per text, same order. Throws Precondition on empty input and
  /// DimensionMismatch when the backend returns ragged or non-finite vectors.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  std::size_t call_count() const { return calls_.load(); }

 protected:
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;

 private:
  ProviderConfig config_;
  ConcurrencyLimit limit_;
  std::atomic<std::size_t> calls_{0};
};

class WebSearchProvider {
 public:
  explicit WebSearchProvider(ProviderConfig config);
  virtual ~WebSearchProvider() = default;
  WebSearchProvider(const WebSearchProvider&) = delete;
  WebSearchProvider& operator=(const WebSearchProvider&) = delete;

  const ProviderConfig& config() const { return config_; }
  std::vector<WebSnippet> web_search(const std::string& query, std::size_t top_n);
  std::size_t call_count() const { return calls_.load(); }

 protected:
  virtual std::vector<WebSnippet> search(const std::string& query, std::size_t top_n) = 0;

 private:
  ProviderConfig config_;
  ConcurrencyLimit limit_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Mock backends

/// Replays canned responses. Lookup order: exact transcript id, then the
/// first rule whose `match` substring occurs in the user prompt, then the
/// responder callback, then the default response. Anything else raises
/// MissingFixture.
class MockChat : public ChatProvider {
 public:
  using Responder = std::function<std::optional<std::string>(const ChatExchange&)>;

  struct Rule {
    std::string match;
    std::string response;
  };

  explicit MockChat(ProviderConfig config);
  MockChat(ProviderConfig config, Responder responder);

  /// Accepts a plain `{transcript_id: response}` map, or
  /// `{"transcripts": {...}, "rules": [{"match","response"}], "default": "..."}`.
  void load_fixture(const nlohmann::json& fixture);
  void set_transcript(const std::string& id, std::string response);
  void add_rule(std::string match, std::string response);
  void set_default(std::string response) { default_ = std::move(response); }

 protected:
  Reply complete(const ChatExchange& request) override;

 private:
  std::mutex mu_;
  std::map<std::string, std::string> transcripts_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_;
  Responder responder_;
};

/// Forwards to another backend and remembers transcript_id -> response so a
/// live session can be frozen into a replay fixture.
class RecordingChat : public ChatProvider {
 public:
  explicit RecordingChat(std::shared_ptr<ChatProvider> inner);
  nlohmann::json fixture() const;
  /// Merges into an existing fixture file if present.
  void save(const std::filesystem::path& path) const;

 protected:
  Reply complete(const ChatExchange& request) override;

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> recorded_;
};

/// Deterministic hash-to-vector embedder: the text's FNV-1a hash xor the
/// seed seeds a SplitMix64 stream; each component is uniform in [-1, 1);
/// the vector is then L2-normalized. Identical on every platform.
class HashEmbedder : public EmbeddingProvider {
 public:
  explicit HashEmbedder(ProviderConfig config);
  static EmbeddingVector vector_for(std::string_view text, std::size_t dim, std::uint64_t seed);

 protected:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;
};

/// Canned search results keyed by exact query; `"*"` is a catch-all.
class MockWebSearch : public WebSearchProvider {
 public:
  explicit MockWebSearch(ProviderConfig config);
  void load_fixture(const nlohmann::json& fixture);
  void set_results(const std::string& query, std::vector<WebSnippet> snippets);

 protected:
  std::vector<WebSnippet> search(const std::string& query, std::size_t top_n) override;

 private:
  std::mutex mu_;
  std::map<std::string, std::vector<WebSnippet>> results_;
};

// ---------------------------------------------------------------------------
// Live HTTP backends

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Runs `attempt` until it yields a non-transient response. Connection
/// failures, 408, 429 and 5xx are retried with exponential backoff up to
/// `max_retries` extra attempts; 401/403 raise AuthRejected immediately.
HttpResponse send_with_retries(const ProviderConfig& config, const std::function<HttpResponse()>& attempt,
                               std::size_t* attempts_out = nullptr);

/// OpenAI-compatible, Anthropic-style or Gemini-style chat completion.
class HttpChat : public ChatProvider {
 public:
  explicit HttpChat(ProviderConfig config);
  std::size_t attempt_count() const { return attempts_.load(); }

  /// Wire payloads, exposed for adapter tests.
  static nlohmann::json request_body(const ProviderConfig& config, const ChatExchange& request);
  static Reply parse_reply(const ProviderConfig& config, const nlohmann::json& body);

 protected:
  Reply complete(const ChatExchange& request) override;

 private:
  std::atomic<std::size_t> attempts_{0};
};

/// OpenAI-compatible `/embeddings`.
class HttpEmbedder : public EmbeddingProvider {
 public:
  explicit HttpEmbedder(ProviderConfig config);

 protected:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;
};

/// Google Custom Search JSON API shape: GET ?q=&num=&key=&cx= with
/// `items[{title, link, snippet}]`. `model_id` carries the engine id.
class HttpWebSearch : public WebSearchProvider {
 public:
  explicit HttpWebSearch(ProviderConfig config);

 protected:
  std::vector<WebSnippet> search(const std::string& query, std::size_t top_n) override;
};

std::shared_ptr<ChatProvider> make_chat(const ProviderConfig& config);
std::shared_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config);
std::shared_ptr<WebSearchProvider> make_web_search(const ProviderConfig& config);

}  // namespace asof
