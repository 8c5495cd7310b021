#include "asof/providers.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "asof/error.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kChat: return "chat";
    case ProviderKind::kEmbedding: return "embedding";
    case ProviderKind::kWebSearch: return "web-search";
  }
  return "chat";
}

std::string_view to_string(WireFormat wire) {
  switch (wire) {
    case WireFormat::kOpenAI: return "openai";
    case WireFormat::kAnthropic: return "anthropic";
    case WireFormat::kGemini: return "gemini";
    case WireFormat::kGoogleSearch: return "google-search";
    case WireFormat::kMock: return "mock";
  }
  return "mock";
}

std::string_view to_string(ToolPolicy policy) {
  return policy == ToolPolicy::kNativeWebSearch ? "native_web_search" : "none";
}

namespace {

ProviderKind parse_kind(const std::string& s) {
  if (s == "chat") return ProviderKind::kChat;
  if (s == "embedding") return ProviderKind::kEmbedding;
  if (s == "web-search" || s == "web_search") return ProviderKind::kWebSearch;
  fail(ErrorCode::kFatalConfig, "unknown provider kind '" + s + "'");
}

WireFormat parse_wire(const std::string& s) {
  if (s == "openai") return WireFormat::kOpenAI;
  if (s == "anthropic") return WireFormat::kAnthropic;
  if (s == "gemini") return WireFormat::kGemini;
  if (s == "google-search") return WireFormat::kGoogleSearch;
  if (s == "mock") return WireFormat::kMock;
  fail(ErrorCode::kFatalConfig, "unknown wire format '" + s + "'");
}

}  // namespace

std::string ProviderConfig::fingerprint() const {
  Fnv1a h;
  h.field(to_string(kind)).field(to_string(wire)).field(endpoint).field(model_id);
  h.add_u64(native_web_tool ? 1 : 0).add_u64(embedding_dim).add_u64(seed);
  h.field(std::to_string(temperature));
  return h.hex();
}

void to_json(json& j, const ProviderConfig& c) {
  j = json{{"name", c.name},
           {"kind", to_string(c.kind)},
           {"wire", to_string(c.wire)},
           {"endpoint", c.endpoint},
           {"model_id", c.model_id},
           {"native_web_tool", c.native_web_tool},
           {"request_timeout_ms", c.request_timeout.count()},
           {"max_retries", c.max_retries},
           {"concurrency", c.concurrency},
           {"temperature", c.temperature}};
  if (c.wire == WireFormat::kMock) {
    j["embedding_dim"] = c.embedding_dim;
    j["seed"] = c.seed;
  }
}

ProviderConfig provider_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  ProviderConfig c;
  try {
    c.name = j.value("name", "");
    c.kind = parse_kind(j.value("kind", "chat"));
    c.wire = parse_wire(j.value("wire", "mock"));
    c.endpoint = j.value("endpoint", "");
    c.model_id = j.value("model_id", c.name);
    c.credentials_env = j.value("api_key_env", "");
    c.native_web_tool = j.value("native_web_tool", false);
    c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", 60000));
    c.max_retries = j.value("max_retries", 3);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_base_ms", 500));
    c.concurrency = j.value("concurrency", 4);
    c.temperature = j.value("temperature", 0.0);
    c.embedding_dim = j.value("embedding_dim", std::size_t{64});
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("fixture")) {
      std::filesystem::path p = j["fixture"].get<std::string>();
      c.fixture_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFatalConfig, std::string("bad provider config: ") + e.what());
  }
  if (c.max_retries < 0 || c.concurrency < 1) fail(ErrorCode::kFatalConfig, "provider '" + c.name + "': bad limits");
  if (c.kind == ProviderKind::kEmbedding && c.embedding_dim == 0)
    fail(ErrorCode::kFatalConfig, "provider '" + c.name + "': embedding_dim must be positive");
  return c;
}

std::string transcript_id(std::string_view system_prompt, std::string_view user_prompt, ToolPolicy policy,
                          std::string_view model_id) {
  return Fnv1a().field(system_prompt).field(user_prompt).field(to_string(policy)).field(model_id).hex();
}

void to_json(json& j, const WebSnippet& s) {
  j = json{{"title", s.title}, {"url", s.url}, {"snippet_text", s.snippet_text}, {"retrieved_at", s.retrieved_at}};
}

void from_json(const json& j, WebSnippet& s) {
  s.title = j.value("title", "");
  s.url = j.value("url", "");
  s.snippet_text = j.value("snippet_text", j.value("snippet", ""));
  s.retrieved_at = j.value("retrieved_at", "");
}

void ConcurrencyLimit::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimit::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(ConcurrencyLimit& limit) : limit_(limit) { limit_.acquire(); }
  ~SlotGuard() { limit_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  ConcurrencyLimit& limit_;
};

}  // namespace

ChatProvider::ChatProvider(ProviderConfig config) : config_(std::move(config)), limit_(config_.concurrency) {}

ChatExchange ChatProvider::chat(const std::string& system_prompt, const std::string& user_prompt, ToolPolicy policy) {
  if (config_.kind != ProviderKind::kChat)
    fail(ErrorCode::kPrecondition, "provider '" + config_.name + "' is not a chat provider");
  if (policy == ToolPolicy::kNativeWebSearch && !config_.native_web_tool)
    fail(ErrorCode::kCapabilityUnsupported, "provider '" + config_.name + "' has no native web search tool");

  ChatExchange ex;
  ex.system_prompt = system_prompt;
  ex.user_prompt = user_prompt;
  ex.tool_policy = policy;
  ex.transcript_id = transcript_id(system_prompt, user_prompt, policy, config_.model_id);

  SlotGuard slot(limit_);
  calls_.fetch_add(1);
  auto reply = complete(ex);
  if (trim(reply.text).empty()) fail(ErrorCode::kEmptyResponse, "provider '" + config_.name + "' returned an empty reply");
  ex.response_text = std::move(reply.text);
  ex.token_usage = reply.usage;
  return ex;
}

EmbeddingProvider::EmbeddingProvider(ProviderConfig config) : config_(std::move(config)), limit_(config_.concurrency) {}

std::vector<EmbeddingVector> EmbeddingProvider::embed(std::span<const std::string> texts) {
  if (config_.kind != ProviderKind::kEmbedding)
    fail(ErrorCode::kPrecondition, "provider '" + config_.name + "' is not an embedding provider");
  if (texts.empty()) fail(ErrorCode::kPrecondition, "embed called with no texts");
  std::vector<EmbeddingVector> out;
  {
    SlotGuard slot(limit_);
    calls_.fetch_add(1);
    out = embed_batch(texts);
  }
  if (out.size() != texts.size())
    fail(ErrorCode::kDimensionMismatch, "backend returned " + std::to_string(out.size()) + " vectors for " +
                                            std::to_string(texts.size()) + " texts");
  const auto dim = out.front().dimension();
  for (const auto& v : out) {
    if (v.dimension() == 0 || v.dimension() != dim)
      fail(ErrorCode::kDimensionMismatch, "backend returned inconsistent embedding dimensions");
    for (double x : v.values) {
      if (!std::isfinite(x)) fail(ErrorCode::kDimensionMismatch, "backend returned a non-finite component");
    }
  }
  return out;
}

EmbeddingVector EmbeddingProvider::embed_one(const std::string& text) {
  std::string one[] = {text};
  return std::move(embed(one).front());
}

WebSearchProvider::WebSearchProvider(ProviderConfig config) : config_(std::move(config)), limit_(config_.concurrency) {}

std::vector<WebSnippet> WebSearchProvider::web_search(const std::string& query, std::size_t top_n) {
  if (config_.kind != ProviderKind::kWebSearch)
    fail(ErrorCode::kPrecondition, "provider '" + config_.name + "' is not a web search provider");
  if (top_n == 0) return {};
  std::vector<WebSnippet> out;
  {
    SlotGuard slot(limit_);
    calls_.fetch_add(1);
    out = search(query, top_n);
  }
  std::erase_if(out, [](const WebSnippet& s) { return trim(s.snippet_text).empty(); });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

// ---------------------------------------------------------------------------

MockChat::MockChat(ProviderConfig config) : ChatProvider(std::move(config)) {
  if (!this->config().fixture_path.empty()) load_fixture(json::parse(read_file(this->config().fixture_path)));
}

MockChat::MockChat(ProviderConfig config, Responder responder) : MockChat(std::move(config)) {
  responder_ = std::move(responder);
}

void MockChat::load_fixture(const json& fixture) {
  std::lock_guard lock(mu_);
  if (!fixture.is_object()) fail(ErrorCode::kFatalConfig, "chat fixture must be a JSON object");
  bool structured = fixture.contains("transcripts") || fixture.contains("rules") || fixture.contains("default");
  if (!structured) {
    for (const auto& [id, resp] : fixture.items()) transcripts_[id] = resp.get<std::string>();
    return;
  }
  if (fixture.contains("transcripts")) {
    for (const auto& [id, resp] : fixture["transcripts"].items()) transcripts_[id] = resp.get<std::string>();
  }
  if (fixture.contains("rules")) {
    for (const auto& r : fixture["rules"]) rules_.push_back({r.at("match").get<std::string>(), r.at("response").get<std::string>()});
  }
  if (fixture.contains("default")) default_ = fixture["default"].get<std::string>();
}

void MockChat::set_transcript(const std::string& id, std::string response) {
  std::lock_guard lock(mu_);
  transcripts_[id] = std::move(response);
}

void MockChat::add_rule(std::string match, std::string response) {
  std::lock_guard lock(mu_);
  rules_.push_back({std::move(match), std::move(response)});
}

ChatProvider::Reply MockChat::complete(const ChatExchange& request) {
  {
    std::lock_guard lock(mu_);
    if (auto it = transcripts_.find(request.transcript_id); it != transcripts_.end()) return {it->second, std::nullopt};
    for (const auto& rule : rules_) {
      if (request.user_prompt.find(rule.match) != std::string::npos) return {rule.response, std::nullopt};
    }
  }
  if (responder_) {
    if (auto r = responder_(request)) return {*r, std::nullopt};
  }
  std::lock_guard lock(mu_);
  if (default_) return {*default_, std::nullopt};
  fail(ErrorCode::kMissingFixture, "no canned response for transcript " + request.transcript_id);
}

RecordingChat::RecordingChat(std::shared_ptr<ChatProvider> inner)
    : ChatProvider(inner->config()), inner_(std::move(inner)) {}

ChatProvider::Reply RecordingChat::complete(const ChatExchange& request) {
  auto ex = inner_->chat(request.system_prompt, request.user_prompt, request.tool_policy);
  std::lock_guard lock(mu_);
  recorded_[request.transcript_id] = ex.response_text;
  return {ex.response_text, ex.token_usage};
}

json RecordingChat::fixture() const {
  std::lock_guard lock(mu_);
  json j = json::object();
  for (const auto& [id, resp] : recorded_) j[id] = resp;
  return j;
}

void RecordingChat::save(const std::filesystem::path& path) const {
  json merged = json::object();
  if (std::filesystem::exists(path)) merged = json::parse(read_file(path));
  const json recorded = fixture();
  for (const auto& [id, resp] : recorded.items()) merged[id] = resp;
  write_file_atomic(path, merged.dump(2) + "\n");
}

HashEmbedder::HashEmbedder(ProviderConfig config) : EmbeddingProvider(std::move(config)) {}

EmbeddingVector HashEmbedder::vector_for(std::string_view text, std::size_t dim, std::uint64_t seed) {
  SplitMix64 rng(Fnv1a().add(text).value() ^ seed);
  EmbeddingVector v;
  v.values.resize(dim);
  double norm2 = 0.0;
  for (auto& x : v.values) {
    x = 2.0 * rng.unit() - 1.0;
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  for (auto& x : v.values) x /= norm;
  return v;
}

std::vector<EmbeddingVector> HashEmbedder::embed_batch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  const auto dim = config().embedding_dim;
  const auto seed = config().seed;
  const auto n = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = vector_for(texts[static_cast<std::size_t>(i)], dim, seed);
  return out;
}

MockWebSearch::MockWebSearch(ProviderConfig config) : WebSearchProvider(std::move(config)) {
  if (!this->config().fixture_path.empty()) load_fixture(json::parse(read_file(this->config().fixture_path)));
}

void MockWebSearch::load_fixture(const json& fixture) {
  std::lock_guard lock(mu_);
  for (const auto& [query, list] : fixture.items()) {
    auto& slot = results_[query];
    for (const auto& s : list) slot.push_back(s.get<WebSnippet>());
  }
}

void MockWebSearch::set_results(const std::string& query, std::vector<WebSnippet> snippets) {
  std::lock_guard lock(mu_);
  results_[query] = std::move(snippets);
}

std::vector<WebSnippet> MockWebSearch::search(const std::string& query, std::size_t top_n) {
  std::lock_guard lock(mu_);
  auto it = results_.find(query);
  if (it == results_.end()) it = results_.find("*");
  if (it == results_.end()) return {};
  std::vector<WebSnippet> out(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(std::min(top_n, it->second.size())));
  return out;
}

std::shared_ptr<ChatProvider> make_chat(const ProviderConfig& config) {
  if (config.kind != ProviderKind::kChat) fail(ErrorCode::kFatalConfig, "provider '" + config.name + "' is not a chat provider");
  if (config.wire == WireFormat::kMock) return std::make_shared<MockChat>(config);
  if (config.wire == WireFormat::kGoogleSearch) fail(ErrorCode::kFatalConfig, "google-search wire cannot serve chat");
  return std::make_shared<HttpChat>(config);
}

std::shared_ptr<EmbeddingProvider> make_embedder(const ProviderConfig& config) {
  if (config.kind != ProviderKind::kEmbedding)
    fail(ErrorCode::kFatalConfig, "provider '" + config.name + "' is not an embedding provider");
  if (config.wire == WireFormat::kMock) return std::make_shared<HashEmbedder>(config);
  if (config.wire != WireFormat::kOpenAI) fail(ErrorCode::kFatalConfig, "embeddings require the openai wire format");
  return std::make_shared<HttpEmbedder>(config);
}

std::shared_ptr<WebSearchProvider> make_web_search(const ProviderConfig& config) {
  if (config.kind != ProviderKind::kWebSearch)
    fail(ErrorCode::kFatalConfig, "provider '" + config.name + "' is not a web search provider");
  if (config.wire == WireFormat::kMock) return std::make_shared<MockWebSearch>(config);
  return std::make_shared<HttpWebSearch>(config);
}

}  // namespace asof
