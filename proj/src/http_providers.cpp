#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "asof/date.hpp"
#include "asof/error.hpp"
#include "asof/providers.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // begins with '/'
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::kFatalConfig, "endpoint must be an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string api_key(const ProviderConfig& config) {
  if (config.credentials_env.empty()) return {};
  const char* v = std::getenv(config.credentials_env.c_str());
  if (v == nullptr || *v == '\0')
    fail(ErrorCode::kAuthRejected, "environment variable " + config.credentials_env + " is not set");
  return v;
}

httplib::Client make_client(const ProviderConfig& config, const std::string& origin) {
  httplib::Client cli(origin);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.request_timeout).count();
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.request_timeout).count() % 1000000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

HttpResponse post_json(const ProviderConfig& config, const std::string& url, const httplib::Headers& headers,
                       const json& body) {
  auto parts = split_url(url);
  auto cli = make_client(config, parts.origin);
  auto res = cli.Post(parts.path, headers, body.dump(), "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

json parse_body(const HttpResponse& r, const ProviderConfig& config) {
  try {
    return json::parse(r.body);
  } catch (const json::parse_error&) {
    fail(ErrorCode::kTransport, "provider '" + config.name + "' returned non-JSON body");
  }
}

}  // namespace

HttpResponse send_with_retries(const ProviderConfig& config, const std::function<HttpResponse()>& attempt,
                               std::size_t* attempts_out) {
  std::string last_error;
  const int total = config.max_retries + 1;
  for (int i = 0; i < total; ++i) {
    if (i > 0) std::this_thread::sleep_for(config.backoff_base * (1LL << std::min(i - 1, 10)));
    if (attempts_out != nullptr) ++*attempts_out;
    auto r = attempt();
    if (r.status == 401 || r.status == 403)
      fail(ErrorCode::kAuthRejected, "provider '" + config.name + "' rejected credentials (HTTP " + std::to_string(r.status) + ")");
    bool transient = r.status == 0 || r.status == 408 || r.status == 429 || r.status >= 500;
    if (!transient) {
      if (r.status >= 200 && r.status < 300) return r;
      fail(ErrorCode::kTransport, "provider '" + config.name + "' answered HTTP " + std::to_string(r.status) + ": " +
                                      utf8_truncate(r.body, 200));
    }
    last_error = r.status == 0 ? r.body : "HTTP " + std::to_string(r.status);
  }
  fail(ErrorCode::kTransport, "provider '" + config.name + "' failed after " + std::to_string(total) +
                                  " attempts: " + last_error);
}

HttpChat::HttpChat(ProviderConfig config) : ChatProvider(std::move(config)) {}

json HttpChat::request_body(const ProviderConfig& config, const ChatExchange& request) {
  const bool native = request.tool_policy == ToolPolicy::kNativeWebSearch;
  switch (config.wire) {
    case WireFormat::kOpenAI: {
      json body{{"model", config.model_id},
                {"messages", json::array({json{{"role", "system"}, {"content", request.system_prompt}},
                                          json{{"role", "user"}, {"content", request.user_prompt}}})}};
      if (native) {
        body["web_search_options"] = json::object();
      } else {
        body["temperature"] = config.temperature;
      }
      return body;
    }
    case WireFormat::kAnthropic: {
      json body{{"model", config.model_id},
                {"max_tokens", 4096},
                {"system", request.system_prompt},
                {"temperature", config.temperature},
                {"messages", json::array({json{{"role", "user"}, {"content", request.user_prompt}}})}};
      if (native)
        body["tools"] = json::array({json{{"type", "web_search_20250305"}, {"name", "web_search"}, {"max_uses", 5}}});
      return body;
    }
    case WireFormat::kGemini: {
      json body{{"systemInstruction", {{"parts", json::array({json{{"text", request.system_prompt}}})}}},
                {"contents", json::array({json{{"role", "user"}, {"parts", json::array({json{{"text", request.user_prompt}}})}}})},
                {"generationConfig", {{"temperature", config.temperature}}}};
      if (native) body["tools"] = json::array({json{{"google_search", json::object()}}});
      return body;
    }
    default:
      fail(ErrorCode::kFatalConfig, "wire format " + std::string(to_string(config.wire)) + " cannot serve chat");
  }
}

ChatProvider::Reply HttpChat::parse_reply(const ProviderConfig& config, const json& body) {
  Reply reply;
  try {
    switch (config.wire) {
      case WireFormat::kOpenAI: {
        const auto& content = body.at("choices").at(0).at("message").at("content");
        reply.text = content.is_string() ? content.get<std::string>() : "";
        if (body.contains("usage"))
          reply.usage = TokenUsage{body["usage"].value("prompt_tokens", 0LL), body["usage"].value("completion_tokens", 0LL)};
        break;
      }
      case WireFormat::kAnthropic: {
        for (const auto& block : body.at("content")) {
          if (block.value("type", "") == "text") reply.text += block.value("text", "");
        }
        if (body.contains("usage"))
          reply.usage = TokenUsage{body["usage"].value("input_tokens", 0LL), body["usage"].value("output_tokens", 0LL)};
        break;
      }
      case WireFormat::kGemini: {
        for (const auto& part : body.at("candidates").at(0).at("content").at("parts")) reply.text += part.value("text", "");
        if (body.contains("usageMetadata"))
          reply.usage = TokenUsage{body["usageMetadata"].value("promptTokenCount", 0LL),
                                   body["usageMetadata"].value("candidatesTokenCount", 0LL)};
        break;
      }
      default:
        fail(ErrorCode::kFatalConfig, "unsupported chat wire format");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kEmptyResponse, "provider '" + config.name + "' reply has unexpected shape: " + e.what());
  }
  return reply;
}

ChatProvider::Reply HttpChat::complete(const ChatExchange& request) {
  const auto& cfg = config();
  auto body = request_body(cfg, request);
  auto key = api_key(cfg);
  httplib::Headers headers;
  if (!key.empty()) {
    switch (cfg.wire) {
      case WireFormat::kAnthropic:
        headers.emplace("x-api-key", key);
        break;
      case WireFormat::kGemini:
        headers.emplace("x-goog-api-key", key);
        break;
      default:
        headers.emplace("Authorization", "Bearer " + key);
    }
  }
  if (cfg.wire == WireFormat::kAnthropic) headers.emplace("anthropic-version", "2023-06-01");
  std::size_t attempts = 0;
  HttpResponse r;
  try {
    r = send_with_retries(cfg, [&] { return post_json(cfg, cfg.endpoint, headers, body); }, &attempts);
  } catch (...) {
    attempts_ += attempts;
    throw;
  }
  attempts_ += attempts;
  return parse_reply(cfg, parse_body(r, cfg));
}

HttpEmbedder::HttpEmbedder(ProviderConfig config) : EmbeddingProvider(std::move(config)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(std::span<const std::string> texts) {
  const auto& cfg = config();
  json body{{"model", cfg.model_id}, {"input", json(std::vector<std::string>(texts.begin(), texts.end()))}};
  httplib::Headers headers;
  if (auto key = api_key(cfg); !key.empty()) headers.emplace("Authorization", "Bearer " + key);
  auto r = send_with_retries(cfg, [&] { return post_json(cfg, cfg.endpoint, headers, body); });
  auto parsed = parse_body(r, cfg);
  std::vector<EmbeddingVector> out(texts.size());
  try {
    const auto& data = parsed.at("data");
    if (data.size() != texts.size())
      fail(ErrorCode::kDimensionMismatch, "embedding backend returned " + std::to_string(data.size()) + " items");
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto idx = data[i].value("index", i);
      if (idx >= out.size()) fail(ErrorCode::kDimensionMismatch, "embedding index out of range");
      out[idx].values = data[i].at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kTransport, std::string("embedding reply has unexpected shape: ") + e.what());
  }
  return out;
}

HttpWebSearch::HttpWebSearch(ProviderConfig config) : WebSearchProvider(std::move(config)) {}

std::vector<WebSnippet> HttpWebSearch::search(const std::string& query, std::size_t top_n) {
  const auto& cfg = config();
  auto parts = split_url(cfg.endpoint);
  httplib::Params params{{"q", query}, {"num", std::to_string(std::min<std::size_t>(top_n, 10))}};
  if (!cfg.model_id.empty()) params.emplace("cx", cfg.model_id);
  if (auto key = api_key(cfg); !key.empty()) params.emplace("key", key);
  auto r = send_with_retries(cfg, [&]() -> HttpResponse {
    auto cli = make_client(cfg, parts.origin);
    auto res = cli.Get(parts.path, params, httplib::Headers{});
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  });
  auto parsed = parse_body(r, cfg);
  std::vector<WebSnippet> out;
  auto now = Date::today().iso();
  if (parsed.contains("items")) {
    for (const auto& item : parsed["items"]) {
      out.push_back({item.value("title", ""), item.value("link", ""), item.value("snippet", ""), now});
      if (out.size() == top_n) break;
    }
  }
  return out;
}

}  // namespace asof
