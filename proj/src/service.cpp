#include "asof/service.hpp"

#include <httplib.h>

#include <algorithm>

#include "asof/error.hpp"
#include "asof/harness.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

constexpr std::size_t kPreviewChars = 280;
constexpr std::size_t kMaxPageLimit = 500;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, json{{"error", code}, {"message", message}});
}

json counts_json(const ProgressCounts& c) {
  return json{{"pending", c.pending}, {"accepted", c.accepted}, {"rejected", c.rejected}, {"total", c.total()}};
}

json version_json(const ProvisionVersion& v) {
  return json{{"provision", display(v.provision)},
              {"valid_from", v.valid_from.iso()},
              {"valid_to", v.valid_to ? json(v.valid_to->iso()) : json(nullptr)},
              {"heading", v.heading},
              {"text", v.text},
              {"repealed", v.repealed}};
}

/// Parses a non-negative integer query value; nullopt on junk.
std::optional<std::size_t> parse_count(const std::string& s) {
  if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::nullopt;
  return static_cast<std::size_t>(std::stoul(s));
}

}  // namespace

json public_pair_json(const QAPair& pair) {
  json j = pair;
  if (j.contains("generation_trace")) {
    for (auto& step : j["generation_trace"]["steps"]) {
      step.erase("system_prompt");
      step.erase("user_prompt");
    }
  }
  return j;
}

json pair_detail_json(const QAPair& pair, const Corpus* corpus) {
  json j = public_pair_json(pair);
  json versions = json::array();
  json warnings = json::array();
  for (const auto& t : pair.target_versions) {
    const auto label = display(t.provision);
    if (!corpus || !corpus->contains(t.provision)) {
      warnings.push_back("missing version: " + label + " is not in the corpus");
      continue;
    }
    const auto& chain = corpus->version_history(t.provision);
    auto it = std::find_if(chain.begin(), chain.end(), [&](const ProvisionVersion& v) { return v.valid_from == t.valid_from; });
    if (it == chain.end()) {
      warnings.push_back("missing version: " + label + " valid from " + t.valid_from.iso());
      continue;
    }
    json entry{{"provision", label}, {"target", version_json(*it)}};
    entry["previous"] = it != chain.begin() ? version_json(*std::prev(it)) : json(nullptr);
    entry["next"] = std::next(it) != chain.end() ? version_json(*std::next(it)) : json(nullptr);
    versions.push_back(std::move(entry));
  }
  j["versions"] = std::move(versions);
  j["warnings"] = std::move(warnings);
  return j;
}

json progress_json(const ProgressSummary& p) {
  json per = json::object();
  for (const auto& [cat, counts] : p.per_category) per[std::string(to_string(cat))] = counts_json(counts);
  return json{{"per_category", per}, {"overall", counts_json(p.overall)}, {"acceptance_rate", p.acceptance_rate}};
}

ReviewService::ReviewService(ReviewStore& store, const Corpus* corpus, ServiceConfig config)
    : store_(store), corpus_(corpus), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  // httplib's default adds SO_REUSEPORT, which lets a second instance share the port silently.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  routes();
}

ReviewService::~ReviewService() { stop(); }

void ReviewService::routes() {
  auto& svr = *server_;

  svr.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
    std::optional<ReviewStatus> status;
    std::optional<QACategory> category;
    std::optional<StatuteCode> statute;
    if (req.has_param("status")) {
      status = parse_review_status(req.get_param_value("status"));
      if (!status) return send_error(res, 400, "BadFilter", "unknown status " + req.get_param_value("status"));
    }
    if (req.has_param("category")) {
      category = parse_category(req.get_param_value("category"));
      if (!category) return send_error(res, 400, "BadFilter", "unknown category " + req.get_param_value("category"));
    }
    if (req.has_param("statute")) {
      statute = parse_statute(req.get_param_value("statute"));
      if (!statute) return send_error(res, 400, "BadFilter", "unknown statute " + req.get_param_value("statute"));
    }
    std::size_t cursor = 0;
    std::size_t limit = config_.page_limit;
    if (req.has_param("cursor")) {
      auto c = parse_count(req.get_param_value("cursor"));
      if (!c) return send_error(res, 400, "BadCursor", "cursor must be a non-negative integer");
      cursor = *c;
    }
    if (req.has_param("limit")) {
      auto l = parse_count(req.get_param_value("limit"));
      if (!l || *l == 0) return send_error(res, 400, "BadLimit", "limit must be a positive integer");
      limit = std::min(*l, kMaxPageLimit);
    }

    auto pairs = store_.snapshot();
    json items = json::array();
    std::optional<std::size_t> next;
    std::size_t matched = 0;
    for (std::size_t i = cursor; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      if (status && p.review.status != *status) continue;
      if (category && p.category != *category) continue;
      if (statute && p.statute != *statute) continue;
      if (matched == limit) {
        next = i;
        break;
      }
      ++matched;
      items.push_back(json{{"pair_id", p.id},
                           {"category", to_string(p.category)},
                           {"statute", to_string(p.statute)},
                           {"preview", utf8_truncate(p.question, kPreviewChars)},
                           {"status", to_string(p.review.status)},
                           {"revision", p.review.revision},
                           {"duplicate_group", p.duplicate_group ? json(*p.duplicate_group) : json(nullptr)}});
    }
    send_json(res, 200, json{{"items", std::move(items)}, {"next_cursor", next ? json(std::to_string(*next)) : json(nullptr)}});
  });

  svr.Get(R"(/api/pairs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto pair = store_.get(req.matches[1]);
    if (!pair) return send_error(res, 404, "UnknownPair", "no pair " + std::string(req.matches[1]));
    send_json(res, 200, pair_detail_json(*pair, corpus_));
  });

  svr.Post(R"(/api/pairs/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    json body;
    try {
      body = json::parse(req.body);
    } catch (const std::exception&) {
      return send_error(res, 400, "BadRequest", "body is not JSON");
    }
    if (!body.is_object() || !body.contains("action") || !body["action"].is_string() ||
        !body.contains("expected_revision") || !body["expected_revision"].is_number_integer())
      return send_error(res, 400, "BadRequest", "action and expected_revision are required");
    Decision d;
    const auto action = body["action"].get<std::string>();
    if (action == "accept") {
      d.action = Decision::Action::kAccept;
    } else if (action == "reject") {
      d.action = Decision::Action::kReject;
    } else {
      return send_error(res, 400, "BadRequest", "action must be accept or reject");
    }
    if (body.contains("reasons")) {
      if (!body["reasons"].is_array()) return send_error(res, 400, "BadRequest", "reasons must be a list");
      for (const auto& r : body["reasons"]) {
        auto reason = r.is_string() ? parse_rejection_reason(r.get<std::string>()) : std::nullopt;
        if (!reason) return send_error(res, 400, "BadRequest", "unknown reason " + r.dump());
        d.reasons.push_back(*reason);
      }
    }
    std::string reviewer = body.contains("reviewer") && body["reviewer"].is_string() ? body["reviewer"].get<std::string>() : "";
    try {
      auto state = store_.record_decision(id, d, reviewer, body["expected_revision"].get<std::int64_t>());
      send_json(res, 200, state);
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::kUnknownPair: return send_error(res, 404, "UnknownPair", e.what());
        case ErrorCode::kRevisionConflict: {
          json err{{"error", "RevisionConflict"}, {"message", e.what()}};
          if (auto cur = store_.get(id)) err["current"] = cur->review;
          return send_json(res, 409, err);
        }
        case ErrorCode::kEmptyReasons:
        case ErrorCode::kPrecondition: return send_error(res, 400, std::string(to_string(e.code())), e.what());
        default: return send_error(res, 500, std::string(to_string(e.code())), e.what());
      }
    }
  });

  svr.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, progress_json(store_.progress()));
  });

  svr.Get("/api/runs", [this](const httplib::Request& req, httplib::Response& res) {
    if (config_.runs_path.empty() || !std::filesystem::exists(config_.runs_path))
      return send_json(res, 200, json{{"items", json::array()}, {"next_cursor", nullptr}});
    std::vector<RunRecord> records;
    try {
      records = load_run_records(config_.runs_path);
    } catch (const Error& e) {
      return send_error(res, 500, std::string(to_string(e.code())), e.what());
    }
    std::size_t cursor = 0, limit = config_.page_limit;
    if (req.has_param("cursor")) {
      auto c = parse_count(req.get_param_value("cursor"));
      if (!c) return send_error(res, 400, "BadCursor", "cursor must be a non-negative integer");
      cursor = *c;
    }
    if (req.has_param("limit")) {
      auto l = parse_count(req.get_param_value("limit"));
      if (!l || *l == 0) return send_error(res, 400, "BadLimit", "limit must be a positive integer");
      limit = std::min(*l, kMaxPageLimit);
    }
    auto want = [&](const char* key, const std::string& value) {
      return !req.has_param(key) || req.get_param_value(key) == value;
    };
    json items = json::array();
    std::optional<std::size_t> next;
    for (std::size_t i = cursor; i < records.size(); ++i) {
      const auto& r = records[i];
      if (!want("qa_id", r.qa_id) || !want("model_id", r.model_id) || !want("setting", r.setting.label())) continue;
      if (items.size() == limit) {
        next = i;
        break;
      }
      items.push_back(r);
    }
    send_json(res, 200, json{{"items", std::move(items)}, {"next_cursor", next ? json(std::to_string(*next)) : json(nullptr)}});
  });

  auto read_only = [](const httplib::Request&, httplib::Response& res) {
    send_error(res, 405, "MethodNotAllowed", "run records are read-only");
  };
  svr.Post(R"(/api/runs.*)", read_only);
  svr.Put(R"(/api/runs.*)", read_only);
  svr.Delete(R"(/api/runs.*)", read_only);

  if (!config_.static_dir.empty() && std::filesystem::is_directory(config_.static_dir))
    svr.set_mount_point("/", config_.static_dir.string());
}

int ReviewService::start() {
  if (thread_.joinable()) return port_;
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ <= 0) fail(ErrorCode::kBindFailure, "cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port))
      fail(ErrorCode::kBindFailure, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    port_ = config_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ReviewService::wait() {
  if (thread_.joinable()) thread_.join();
}

void ReviewService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace asof
