#include "asof/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 5> kSettingNames = {"vanilla", "web_native", "web_inject", "rag_knn",
                                                           "rag_toc"};

double steady_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::string canonical_setting_name(std::string_view s) {
  std::string out = ascii_lower(trim(s));
  std::replace(out.begin(), out.end(), '-', '_');
  return out;
}

}  // namespace

std::string_view to_string(SettingKind kind) { return kSettingNames[static_cast<std::size_t>(kind)]; }

std::optional<SettingKind> parse_setting_kind(std::string_view s) {
  auto name = canonical_setting_name(s);
  for (std::size_t i = 0; i < kSettingNames.size(); ++i) {
    if (kSettingNames[i] == name) return static_cast<SettingKind>(i);
  }
  return std::nullopt;
}

std::string Setting::label() const {
  std::string out(to_string(kind));
  if (is_rag() && !filter_enabled) out += "+nofilter";
  return out;
}

void to_json(json& j, const Setting& s) {
  j = json{{"kind", to_string(s.kind)}, {"label", s.label()}};
  if (s.is_rag()) {
    j["k"] = s.k;
    j["filter_enabled"] = s.filter_enabled;
  }
  if (s.kind == SettingKind::kWebInject) j["top_n"] = s.top_n;
}

void from_json(const json& j, Setting& s) {
  auto kind = parse_setting_kind(j.at("kind").get<std::string>());
  if (!kind) fail(ErrorCode::kMalformedRecord, "unknown setting kind " + j.at("kind").get<std::string>());
  s = Setting{};
  s.kind = *kind;
  if (j.contains("k")) s.k = j["k"].get<std::size_t>();
  if (j.contains("filter_enabled")) s.filter_enabled = j["filter_enabled"].get<bool>();
  if (j.contains("top_n")) s.top_n = j["top_n"].get<std::size_t>();
}

std::vector<SettingSpec> parse_setting_list(std::string_view csv) {
  std::vector<SettingSpec> out;
  for (const auto& part : split(csv, ',')) {
    auto name = canonical_setting_name(part);
    if (name.empty()) continue;
    if (name != "web" && !parse_setting_kind(name)) fail(ErrorCode::kFatalConfig, "unknown setting '" + part + "'");
    SettingSpec spec;
    spec.name = name;
    out.push_back(spec);
  }
  if (out.empty()) fail(ErrorCode::kFatalConfig, "no settings given");
  return out;
}

Setting resolve_setting(const SettingSpec& spec, const ProviderConfig& model) {
  Setting s;
  s.k = spec.k;
  s.filter_enabled = spec.filter_enabled;
  s.top_n = spec.top_n;
  if (spec.name == "web") {
    s.kind = model.native_web_tool ? SettingKind::kWebNative : SettingKind::kWebInject;
    return s;
  }
  auto kind = parse_setting_kind(spec.name);
  if (!kind) fail(ErrorCode::kFatalConfig, "unknown setting '" + spec.name + "'");
  s.kind = *kind;
  if (s.kind == SettingKind::kWebNative && !model.native_web_tool)
    fail(ErrorCode::kFatalConfig, "model " + model.name + " has no native web tool");
  if (s.kind == SettingKind::kWebInject && model.native_web_tool)
    fail(ErrorCode::kFatalConfig, "model " + model.name + " has a native web tool; use web_native");
  return s;
}

std::string RunRecord::key() const { return qa_id + "|" + model_id + "|" + setting.label(); }

void to_json(json& j, const RunRecord& r) {
  j = json{{"qa_id", r.qa_id}, {"model_id", r.model_id}, {"setting", r.setting}};
  if (r.error) {
    j["error"] = json{{"code", to_string(r.error->code)}, {"message", r.error->message}};
  } else {
    j["answer_text"] = r.answer_text;
    j["refusal"] = r.refusal;
  }
  if (r.context) j["context"] = *r.context;
  if (r.snippets) j["snippets"] = *r.snippets;
  if (r.scores) j["scores"] = *r.scores;
  if (r.setting.is_rag() && !r.setting.filter_enabled) j["temporal_filter_disabled"] = true;
  if (!r.transcript_id.empty()) j["transcript_id"] = r.transcript_id;
}

void from_json(const json& j, RunRecord& r) {
  r = RunRecord{};
  r.qa_id = j.at("qa_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.setting = j.at("setting").get<Setting>();
  r.answer_text = j.value("answer_text", "");
  r.refusal = j.value("refusal", false);
  if (j.contains("context")) r.context = j["context"].get<ContextBundle>();
  if (j.contains("snippets")) r.snippets = j["snippets"].get<std::vector<WebSnippet>>();
  if (j.contains("scores")) r.scores = j["scores"].get<JudgeScores>();
  if (j.contains("error")) {
    const auto& e = j["error"];
    auto code = parse_error_code(e.value("code", ""));
    r.error = RecordError{code.value_or(ErrorCode::kIo), e.value("message", "")};
  }
  r.transcript_id = j.value("transcript_id", "");
}

std::vector<RunRecord> parse_run_records(std::string_view jsonl) {
  std::vector<RunRecord> out;
  for_each_line(jsonl, [&](std::string_view line, std::size_t no) {
    try {
      out.push_back(json::parse(line).get<RunRecord>());
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(ErrorCode::kMalformedRecord, "run record line " + std::to_string(no) + ": " + e.what());
    }
  });
  return out;
}

std::vector<RunRecord> load_run_records(const std::filesystem::path& path) { return parse_run_records(read_file(path)); }

std::string serialize_run_records(const std::vector<RunRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += json(r).dump();
    out += '\n';
  }
  return out;
}

bool detect_refusal(std::string_view answer_text, std::string_view sentinel) {
  return normalize_whitespace(answer_text) == normalize_whitespace(sentinel);
}

std::string render_provision(const ProvisionVersion& v) {
  std::string out = display(v.provision);
  if (!v.heading.empty()) out += " " + v.heading;
  out += " (in force from " + v.valid_from.iso();
  out += v.valid_to ? " until " + v.valid_to->iso() + ")" : ", currently in force)";
  out += ":\n";
  out += v.repealed ? "(aufgehoben)" : v.text;
  return out;
}

std::string render_snippets(const std::vector<WebSnippet>& snippets) {
  std::string out;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    const auto& s = snippets[i];
    out += "[" + std::to_string(i + 1) + "] " + s.title;
    if (!s.url.empty()) out += " (" + s.url + ")";
    out += "\n" + s.snippet_text + "\n\n";
  }
  return out;
}

RunRecord answer_question(const QAPair& qa, const Setting& setting, ChatProvider& model, const AnswerDeps& deps) {
  auto clock = deps.clock ? deps.clock : std::function<double()>(steady_ms);
  RunRecord rec;
  rec.qa_id = qa.id;
  rec.model_id = model.config().model_id.empty() ? model.config().name : model.config().model_id;
  rec.setting = setting;
  const double t0 = clock();
  double t_answer = t0;
  try {
    if (deps.refusal_sentinel.empty()) fail(ErrorCode::kFatalConfig, "refusal sentinel must not be empty");
    const auto system = render_template(deps.prompts.answer_system, {{"sentinel", deps.refusal_sentinel}});
    std::string user;
    ToolPolicy policy = ToolPolicy::kNone;
    RagOptions rag;
    rag.k = setting.k;
    rag.max_select = deps.max_select;
    rag.filter_enabled = setting.filter_enabled;
    rag.as_of_policy = deps.as_of_policy;

    switch (setting.kind) {
      case SettingKind::kVanilla:
        user = render_template(deps.prompts.answer_vanilla, {{"question", qa.question}});
        break;
      case SettingKind::kWebNative:
        user = render_template(deps.prompts.answer_vanilla, {{"question", qa.question}});
        policy = ToolPolicy::kNativeWebSearch;
        break;
      case SettingKind::kWebInject: {
        if (!deps.web) fail(ErrorCode::kFatalConfig, "web_inject needs a web search provider");
        rec.snippets = deps.web->web_search(qa.question, setting.top_n);
        user = render_template(deps.prompts.answer_with_snippets,
                               {{"snippets", render_snippets(*rec.snippets)}, {"question", qa.question}});
        break;
      }
      case SettingKind::kRagKnn:
      case SettingKind::kRagToc: {
        if (!deps.corpus) fail(ErrorCode::kFatalConfig, "RAG settings need a corpus");
        ContextBundle bundle;
        if (setting.kind == SettingKind::kRagKnn) {
          if (!deps.index || !deps.embedder) fail(ErrorCode::kFatalConfig, "rag_knn needs an index and an embedder");
          bundle = rag_knn_context(qa.id, qa.question, *deps.corpus, *deps.index, *deps.embedder, model, deps.prompts,
                                   rag);
        } else {
          bundle = rag_toc_context(qa.id, qa.question, *deps.corpus, model, deps.prompts, rag);
        }
        std::string context;
        for (const auto& v : bundle.provisions) {
          if (!context.empty()) context += "\n\n";
          context += render_provision(v);
        }
        user = render_template(deps.prompts.answer_with_context, {{"as_of", bundle.as_of.date.iso()},
                                                                  {"context", context},
                                                                  {"question", qa.question}});
        rec.context = std::move(bundle);
        break;
      }
    }
    t_answer = clock();
    rec.timing.retrieval_ms = t_answer - t0;
    auto ex = model.chat(system, user, policy);
    rec.answer_text = ex.response_text;
    rec.transcript_id = ex.transcript_id;
    rec.refusal = detect_refusal(rec.answer_text, deps.refusal_sentinel);
  } catch (const Error& e) {
    rec.error = RecordError{e.code(), e.what()};
    rec.answer_text.clear();
    rec.refusal = false;
  } catch (const std::exception& e) {
    rec.error = RecordError{ErrorCode::kIo, e.what()};
    rec.answer_text.clear();
    rec.refusal = false;
  }
  const double t1 = clock();
  rec.timing.answer_ms = rec.error ? 0.0 : t1 - t_answer;
  rec.timing.total_ms = t1 - t0;
  return rec;
}

std::filesystem::path timing_path(const std::filesystem::path& output) {
  auto p = output;
  p += ".timing.jsonl";
  return p;
}

namespace {

struct Job {
  std::size_t order = 0;  // grid position
  const QAPair* qa = nullptr;
  std::size_t model = 0;
  Setting setting;
  std::string key;
};

/// Serialized appends to the output and timing files.
class Appender {
 public:
  Appender(const std::filesystem::path& out, const std::filesystem::path& timing) {
    out_ = std::fopen(out.c_str(), "ab");
    timing_ = std::fopen(timing.c_str(), "ab");
    if (!out_ || !timing_) {
      close();
      fail(ErrorCode::kFatalConfig, "cannot open output " + out.string());
    }
  }
  ~Appender() { close(); }

  void write(const RunRecord& r) {
    std::lock_guard lock(mu_);
    auto line = json(r).dump() + "\n";
    std::fwrite(line.data(), 1, line.size(), out_);
    std::fflush(out_);
    auto t = json{{"key", r.key()},
                  {"total_ms", r.timing.total_ms},
                  {"retrieval_ms", r.timing.retrieval_ms},
                  {"answer_ms", r.timing.answer_ms}}
                 .dump() +
             "\n";
    std::fwrite(t.data(), 1, t.size(), timing_);
    std::fflush(timing_);
  }

 private:
  void close() {
    if (out_) std::fclose(out_);
    if (timing_) std::fclose(timing_);
    out_ = timing_ = nullptr;
  }
  std::mutex mu_;
  std::FILE* out_ = nullptr;
  std::FILE* timing_ = nullptr;
};

}  // namespace

RunSummary run_benchmark(const RunConfig& config, const std::vector<QAPair>& dataset,
                         const std::vector<std::shared_ptr<ChatProvider>>& models, const AnswerDeps& deps) {
  if (config.output_path.empty()) fail(ErrorCode::kFatalConfig, "output path missing");
  if (models.empty()) fail(ErrorCode::kFatalConfig, "no models configured");
  if (config.settings.empty()) fail(ErrorCode::kFatalConfig, "no settings configured");
  if (deps.refusal_sentinel.empty()) fail(ErrorCode::kFatalConfig, "refusal sentinel must not be empty");
  if (auto parent = config.output_path.parent_path(); !parent.empty() && !std::filesystem::is_directory(parent))
    fail(ErrorCode::kFatalConfig, "output directory does not exist: " + parent.string());

  RunSummary summary;

  // Resolve every (model, setting) first so configuration errors surface before any call.
  std::vector<std::vector<Setting>> bound(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (!models[m]) fail(ErrorCode::kFatalConfig, "null model provider");
    for (const auto& spec : config.settings) bound[m].push_back(resolve_setting(spec, models[m]->config()));
  }

  // Resume: read everything that is already there before executing anything.
  std::map<std::string, RunRecord> existing;
  std::vector<std::string> existing_order;
  if (std::filesystem::exists(config.output_path)) {
    if (!config.resume) {
      std::filesystem::remove(config.output_path);
      std::filesystem::remove(timing_path(config.output_path));
    } else {
      for (auto& r : load_run_records(config.output_path)) {
        if (config.retry_errors && r.error) continue;
        auto key = r.key();
        if (!existing.count(key)) existing_order.push_back(key);
        existing[key] = std::move(r);
      }
    }
  }

  std::vector<Job> grid;
  std::set<std::string> grid_keys;
  for (const auto& qa : dataset) {
    if (qa.review.status != ReviewStatus::kAccepted) {
      ++summary.skipped_unaccepted;
      continue;
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      for (const auto& s : bound[m]) {
        Job job;
        job.order = grid.size();
        job.qa = &qa;
        job.model = m;
        job.setting = s;
        const auto& cfg = models[m]->config();
        job.key = qa.id + "|" + (cfg.model_id.empty() ? cfg.name : cfg.model_id) + "|" + s.label();
        if (!grid_keys.insert(job.key).second) continue;  // duplicate setting request
        grid.push_back(job);
      }
    }
  }
  if (summary.skipped_unaccepted > 0)
    summary.warnings.push_back("skipped " + std::to_string(summary.skipped_unaccepted) +
                               " pairs that are not accepted");
  summary.planned = grid.size();

  std::vector<const Job*> todo;
  for (const auto& job : grid) {
    if (existing.count(job.key)) {
      ++summary.reused;
    } else {
      todo.push_back(&job);
    }
  }

  std::vector<std::optional<RunRecord>> fresh(grid.size());
  if (!todo.empty()) {
    Appender appender(config.output_path, timing_path(config.output_path));
    std::atomic<std::size_t> next{0};
    std::mutex abandoned_mu;
    // Timed-out attempts keep running in the background; they are joined
    // before returning because they reference caller-owned providers.
    std::vector<std::future<RunRecord>> abandoned;

    auto worker = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        const Job& job = *todo[i];
        auto fut = std::async(std::launch::async, [&job, &models, &deps] {
          return answer_question(*job.qa, job.setting, *models[job.model], deps);
        });
        RunRecord rec;
        if (fut.wait_for(config.record_timeout) == std::future_status::ready) {
          rec = fut.get();
        } else {
          const auto& cfg = models[job.model]->config();
          rec.qa_id = job.qa->id;
          rec.model_id = cfg.model_id.empty() ? cfg.name : cfg.model_id;
          rec.setting = job.setting;
          rec.error = RecordError{ErrorCode::kTimeout,
                                  "no answer within " + std::to_string(config.record_timeout.count()) + " ms"};
          std::lock_guard lock(abandoned_mu);
          abandoned.push_back(std::move(fut));
        }
        appender.write(rec);
        fresh[job.order] = std::move(rec);
      }
    };

    const std::size_t n_threads =
        std::max<std::size_t>(1, std::min<std::size_t>(todo.size(), static_cast<std::size_t>(std::max(1, config.concurrency))));
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    for (auto& f : abandoned) f.wait();
    summary.executed = todo.size();
  }

  // Canonical rewrite: grid order first, then foreign records in their original order.
  for (const auto& job : grid) {
    if (auto it = existing.find(job.key); it != existing.end()) {
      summary.records.push_back(it->second);
    } else if (fresh[job.order]) {
      summary.records.push_back(*fresh[job.order]);
    }
  }
  for (const auto& key : existing_order) {
    if (!grid_keys.count(key)) summary.records.push_back(existing[key]);
  }
  for (const auto& r : summary.records) {
    if (r.error) ++summary.errors;
  }
  write_file_atomic(config.output_path, serialize_run_records(summary.records));
  return summary;
}

}  // namespace asof
