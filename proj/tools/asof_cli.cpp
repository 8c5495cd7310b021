// asof: command-line front end for corpus ingest, dataset generation, review,
// benchmark runs, judging and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asof/analytics.hpp"
#include "asof/corpus.hpp"
#include "asof/error.hpp"
#include "asof/harness.hpp"
#include "asof/judge.hpp"
#include "asof/prompts.hpp"
#include "asof/providers.hpp"
#include "asof/qagen.hpp"
#include "asof/retrieval.hpp"
#include "asof/review_store.hpp"
#include "asof/service.hpp"
#include "asof/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asof;

namespace {

/// The JSON config file. Relative paths resolve against the file's directory.
struct AppConfig {
  fs::path base;
  std::map<std::string, ProviderConfig> providers;
  json raw = json::object();
  PromptSet prompts = PromptSet::defaults();
  std::string refusal_sentinel = std::string(kDefaultRefusalSentinel);

  std::string str(const char* key, const std::string& fallback = "") const {
    return raw.contains(key) && raw[key].is_string() ? raw[key].get<std::string>() : fallback;
  }
  fs::path path(const char* key) const {
    auto s = str(key);
    if (s.empty()) return {};
    fs::path p = s;
    return p.is_relative() ? base / p : p;
  }
  const ProviderConfig& provider(const std::string& name) const {
    auto it = providers.find(name);
    if (it == providers.end()) fail(ErrorCode::kFatalConfig, "no provider named '" + name + "' in the config");
    return it->second;
  }
};

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  if (path.empty()) return cfg;
  if (!fs::exists(path)) fail(ErrorCode::kFatalConfig, "config file not found: " + path);
  cfg.base = fs::path(path).parent_path();
  try {
    cfg.raw = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFatalConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!cfg.raw.is_object()) fail(ErrorCode::kFatalConfig, "config must be a JSON object");
  if (cfg.raw.contains("providers")) {
    for (auto& [name, pj] : cfg.raw["providers"].items()) {
      json copy = pj;
      copy["name"] = name;
      cfg.providers[name] = provider_config_from_json(copy, cfg.base);
    }
  }
  if (auto p = cfg.path("prompts"); !p.empty()) cfg.prompts = PromptSet::load(p);
  cfg.refusal_sentinel = cfg.str("refusal_sentinel", cfg.refusal_sentinel);
  if (trim(cfg.refusal_sentinel).empty()) fail(ErrorCode::kFatalConfig, "refusal_sentinel must not be empty");
  return cfg;
}

/// Command-line value if given, otherwise the config key.
fs::path pick(const std::string& flag, const AppConfig& cfg, const char* key) {
  if (!flag.empty()) return flag;
  return cfg.path(key);
}

fs::path require(const fs::path& p, const char* what) {
  if (p.empty()) fail(ErrorCode::kFatalConfig, std::string("missing ") + what);
  return p;
}

void write_output(const std::string& out, const std::string& contents) {
  if (out.empty() || out == "-") {
    std::cout << contents;
  } else {
    write_file_atomic(out, contents);
  }
}

/// Wraps chat providers for recording when a record directory is set.
class Recorder {
 public:
  explicit Recorder(std::string dir) : dir_(std::move(dir)) {}
  std::shared_ptr<ChatProvider> wrap(std::shared_ptr<ChatProvider> p) {
    if (dir_.empty()) return p;
    auto r = std::make_shared<RecordingChat>(std::move(p));
    recorders_.push_back(r);
    return r;
  }
  void save() const {
    if (dir_.empty()) return;
    fs::create_directories(dir_);
    for (const auto& r : recorders_) r->save(fs::path(dir_) / (r->config().name + ".json"));
  }

 private:
  std::string dir_;
  std::vector<std::shared_ptr<RecordingChat>> recorders_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-in-time statute engine and temporal legal QA benchmark"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "JSON config file");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus file and optionally write its normalized form");
  std::string ingest_src, ingest_out;
  ingest->add_option("source", ingest_src, "Corpus JSON Lines")->required();
  ingest->add_option("-o,--out", ingest_out, "Normalized output");

  // index
  auto* index = app.add_subcommand("index", "Chunk and embed every provision version");
  std::string index_corpus, index_out, index_embedder;
  std::size_t max_chars = 1200, overlap = 200, batch = 64;
  index->add_option("--corpus", index_corpus);
  index->add_option("-o,--out", index_out);
  index->add_option("--embedder", index_embedder, "Embedding provider name");
  index->add_option("--max-chars", max_chars);
  index->add_option("--overlap", overlap);
  index->add_option("--batch", batch);

  // generate
  auto* generate = app.add_subcommand("generate", "Synthesize QA pairs");
  std::string gen_corpus, gen_out, gen_category, gen_cutoff = "2024-11-01", gen_generator, gen_statute;
  int gen_count = 1, gen_attempts = 20;
  std::uint64_t gen_seed = 0;
  std::string gen_record;
  generate->add_option("--corpus", gen_corpus);
  generate->add_option("-o,--out", gen_out)->required();
  generate->add_option("--category", gen_category)->required();
  generate->add_option("--cutoff", gen_cutoff);
  generate->add_option("--count", gen_count);
  generate->add_option("--seed", gen_seed);
  generate->add_option("--max-attempts", gen_attempts);
  generate->add_option("--generator", gen_generator, "Chat provider name");
  generate->add_option("--statute", gen_statute, "Anchor statute for multi-provision pairs");
  generate->add_option("--record-dir", gen_record);

  // review-serve
  auto* serve = app.add_subcommand("review-serve", "Serve the review API");
  std::string serve_store, serve_corpus, serve_static, serve_runs, serve_host, serve_import;
  int serve_port = -1;
  serve->add_option("--store", serve_store);
  serve->add_option("--corpus", serve_corpus);
  serve->add_option("--static", serve_static);
  serve->add_option("--runs", serve_runs);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--import", serve_import, "Dataset to import before serving");

  // review export/import/compact
  auto* review = app.add_subcommand("review", "Review store maintenance");
  review->require_subcommand(1);
  std::string review_store, review_file;
  review->add_option("--store", review_store);
  auto* rexport = review->add_subcommand("export", "Write the store as a dataset");
  rexport->add_option("-o,--out", review_file);
  auto* rimport = review->add_subcommand("import", "Add pairs from a dataset");
  rimport->add_option("dataset", review_file)->required();
  auto* rcompact = review->add_subcommand("compact", "Rewrite the event log");

  // run
  auto* run = app.add_subcommand("run", "Answer the dataset under each setting");
  std::string run_dataset, run_models, run_settings = "vanilla,web,rag-knn,rag-toc", run_out, run_corpus, run_index,
                                      run_embedder, run_web, run_record;
  bool no_filter = false, resume = true, retry_errors = false;
  std::size_t run_k = 6, run_top_n = 5, run_max_select = 8;
  int run_concurrency = 4, run_timeout_s = 120;
  run->add_option("--dataset", run_dataset);
  run->add_option("--models", run_models, "Comma-separated chat provider names")->required();
  run->add_option("--settings", run_settings);
  run->add_option("-o,--out", run_out);
  run->add_option("--corpus", run_corpus);
  run->add_option("--index", run_index);
  run->add_option("--embedder", run_embedder);
  run->add_option("--web", run_web, "Web search provider name");
  run->add_option("--k", run_k);
  run->add_option("--top-n", run_top_n);
  run->add_option("--max-select", run_max_select);
  run->add_option("--concurrency", run_concurrency);
  run->add_option("--timeout", run_timeout_s, "Per-record timeout in seconds");
  run->add_flag("--no-temporal-filter", no_filter);
  run->add_flag("--resume,!--no-resume", resume, "Keep existing records (default)");
  run->add_flag("--retry-errors", retry_errors);
  run->add_option("--record-dir", run_record);

  // judge
  auto* judge = app.add_subcommand("judge", "Score run records with the judge");
  std::string judge_name, judge_dataset, judge_runs, judge_record;
  int judge_concurrency = 4;
  judge->add_option("--judge", judge_name);
  judge->add_option("--dataset", judge_dataset);
  judge->add_option("--runs", judge_runs);
  judge->add_option("--concurrency", judge_concurrency);
  judge->add_option("--record-dir", judge_record);

  // validate-judge
  auto* validate = app.add_subcommand("validate-judge", "Agreement between judge and human ratings");
  std::string val_dataset, val_runs, val_human, val_bins = "quarters", val_out;
  std::size_t val_sample = 0;
  std::uint64_t val_seed = 0;
  validate->add_option("--dataset", val_dataset);
  validate->add_option("--runs", val_runs);
  validate->add_option("--human", val_human, "Ratings CSV");
  validate->add_option("--bins", val_bins)->check(CLI::IsMember({"quarters", "binary"}));
  validate->add_option("--draw-sample", val_sample, "Write a stratified sample of N questions instead");
  validate->add_option("--seed", val_seed);
  validate->add_option("-o,--out", val_out);

  // report
  auto* report = app.add_subcommand("report", "Tables and tests over scored runs");
  std::string rep_dataset, rep_runs, rep_out_dir, rep_midpoint = "2014-10-30", rep_category;
  bool rep_perfect = false, rep_means = false, rep_welch = false, rep_recency = false, rep_dups = false, rep_csv = false;
  report->add_option("--dataset", rep_dataset);
  report->add_option("--runs", rep_runs);
  report->add_flag("--perfect", rep_perfect);
  report->add_flag("--means", rep_means);
  report->add_flag("--welch", rep_welch);
  report->add_flag("--recency", rep_recency);
  report->add_flag("--duplicates", rep_dups);
  report->add_flag("--csv", rep_csv, "CSV instead of aligned text");
  report->add_option("--out-dir", rep_out_dir, "Write one file per report");
  report->add_option("--midpoint", rep_midpoint);
  report->add_option("--category", rep_category, "Restrict Welch setting comparisons to one category");

  CLI11_PARSE(app, argc, argv);

  try {
    const AppConfig cfg = load_config(config_path);

    if (*ingest) {
      IngestOptions opts;
      opts.source_label = ingest_src;
      auto corpus = ingest_corpus(read_file(ingest_src), opts);
      std::cerr << "ok: " << corpus.provision_count() << " provisions, " << corpus.version_count() << " versions\n";
      if (!ingest_out.empty()) write_output(ingest_out, corpus.serialize());
      return 0;
    }

    if (*index) {
      auto corpus = load_corpus(require(pick(index_corpus, cfg, "corpus"), "--corpus").string());
      auto embedder = make_embedder(cfg.provider(index_embedder.empty() ? cfg.str("embedder") : index_embedder));
      auto idx = build_index(corpus, *embedder, ChunkParams{max_chars, overlap}, batch);
      auto out = require(pick(index_out, cfg, "index"), "--out");
      idx.save(out);
      std::cerr << "ok: " << idx.size() << " chunks, dimension " << idx.dimension() << ", fingerprint "
                << idx.fingerprint() << "\n";
      return 0;
    }

    if (*generate) {
      auto corpus = load_corpus(require(pick(gen_corpus, cfg, "corpus"), "--corpus").string());
      auto category = parse_category(gen_category);
      if (!category) fail(ErrorCode::kFatalConfig, "unknown category " + gen_category);
      Recorder rec(gen_record);
      auto chat = rec.wrap(make_chat(cfg.provider(gen_generator.empty() ? cfg.str("generator") : gen_generator)));
      GenerationOptions opts;
      opts.cutoff = Date::parse_iso(gen_cutoff);
      opts.max_attempts = gen_attempts;
      if (!gen_statute.empty()) opts.statute = parse_statute_or_throw(gen_statute);
      std::vector<QAPair> pairs;
      if (fs::exists(gen_out)) pairs = load_dataset(gen_out);
      std::set<std::string> ids;
      for (const auto& p : pairs) ids.insert(p.id);
      int failures = 0;
      for (int i = 0; i < gen_count; ++i) {
        opts.seed = gen_seed + static_cast<std::uint64_t>(i);
        try {
          auto pair = generate_pair(*category, corpus, *chat, opts, cfg.prompts);
          if (ids.insert(pair.id).second) pairs.push_back(std::move(pair));
        } catch (const Error& e) {
          ++failures;
          std::cerr << "seed " << opts.seed << ": " << to_string(e.code()) << ": " << e.what() << "\n";
        }
      }
      pairs = detect_duplicates(std::move(pairs));
      write_file_atomic(gen_out, serialize_dataset(pairs));
      rec.save();
      std::cerr << "ok: " << (gen_count - failures) << " generated, " << failures << " failed, " << pairs.size()
                << " pairs in " << gen_out << "\n";
      return failures == gen_count && gen_count > 0 ? 1 : 0;
    }

    if (*serve) {
      ReviewStore store(require(pick(serve_store, cfg, "store"), "--store"));
      if (!serve_import.empty()) store.import_pairs(load_dataset(serve_import));
      std::optional<Corpus> corpus;
      if (auto p = pick(serve_corpus, cfg, "corpus"); !p.empty()) corpus = load_corpus(p.string());
      ServiceConfig sc;
      sc.host = serve_host.empty() ? cfg.str("host", "127.0.0.1") : serve_host;
      sc.port = serve_port >= 0 ? serve_port : cfg.raw.value("port", 8080);
      sc.static_dir = pick(serve_static, cfg, "static_dir");
      sc.runs_path = pick(serve_runs, cfg, "runs");
      ReviewService service(store, corpus ? &*corpus : nullptr, sc);
      int port = service.start();
      std::cerr << "serving on http://" << sc.host << ":" << port << "\n";
      service.wait();
      return 0;
    }

    if (*review) {
      auto store_path = require(pick(review_store, cfg, "store"), "--store");
      if (!fs::exists(store_path) && !*rimport) fail(ErrorCode::kFatalConfig, "no store at " + store_path.string());
      ReviewStore store(store_path);
      if (*rexport) {
        write_output(review_file, serialize_dataset(store.snapshot()));
      } else if (*rimport) {
        auto n = store.import_pairs(load_dataset(review_file));
        std::cerr << "ok: " << n << " events written, " << store.size() << " pairs in store\n";
      } else if (*rcompact) {
        store.compact();
        std::cerr << "ok: " << store.event_count() << " events after compaction\n";
      }
      return 0;
    }

    if (*run) {
      auto dataset = load_dataset(require(pick(run_dataset, cfg, "dataset"), "--dataset"));
      Recorder rec(run_record);
      std::vector<std::shared_ptr<ChatProvider>> models;
      for (const auto& name : split(run_models, ',')) {
        if (!trim(name).empty()) models.push_back(rec.wrap(make_chat(cfg.provider(trim(name)))));
      }
      RunConfig rc;
      rc.output_path = require(pick(run_out, cfg, "runs"), "--out");
      rc.settings = parse_setting_list(run_settings);
      for (auto& s : rc.settings) {
        s.k = run_k;
        s.top_n = run_top_n;
        s.filter_enabled = !no_filter;
      }
      rc.concurrency = run_concurrency;
      rc.record_timeout = std::chrono::seconds(run_timeout_s);
      rc.resume = resume;
      rc.retry_errors = retry_errors;

      bool need_corpus = false, need_index = false, need_web = false;
      for (const auto& s : rc.settings) {
        need_corpus |= s.name == "rag_knn" || s.name == "rag_toc";
        need_index |= s.name == "rag_knn";
        need_web |= s.name == "web" || s.name == "web_inject";
      }
      std::optional<Corpus> corpus;
      std::optional<ChunkIndex> idx;
      std::shared_ptr<EmbeddingProvider> embedder;
      std::shared_ptr<WebSearchProvider> web;
      if (need_corpus) corpus = load_corpus(require(pick(run_corpus, cfg, "corpus"), "--corpus").string());
      if (need_index) {
        idx = ChunkIndex::load(require(pick(run_index, cfg, "index"), "--index"));
        embedder = make_embedder(cfg.provider(run_embedder.empty() ? cfg.str("embedder") : run_embedder));
        if (idx->embedder_fingerprint() != embedder->config().fingerprint())
          fail(ErrorCode::kFatalConfig, "index was built with a different embedder configuration");
      }
      auto web_name = run_web.empty() ? cfg.str("web_search") : run_web;
      if (need_web && !web_name.empty()) web = make_web_search(cfg.provider(web_name));

      AnswerDeps deps;
      deps.corpus = corpus ? &*corpus : nullptr;
      deps.index = idx ? &*idx : nullptr;
      deps.embedder = embedder.get();
      deps.web = web.get();
      deps.prompts = cfg.prompts;
      deps.refusal_sentinel = cfg.refusal_sentinel;
      deps.max_select = run_max_select;

      auto summary = run_benchmark(rc, dataset, models, deps);
      rec.save();
      for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
      std::cerr << "ok: " << summary.planned << " planned, " << summary.executed << " executed, " << summary.reused
                << " reused, " << summary.errors << " with errors\n";
      return 0;
    }

    if (*judge) {
      auto dataset = load_dataset(require(pick(judge_dataset, cfg, "dataset"), "--dataset"));
      auto runs_path = require(pick(judge_runs, cfg, "runs"), "--runs");
      auto records = load_run_records(runs_path);
      Recorder rec(judge_record);
      auto judge_chat = rec.wrap(make_chat(cfg.provider(judge_name.empty() ? cfg.str("judge") : judge_name)));
      auto s = judge_records(records, dataset, *judge_chat, cfg.prompts, judge_concurrency);
      write_file_atomic(runs_path, serialize_run_records(records));
      rec.save();
      for (const auto& m : s.messages) std::cerr << m << "\n";
      std::cerr << "ok: " << s.scored << " scored, " << s.already_scored << " already scored, " << s.skipped_errors
                << " errored records skipped, " << s.failures << " failures\n";
      return s.failures > 0 ? 1 : 0;
    }

    if (*validate) {
      auto dataset = load_dataset(require(pick(val_dataset, cfg, "dataset"), "--dataset"));
      if (val_sample > 0) {
        write_output(val_out, serialize_dataset(stratified_sample(dataset, val_sample, val_seed)));
        return 0;
      }
      auto records = load_run_records(require(pick(val_runs, cfg, "runs"), "--runs"));
      auto human = load_human_ratings_csv(require(val_human, "--human"));
      auto paired = pair_ratings(human, records, dataset);
      auto rep = validate_judge(paired, val_bins == "binary" ? KappaBins::binary() : KappaBins::quarters());
      write_output(val_out, json(rep).dump(2) + "\n");
      return 0;
    }

    if (*report) {
      auto dataset = load_dataset(require(pick(rep_dataset, cfg, "dataset"), "--dataset"));
      auto records = load_run_records(require(pick(rep_runs, cfg, "runs"), "--runs"));
      if (!rep_perfect && !rep_means && !rep_welch && !rep_recency && !rep_dups) rep_perfect = true;
      std::optional<QACategory> category;
      if (!rep_category.empty()) {
        category = parse_category(rep_category);
        if (!category) fail(ErrorCode::kFatalConfig, "unknown category " + rep_category);
      }
      const std::string ext = rep_csv ? ".csv" : ".txt";
      auto emit = [&](const std::string& name, const std::string& body) {
        if (rep_out_dir.empty()) {
          std::cout << "# " << name << "\n" << body << "\n";
        } else {
          fs::create_directories(rep_out_dir);
          write_file_atomic(fs::path(rep_out_dir) / (name + ext), body);
        }
      };
      auto table = aggregate_metrics(records, dataset);
      if (rep_perfect) emit("perfect", rep_csv ? render_perfect_csv(table) : render_perfect_text(table));
      if (rep_means) emit("means", rep_csv ? render_means_csv(table) : render_means_text(table));
      if (rep_welch) {
        auto cs = setting_comparisons(records, dataset, category);
        emit("welch", rep_csv ? render_comparisons_csv(cs) : render_comparisons_text(cs));
      }
      if (rep_recency) {
        auto r = recency_split(records, dataset, Date::parse_iso(rep_midpoint),
                               {QACategory::kPreAmendment, QACategory::kMultiProvision});
        emit("recency", rep_csv ? render_recency_csv(r) : render_recency_text(r));
      }
      if (rep_dups) {
        auto d = duplicate_consistency(records, dataset);
        emit("duplicates", rep_csv ? render_duplicates_csv(d) : render_duplicates_text(d));
      }
      if (table.excluded_errors) std::cerr << "note: " << table.excluded_errors << " errored records excluded\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
