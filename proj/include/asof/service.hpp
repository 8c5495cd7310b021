#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "asof/corpus.hpp"
#include "asof/review_store.hpp"

namespace httplib {
class Server;
}

namespace asof {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;  // served under / when it exists
  std::filesystem::path runs_path;   // RunRecord JSONL for /api/runs
  std::size_t page_limit = 50;
};

/// Review queue, pair detail, decisions, progress and read-only runs over
/// JSON/HTTP. The store and corpus must outlive the service.
class ReviewService {
 public:
  ReviewService(ReviewStore& store, const Corpus* corpus, ServiceConfig config);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  /// Binds and starts serving on a background thread; returns the port.
  /// Throws BindFailure.
  int start();
  /// Blocks the calling thread until stop() is called from elsewhere.
  void wait();
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  ReviewStore& store_;
  const Corpus* corpus_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// Pair JSON without generation prompts.
nlohmann::json public_pair_json(const QAPair& pair);
/// Target versions with their neighbours from the corpus, plus warnings for
/// anything the corpus no longer has.
nlohmann::json pair_detail_json(const QAPair& pair, const Corpus* corpus);
nlohmann::json progress_json(const ProgressSummary& p);

}  // namespace asof
