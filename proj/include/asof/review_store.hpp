#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "asof/qagen.hpp"

namespace asof {

struct Decision {
  enum class Action { kAccept, kReject };
  Action action = Action::kAccept;
  std::vector<RejectionReason> reasons;
};

struct ProgressCounts {
  std::size_t pending = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t total() const { return pending + accepted + rejected; }
};

struct ProgressSummary {
  std::map<QACategory, ProgressCounts> per_category;
  ProgressCounts overall;
  /// accepted / total; 0 on an empty store.
  double acceptance_rate = 0.0;
};

/// Append-only JSON Lines event log holding the QA pairs and their review
/// decisions; state is the fold of the events. One writer at a time, any
/// number of snapshot readers. Every mutation is flushed and fsync'ed before
/// the call returns.
class ReviewStore {
 public:
  /// Replays the log, creating it if absent. Throws StoreCorruption naming
  /// the first bad line.
  explicit ReviewStore(std::filesystem::path log_path);
  ~ReviewStore();
  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  /// Adds pairs whose id is unknown; for known ids carrying a higher review
  /// revision the imported review state is applied. Returns how many events
  /// were written.
  std::size_t import_pairs(const std::vector<QAPair>& pairs);

  /// Optimistic concurrency: throws RevisionConflict unless
  /// `expected_revision` equals the stored revision, UnknownPair, or
  /// EmptyReasons for a reject without reasons.
  ReviewState record_decision(const std::string& pair_id, const Decision& decision, const std::string& reviewer,
                              std::int64_t expected_revision);

  std::optional<QAPair> get(const std::string& pair_id) const;
  /// All pairs in insertion order.
  std::vector<QAPair> snapshot() const;
  ProgressSummary progress() const;
  std::size_t size() const;
  std::size_t event_count() const;

  /// Rewrites the log as one event per pair with its current state.
  void compact();
  void set_clock(std::function<std::string()> clock) { clock_ = std::move(clock); }

 private:
  void append_event(const nlohmann::json& event);
  void apply(const nlohmann::json& event, std::size_t line_no);
  void open_for_append();

  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::vector<QAPair> pairs_;
  std::map<std::string, std::size_t> by_id_;
  std::size_t events_ = 0;
  std::FILE* out_ = nullptr;
  std::function<std::string()> clock_;
};

ProgressSummary summarize_progress(const std::vector<QAPair>& pairs);

}  // namespace asof
