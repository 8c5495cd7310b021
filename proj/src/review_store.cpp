#include "asof/review_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <mutex>
#include <unistd.h>

#include "asof/error.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json decision_event(const std::string& id, const ReviewState& s) {
  json e = s;
  e["event"] = "decision";
  e["pair_id"] = id;
  return e;
}

}  // namespace

ReviewStore::ReviewStore(std::filesystem::path log_path) : path_(std::move(log_path)), clock_(utc_now) {
  if (std::filesystem::exists(path_)) {
    auto text = read_file(path_);
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
      json e;
      try {
        e = json::parse(line);
      } catch (const json::parse_error& err) {
        fail(ErrorCode::kStoreCorruption, path_.string() + " line " + std::to_string(line_no) + ": " + err.what());
      }
      apply(e, line_no);
      ++events_;
    });
  }
  open_for_append();
}

ReviewStore::~ReviewStore() {
  if (out_ != nullptr) std::fclose(out_);
}

void ReviewStore::open_for_append() {
  if (out_ != nullptr) std::fclose(out_);
  out_ = std::fopen(path_.c_str(), "ab");
  if (out_ == nullptr) fail(ErrorCode::kIo, "cannot open review log " + path_.string());
}

void ReviewStore::apply(const json& e, std::size_t line_no) {
  auto corrupt = [&](const std::string& why) {
    fail(ErrorCode::kStoreCorruption, path_.string() + " line " + std::to_string(line_no) + ": " + why);
  };
  try {
    auto kind = e.at("event").get<std::string>();
    if (kind == "add") {
      auto pair = e.at("pair").get<QAPair>();
      if (by_id_.contains(pair.id)) corrupt("duplicate pair " + pair.id);
      by_id_[pair.id] = pairs_.size();
      pairs_.push_back(std::move(pair));
    } else if (kind == "decision") {
      auto id = e.at("pair_id").get<std::string>();
      auto it = by_id_.find(id);
      if (it == by_id_.end()) corrupt("decision for unknown pair " + id);
      auto state = e.get<ReviewState>();
      if ((state.status == ReviewStatus::kRejected) == state.reasons.empty()) corrupt("reasons inconsistent with status");
      pairs_[it->second].review = std::move(state);
    } else {
      corrupt("unknown event '" + kind + "'");
    }
  } catch (const json::exception& ex) {
    corrupt(ex.what());
  } catch (const Error& ex) {
    if (ex.code() == ErrorCode::kStoreCorruption) throw;
    corrupt(ex.what());
  }
}

void ReviewStore::append_event(const json& event) {
  auto line = event.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0)
    fail(ErrorCode::kIo, "write to review log failed");
  ::fsync(::fileno(out_));
  ++events_;
}

std::size_t ReviewStore::import_pairs(const std::vector<QAPair>& pairs) {
  std::unique_lock lock(mu_);
  std::size_t written = 0;
  for (const auto& p : pairs) {
    auto it = by_id_.find(p.id);
    if (it == by_id_.end()) {
      if ((p.review.status == ReviewStatus::kRejected) == p.review.reasons.empty())
        fail(ErrorCode::kMalformedRecord, "pair " + p.id + " has reasons inconsistent with its status");
      append_event(json{{"event", "add"}, {"pair", p}});
      by_id_[p.id] = pairs_.size();
      pairs_.push_back(p);
      ++written;
      continue;
    }
    auto& stored = pairs_[it->second];
    if (p.review.revision > stored.review.revision) {
      append_event(decision_event(p.id, p.review));
      stored.review = p.review;
      ++written;
    }
  }
  return written;
}

ReviewState ReviewStore::record_decision(const std::string& pair_id, const Decision& decision,
                                         const std::string& reviewer, std::int64_t expected_revision) {
  std::unique_lock lock(mu_);
  auto it = by_id_.find(pair_id);
  if (it == by_id_.end()) fail(ErrorCode::kUnknownPair, "unknown pair " + pair_id);
  if (decision.action == Decision::Action::kReject && decision.reasons.empty())
    fail(ErrorCode::kEmptyReasons, "a rejection needs at least one reason");
  if (decision.action == Decision::Action::kAccept && !decision.reasons.empty())
    fail(ErrorCode::kPrecondition, "an acceptance takes no rejection reasons");
  auto& pair = pairs_[it->second];
  if (pair.review.revision != expected_revision)
    fail(ErrorCode::kRevisionConflict, "pair " + pair_id + " is at revision " + std::to_string(pair.review.revision) +
                                           ", not " + std::to_string(expected_revision));

  ReviewState next;
  next.status = decision.action == Decision::Action::kAccept ? ReviewStatus::kAccepted : ReviewStatus::kRejected;
  next.reasons = decision.reasons;
  std::sort(next.reasons.begin(), next.reasons.end());
  next.reasons.erase(std::unique(next.reasons.begin(), next.reasons.end()), next.reasons.end());
  next.reviewer = reviewer;
  next.decided_at = clock_();
  next.revision = pair.review.revision + 1;

  append_event(decision_event(pair_id, next));
  pair.review = next;
  return next;
}

std::optional<QAPair> ReviewStore::get(const std::string& pair_id) const {
  std::shared_lock lock(mu_);
  auto it = by_id_.find(pair_id);
  if (it == by_id_.end()) return std::nullopt;
  return pairs_[it->second];
}

std::vector<QAPair> ReviewStore::snapshot() const {
  std::shared_lock lock(mu_);
  return pairs_;
}

ProgressSummary summarize_progress(const std::vector<QAPair>& pairs) {
  ProgressSummary s;
  for (auto c : kAllCategories) s.per_category[c] = {};
  for (const auto& p : pairs) {
    auto& cell = s.per_category[p.category];
    switch (p.review.status) {
      case ReviewStatus::kPending: ++cell.pending; ++s.overall.pending; break;
      case ReviewStatus::kAccepted: ++cell.accepted; ++s.overall.accepted; break;
      case ReviewStatus::kRejected: ++cell.rejected; ++s.overall.rejected; break;
    }
  }
  auto total = s.overall.total();
  s.acceptance_rate = total == 0 ? 0.0 : static_cast<double>(s.overall.accepted) / static_cast<double>(total);
  return s;
}

ProgressSummary ReviewStore::progress() const {
  std::shared_lock lock(mu_);
  return summarize_progress(pairs_);
}

std::size_t ReviewStore::size() const {
  std::shared_lock lock(mu_);
  return pairs_.size();
}

std::size_t ReviewStore::event_count() const {
  std::shared_lock lock(mu_);
  return events_;
}

void ReviewStore::compact() {
  std::unique_lock lock(mu_);
  std::string text;
  for (const auto& p : pairs_) text += json{{"event", "add"}, {"pair", p}}.dump() + "\n";
  std::fclose(out_);
  out_ = nullptr;
  write_file_atomic(path_, text);
  events_ = pairs_.size();
  open_for_append();
}

}  // namespace asof
