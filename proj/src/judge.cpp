#include "asof/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>

#include "asof/error.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

JudgeScores parse_judge_scores(std::string_view reply) {
  auto block = extract_json_block(reply);
  if (!block || !block->is_object()) fail(ErrorCode::kUnparseableScores, "judge reply has no JSON object");
  return block->get<JudgeScores>();
}

JudgeScores judge_answer(ChatProvider& judge, const QAPair& qa, const std::string& answer_text,
                         const PromptSet& prompts) {
  if (trim(answer_text).empty()) fail(ErrorCode::kPrecondition, "empty candidate answer for " + qa.id);
  const auto user = render_template(prompts.judge_user, {{"question", qa.question},
                                                         {"reference", qa.reference_answer},
                                                         {"candidate", answer_text}});
  const auto model_id = judge.config().model_id.empty() ? judge.config().name : judge.config().model_id;
  auto attempt = [&](const std::string& prompt) {
    auto scores = parse_judge_scores(judge.chat(prompts.judge_system, prompt).response_text);
    scores.judge_model_id = model_id;
    return scores;
  };
  try {
    return attempt(user);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnparseableScores) throw;
  }
  return attempt(user + prompts.judge_retry_suffix);
}

JudgeRunSummary judge_records(std::vector<RunRecord>& records, const std::vector<QAPair>& dataset,
                              ChatProvider& judge, const PromptSet& prompts, int concurrency) {
  JudgeRunSummary summary;
  std::map<std::string, const QAPair*> by_id;
  for (const auto& p : dataset) by_id[p.id] = &p;

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.error) {
      ++summary.skipped_errors;
    } else if (r.scores) {
      ++summary.already_scored;
    } else if (!by_id.count(r.qa_id)) {
      ++summary.failures;
      summary.messages.push_back(r.key() + ": question not in dataset");
    } else {
      todo.push_back(i);
    }
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t t = next.fetch_add(1);
      if (t >= todo.size()) return;
      auto& rec = records[todo[t]];
      try {
        auto scores = judge_answer(judge, *by_id.at(rec.qa_id), rec.answer_text, prompts);
        std::lock_guard lock(mu);
        rec.scores = std::move(scores);
        ++summary.scored;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        ++summary.failures;
        summary.messages.push_back(rec.key() + ": " + e.what());
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(todo.size(), static_cast<std::size_t>(std::max(1, concurrency)));
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  std::sort(summary.messages.begin(), summary.messages.end());
  return summary;
}

// ---------------------------------------------------------------------------

namespace {

void require_same_length(const std::vector<double>& x, const std::vector<double>& y, std::size_t min_n,
                         const char* what) {
  if (x.size() != y.size()) fail(ErrorCode::kDegenerateInput, std::string(what) + ": lists differ in length");
  if (x.size() < min_n)
    fail(ErrorCode::kDegenerateInput, std::string(what) + ": needs at least " + std::to_string(min_n) + " values");
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  require_same_length(x, y, 2, "pearson_r");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::kDegenerateInput, "pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::size_t KappaBins::bin(double v) const {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

KappaBins KappaBins::quarters() { return {"quarters", {0.125, 0.375, 0.625, 0.875}}; }
KappaBins KappaBins::binary() { return {"binary", {0.5}}; }

double cohens_kappa(const std::vector<double>& x, const std::vector<double>& y, const KappaBins& bins) {
  require_same_length(x, y, 1, "cohens_kappa");
  const std::size_t k = bins.count();
  std::vector<double> px(k, 0.0), py(k, 0.0);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto bx = bins.bin(x[i]), by = bins.bin(y[i]);
    px[bx] += 1;
    py[by] += 1;
    if (bx == by) ++agree;
  }
  const double n = static_cast<double>(x.size());
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) pe += (px[c] / n) * (py[c] / n);
  if (pe >= 1.0) {
    if (po >= 1.0) return 1.0;
    fail(ErrorCode::kDegenerateInput, "cohens_kappa: chance agreement is 1");
  }
  return std::clamp((po - pe) / (1.0 - pe), -1.0, 1.0);
}

double mean_absolute_error(const std::vector<double>& x, const std::vector<double>& y) {
  require_same_length(x, y, 1, "mean_absolute_error");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / x.size();
}

double mean_bias(const std::vector<double>& x, const std::vector<double>& y) {
  require_same_length(x, y, 1, "mean_bias");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] - y[i];
  return s / x.size();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> parse_csv_row(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

std::vector<HumanRating> parse_human_ratings_csv(std::string_view csv) {
  std::vector<HumanRating> out;
  std::map<std::string, std::size_t> col;
  const std::array<std::string_view, 6> required = {"qa_id", "model_id", "setting", "criterion", "score", "rater_id"};
  for_each_line(csv, [&](std::string_view line, std::size_t no) {
    auto cells = parse_csv_row(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[ascii_lower(cells[i])] = i;
      for (auto name : required) {
        if (!col.count(std::string(name)))
          fail(ErrorCode::kMalformedRecord, "ratings CSV header lacks column " + std::string(name));
      }
      return;
    }
    auto cell = [&](std::string_view name) -> const std::string& {
      auto idx = col.at(std::string(name));
      if (idx >= cells.size()) fail(ErrorCode::kMalformedRecord, "ratings line " + std::to_string(no) + ": too few cells");
      return cells[idx];
    };
    HumanRating r;
    r.qa_id = cell("qa_id");
    r.model_id = cell("model_id");
    r.setting = cell("setting");
    r.rater_id = cell("rater_id");
    auto crit = parse_criterion(cell("criterion"));
    if (!crit) fail(ErrorCode::kMalformedRecord, "ratings line " + std::to_string(no) + ": unknown criterion");
    r.criterion = *crit;
    try {
      std::size_t used = 0;
      r.score = std::stod(cell("score"), &used);
      if (used != cell("score").size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      fail(ErrorCode::kMalformedRecord, "ratings line " + std::to_string(no) + ": bad score");
    }
    if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0)
      fail(ErrorCode::kMalformedRecord, "ratings line " + std::to_string(no) + ": score outside [0, 1]");
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<HumanRating> load_human_ratings_csv(const std::filesystem::path& path) {
  return parse_human_ratings_csv(read_file(path));
}

std::vector<PairedRating> pair_ratings(const std::vector<HumanRating>& human, const std::vector<RunRecord>& records,
                                       const std::vector<QAPair>& dataset) {
  std::map<std::string, const QAPair*> by_id;
  for (const auto& p : dataset) by_id[p.id] = &p;
  std::map<std::tuple<std::string, std::string, std::string>, const RunRecord*> by_key;
  for (const auto& r : records) by_key[{r.qa_id, r.model_id, r.setting.label()}] = &r;

  std::vector<PairedRating> out;
  out.reserve(human.size());
  for (const auto& h : human) {
    auto it = by_key.find({h.qa_id, h.model_id, h.setting});
    if (it == by_key.end() || !it->second->scores)
      fail(ErrorCode::kUnmatchedRatings, "no judge score for " + h.qa_id + " / " + h.model_id + " / " + h.setting);
    auto q = by_id.find(h.qa_id);
    if (q == by_id.end()) fail(ErrorCode::kUnmatchedRatings, "rating for unknown question " + h.qa_id);
    PairedRating p;
    p.qa_id = h.qa_id;
    p.model_id = h.model_id;
    p.setting = h.setting;
    p.criterion = h.criterion;
    p.category = q->second->category;
    p.statute = q->second->statute;
    p.judge = it->second->scores->get(h.criterion);
    p.human = h.score;
    out.push_back(std::move(p));
  }
  return out;
}

AgreementStats agreement(const std::vector<PairedRating>& pairs, const KappaBins& bins) {
  AgreementStats s;
  s.n = pairs.size();
  if (pairs.empty()) return s;
  std::vector<double> j, h;
  for (const auto& p : pairs) {
    j.push_back(p.judge);
    h.push_back(p.human);
  }
  try {
    s.pearson_r = pearson_r(j, h);
  } catch (const Error&) {
    // Identical constant lists still agree perfectly.
    if (j == h && j.size() >= 2) s.pearson_r = 1.0;
  }
  try {
    s.kappa = cohens_kappa(j, h, bins);
  } catch (const Error&) {
  }
  s.mae = mean_absolute_error(j, h);
  s.mean_bias = mean_bias(j, h);
  return s;
}

AgreementReport validate_judge(const std::vector<PairedRating>& pairs, const KappaBins& bins) {
  AgreementReport r;
  r.kappa_binning = bins.name;
  r.overall = agreement(pairs, bins);
  std::map<std::string, std::vector<PairedRating>> crit, cat, set;
  for (const auto& p : pairs) {
    crit[std::string(to_string(p.criterion))].push_back(p);
    cat[std::string(to_string(p.category))].push_back(p);
    set[p.setting].push_back(p);
  }
  for (const auto& [k, v] : crit) r.per_criterion[k] = agreement(v, bins);
  for (const auto& [k, v] : cat) r.per_category[k] = agreement(v, bins);
  for (const auto& [k, v] : set) r.per_setting[k] = agreement(v, bins);
  r.notes.push_back("kappa is unweighted over " + bins.name + " bins of the continuous scores");
  r.notes.push_back("mean_bias is mean(judge - human)");
  return r;
}

void to_json(json& j, const AgreementStats& s) {
  j = json{{"n", s.n}, {"mae", s.mae}, {"mean_bias", s.mean_bias}};
  j["pearson_r"] = s.pearson_r ? json(*s.pearson_r) : json(nullptr);
  j["kappa"] = s.kappa ? json(*s.kappa) : json(nullptr);
}

void to_json(json& j, const AgreementReport& r) {
  j = json{{"overall", r.overall},
           {"per_criterion", r.per_criterion},
           {"per_category", r.per_category},
           {"per_setting", r.per_setting},
           {"kappa_binning", r.kappa_binning},
           {"notes", r.notes}};
}

std::vector<QAPair> stratified_sample(const std::vector<QAPair>& dataset, std::size_t n, std::uint64_t seed) {
  std::map<std::pair<QACategory, StatuteCode>, std::vector<const QAPair*>> strata;
  for (const auto& p : dataset) strata[{p.category, p.statute}].push_back(&p);
  SplitMix64 rng(seed);
  for (auto& [_, members] : strata) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
  }
  std::vector<QAPair> out;
  n = std::min(n, dataset.size());
  for (std::size_t round = 0; out.size() < n; ++round) {
    for (auto& [_, members] : strata) {
      if (out.size() == n) break;
      if (round < members.size()) out.push_back(*members[round]);
    }
  }
  return out;
}

}  // namespace asof
