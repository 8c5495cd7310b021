#include "asof/qagen.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "asof/error.hpp"
#include "asof/retrieval.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kCategoryNames = {"post_cutoff_amendment", "pre_amendment",
                                                            "multi_provision_pre_amendment"};
constexpr std::array<std::string_view, 4> kReasonNames = {"editorial_only", "multiple_subquestions",
                                                          "outcome_invariant", "legal_error"};
constexpr std::array<std::string_view, 3> kStatusNames = {"pending", "accepted", "rejected"};

}  // namespace

std::string_view to_string(QACategory c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::optional<QACategory> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == s) return static_cast<QACategory>(i);
  }
  return std::nullopt;
}

std::string_view to_string(RejectionReason r) { return kReasonNames[static_cast<std::size_t>(r)]; }
std::optional<RejectionReason> parse_rejection_reason(std::string_view s) {
  for (std::size_t i = 0; i < kReasonNames.size(); ++i) {
    if (kReasonNames[i] == s) return static_cast<RejectionReason>(i);
  }
  return std::nullopt;
}

std::string_view to_string(ReviewStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }
std::optional<ReviewStatus> parse_review_status(std::string_view s) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == s) return static_cast<ReviewStatus>(i);
  }
  return std::nullopt;
}

std::string make_pair_id(QACategory category, std::string_view question) {
  return "qa-" + Fnv1a().field(to_string(category)).field(question).hex();
}

// ---------------------------------------------------------------------------
// Classification

SubstantiveVerdict parse_substantive_verdict(std::string_view reply) {
  auto block = extract_json_block(reply);
  if (!block || !block->contains("substantive") || !(*block)["substantive"].is_boolean())
    fail(ErrorCode::kUnparseableVerdict, "classification reply lacks a structured verdict");
  SubstantiveVerdict v;
  try {
    v = block->get<SubstantiveVerdict>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kUnparseableVerdict, std::string("malformed verdict: ") + e.what());
  }
  if (v.substantive && v.changed_aspects.empty())
    fail(ErrorCode::kUnparseableVerdict, "substantive verdict without changed aspects");
  return v;
}

namespace {

std::string date_or_open(const std::optional<Date>& d) { return d ? d->iso() : "open"; }

std::string render_classify(const VersionTransition& t, const PromptSet& prompts) {
  auto prov = display(t.next.provision);
  auto pf = t.previous.valid_from.iso(), pt = date_or_open(t.previous.valid_to), nf = t.next.valid_from.iso();
  return render_template(prompts.classify_transition, {{"provision", prov},
                                                      {"prev_from", pf},
                                                      {"prev_to", pt},
                                                      {"prev_text", t.previous.text},
                                                      {"next_from", nf},
                                                      {"next_text", t.next.text}});
}

/// Per-invocation context: RNG, trace and a verdict cache so one transition
/// is never classified twice in a pipeline run.
class PipelineRun {
 public:
  PipelineRun(ChatProvider& chat, const PromptSet& prompts, const GenerationOptions& options)
      : chat_(chat), prompts_(prompts), options_(options), rng_(options.seed) {
    trace_.seed = options.seed;
  }

  SplitMix64& rng() { return rng_; }
  GenerationTrace& trace() { return trace_; }
  const PromptSet& prompts() const { return prompts_; }

  std::string ask(const std::string& stage, const std::string& system, const std::string& user) {
    auto ex = chat_.chat(system, user);
    trace_.steps.push_back({stage, system, user, ex.transcript_id});
    return ex.response_text;
  }

  SubstantiveVerdict classify(const VersionTransition& t) {
    auto key = std::make_pair(t.next.provision, t.next.valid_from);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    auto reply = ask("classify", prompts_.generation_system, render_classify(t, prompts_));
    SubstantiveVerdict v;
    try {
      v = parse_substantive_verdict(reply);
    } catch (const Error& e) {
      note(std::string("classification unparseable: ") + e.what());
      v = SubstantiveVerdict{false, "unparseable", {}};
    }
    cache_.emplace(key, v);
    return v;
  }

  void note(std::string msg) { trace_.notes.push_back(std::move(msg)); }

  std::optional<std::pair<std::string, std::string>> question_answer(const std::string& reply) {
    auto block = extract_json_block(reply);
    if (!block || !block->contains("question") || !block->contains("answer") || !(*block)["question"].is_string() ||
        !(*block)["answer"].is_string()) {
      note("generation reply lacks question/answer block");
      return std::nullopt;
    }
    auto q = trim((*block)["question"].get<std::string>());
    auto a = trim((*block)["answer"].get<std::string>());
    if (q.empty() || a.empty()) {
      note("generation reply has empty question or answer");
      return std::nullopt;
    }
    return std::make_pair(q, a);
  }

  std::optional<Date> fact_date(const std::string& question) {
    try {
      return fact_date_of(question, options_.as_of_policy).date;
    } catch (const Error&) {
      note("generated question carries no extractable fact date");
      return std::nullopt;
    }
  }

 private:
  ChatProvider& chat_;
  const PromptSet& prompts_;
  const GenerationOptions& options_;
  SplitMix64 rng_;
  GenerationTrace trace_;
  std::map<std::pair<ProvisionRef, Date>, SubstantiveVerdict> cache_;
};

TargetVersion target_of(const ProvisionVersion& v) { return {v.provision, v.valid_from, v.valid_to}; }

QAPair make_pair(QACategory category, StatuteCode statute, std::string question, std::string answer, Date fact,
                 std::vector<TargetVersion> targets, GenerationTrace trace) {
  QAPair p;
  p.id = make_pair_id(category, question);
  p.category = category;
  p.statute = statute;
  p.question = std::move(question);
  p.reference_answer = std::move(answer);
  p.fact_date = fact;
  p.target_versions = std::move(targets);
  p.generation_trace = std::move(trace);
  return p;
}

std::string render_versions(const std::vector<ProvisionVersion>& history) {
  std::string out;
  for (const auto& v : history) {
    out += display(v.provision) + " (valid " + v.valid_from.iso() + " to " + date_or_open(v.valid_to) + ")";
    if (!v.heading.empty()) out += " " + v.heading;
    out += ":\n" + (v.repealed ? std::string("(aufgehoben)") : v.text) + "\n\n";
  }
  return out;
}

}  // namespace

SubstantiveVerdict classify_transition(ChatProvider& chat, VersionTransition& t, const PromptSet& prompts) {
  auto ex = chat.chat(prompts.generation_system, render_classify(t, prompts));
  auto v = parse_substantive_verdict(ex.response_text);
  t.substantive = v;
  return v;
}

// ---------------------------------------------------------------------------
// Pipelines

QAPair gen_post_cutoff(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                       const PromptSet& prompts) {
  auto transitions = corpus.list_transitions(options.cutoff);
  if (transitions.empty())
    fail(ErrorCode::kNoCandidates, "no version transition after the cutoff " + options.cutoff.iso());

  PipelineRun run(chat, prompts, options);
  run.trace().cutoff = options.cutoff;
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    run.trace().attempts = attempt;
    const auto& t = transitions[run.rng().below(transitions.size())];
    if (!run.classify(t).substantive) {
      run.note("editorial transition " + display(t.next.provision) + " @" + t.next.valid_from.iso());
      continue;
    }
    const Date window_from = std::max(options.cutoff.plus_days(1), t.next.valid_from);
    if (t.next.valid_to && !(window_from < *t.next.valid_to)) continue;
    auto prov = display(t.next.provision);
    auto wf = window_from.iso(), wt = date_or_open(t.next.valid_to);
    auto pf = t.previous.valid_from.iso(), pt = date_or_open(t.previous.valid_to), nf = t.next.valid_from.iso();
    auto reply = run.ask("generate", prompts.generation_system,
                         render_template(prompts.generate_post_cutoff, {{"provision", prov},
                                                                        {"window_from", wf},
                                                                        {"window_to", wt},
                                                                        {"prev_from", pf},
                                                                        {"prev_to", pt},
                                                                        {"prev_text", t.previous.text},
                                                                        {"next_from", nf},
                                                                        {"next_text", t.next.text}}));
    auto qa = run.question_answer(reply);
    if (!qa) continue;
    auto fact = run.fact_date(qa->first);
    if (!fact) continue;
    auto pair = make_pair(QACategory::kPostCutoff, t.next.provision.statute, qa->first, qa->second, *fact,
                          {target_of(t.next)}, run.trace());
    if (auto why = structural_violation(pair, options.cutoff, options.as_of_policy)) {
      run.note("draft rejected: " + *why);
      continue;
    }
    return pair;
  }
  fail(ErrorCode::kExhausted, "post-cutoff pipeline exhausted after " + std::to_string(options.max_attempts) + " attempts");
}

QAPair gen_pre_amendment(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                         const PromptSet& prompts) {
  std::vector<ProvisionRef> candidates;
  for (const auto& ref : corpus.provisions()) {
    if (corpus.version_history(ref).size() >= 2) candidates.push_back(ref);
  }
  if (candidates.empty()) fail(ErrorCode::kNoCandidates, "no provision has more than one version");

  PipelineRun run(chat, prompts, options);
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    run.trace().attempts = attempt;
    const auto& ref = candidates[run.rng().below(candidates.size())];
    const auto& chain = corpus.version_history(ref);
    std::vector<VersionTransition> substantive;
    for (std::size_t i = 1; i < chain.size(); ++i) {
      VersionTransition t{chain[i - 1], chain[i], std::nullopt};
      t.substantive = run.classify(t);
      if (t.substantive->substantive) substantive.push_back(std::move(t));
    }
    if (substantive.empty()) {
      run.note("no substantive transition in " + display(ref));
      continue;
    }
    const auto& t = substantive[run.rng().below(substantive.size())];
    auto prov = display(ref);
    auto wf = t.previous.valid_from.iso(), wt = t.previous.valid_to->iso(), nf = t.next.valid_from.iso();
    auto reply = run.ask("generate", prompts.generation_system,
                         render_template(prompts.generate_pre_amendment, {{"provision", prov},
                                                                          {"window_from", wf},
                                                                          {"window_to", wt},
                                                                          {"prev_from", wf},
                                                                          {"prev_to", wt},
                                                                          {"prev_text", t.previous.text},
                                                                          {"next_from", nf},
                                                                          {"next_text", t.next.text}}));
    auto qa = run.question_answer(reply);
    if (!qa) continue;
    auto fact = run.fact_date(qa->first);
    if (!fact) continue;
    auto pair = make_pair(QACategory::kPreAmendment, ref.statute, qa->first, qa->second, *fact,
                          {target_of(t.previous)}, run.trace());
    if (auto why = structural_violation(pair, options.cutoff, options.as_of_policy)) {
      run.note("draft rejected: " + *why);
      continue;
    }
    return pair;
  }
  fail(ErrorCode::kExhausted, "pre-amendment pipeline exhausted after " + std::to_string(options.max_attempts) + " attempts");
}

QAPair gen_multi_provision(const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                           const PromptSet& prompts) {
  std::vector<StatuteCode> statutes;
  if (options.statute) {
    if (!corpus.has_toc(*options.statute))
      fail(ErrorCode::kNoCandidates, "statute " + std::string(to_string(*options.statute)) + " has no outline");
    statutes.push_back(*options.statute);
  } else {
    for (auto s : kAllStatutes) {
      if (corpus.has_toc(s)) statutes.push_back(s);
    }
  }
  std::vector<ProvisionRef> anchors;
  for (auto s : statutes) {
    for (auto& leaf : toc_leaves(corpus.toc(s))) anchors.push_back(std::move(leaf));
  }
  if (anchors.empty()) fail(ErrorCode::kNoCandidates, "no statute outline with provisions is available");

  PipelineRun run(chat, prompts, options);
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    run.trace().attempts = attempt;
    const auto anchor = anchors[run.rng().below(anchors.size())];
    const auto& toc = corpus.toc(anchor.statute);
    auto statute_label = std::string(statute_name(anchor.statute));
    auto anchor_label = display(anchor);
    auto toc_text = render_toc(toc);

    // Stage 1: anchor plus thematically connected paragraphs.
    auto select_reply = run.ask("select", prompts.generation_system,
                                render_template(prompts.multi_select,
                                                {{"anchor", anchor_label}, {"statute", statute_label}, {"toc", toc_text}}));
    std::vector<ProvisionRef> selected{anchor};
    try {
      for (auto& r : parse_toc_selection(select_reply, toc, options.max_select)) {
        if (r != anchor && selected.size() < options.max_select) selected.push_back(std::move(r));
      }
    } catch (const Error& e) {
      run.note(std::string("selection unparseable: ") + e.what());
      continue;
    }
    if (selected.size() < 2) {
      run.note("selection yielded a single provision");
      continue;
    }

    std::vector<VersionTransition> substantive;
    for (const auto& ref : selected) {
      const auto& chain = corpus.version_history(ref);
      for (std::size_t i = 1; i < chain.size(); ++i) {
        VersionTransition t{chain[i - 1], chain[i], std::nullopt};
        t.substantive = run.classify(t);
        if (t.substantive->substantive) substantive.push_back(std::move(t));
      }
    }
    if (substantive.empty()) {
      run.note("no selected provision has a substantive historical change");
      continue;
    }
    const auto& pivot = substantive[run.rng().below(substantive.size())];

    // Every selected provision must already be in force inside the window.
    Date window_from = pivot.previous.valid_from;
    for (const auto& ref : selected) window_from = std::max(window_from, corpus.version_history(ref).front().valid_from);
    const Date window_to = *pivot.previous.valid_to;
    if (!(window_from < window_to)) {
      run.note("selected provisions never coexist inside the historical window");
      continue;
    }

    // Stage 2: temporally neutral draft from current versions.
    std::string current;
    for (const auto& ref : selected) {
      const auto& v = corpus.current_version(ref);
      current += display(ref) + (v.heading.empty() ? "" : " " + v.heading) + ":\n" + v.text + "\n\n";
    }
    auto draft = run.question_answer(run.ask("draft", prompts.generation_system,
                                             render_template(prompts.multi_draft, {{"provisions", current}})));
    if (!draft) continue;

    // Stage 3: temporalize with all historical versions.
    std::string history;
    for (const auto& ref : selected) history += render_versions(corpus.version_history(ref));
    auto hist_label = display(pivot.previous.provision);
    auto wf = window_from.iso(), wt = window_to.iso();
    auto final_reply = run.ask("temporalize", prompts.generation_system,
                               render_template(prompts.multi_temporalize, {{"window_from", wf},
                                                                           {"window_to", wt},
                                                                           {"historical", hist_label},
                                                                           {"draft_question", draft->first},
                                                                           {"draft_answer", draft->second},
                                                                           {"versions", history}}));
    auto qa = run.question_answer(final_reply);
    if (!qa) continue;
    auto fact = run.fact_date(qa->first);
    if (!fact) continue;

    std::vector<TargetVersion> targets;
    bool resolvable = true;
    for (const auto& ref : selected) {
      try {
        targets.push_back(target_of(corpus.resolve_as_of(ref, *fact)));
      } catch (const Error&) {
        resolvable = false;
        break;
      }
    }
    if (!resolvable) {
      run.note("a selected provision is not in force at the generated fact date");
      continue;
    }
    auto pair = make_pair(QACategory::kMultiProvision, anchor.statute, qa->first, qa->second, *fact, std::move(targets),
                          run.trace());
    if (auto why = structural_violation(pair, options.cutoff, options.as_of_policy)) {
      run.note("draft rejected: " + *why);
      continue;
    }
    return pair;
  }
  fail(ErrorCode::kExhausted, "multi-provision pipeline exhausted after " + std::to_string(options.max_attempts) + " attempts");
}

QAPair generate_pair(QACategory category, const Corpus& corpus, ChatProvider& chat, const GenerationOptions& options,
                     const PromptSet& prompts) {
  switch (category) {
    case QACategory::kPostCutoff: return gen_post_cutoff(corpus, chat, options, prompts);
    case QACategory::kPreAmendment: return gen_pre_amendment(corpus, chat, options, prompts);
    case QACategory::kMultiProvision: return gen_multi_provision(corpus, chat, options, prompts);
  }
  fail(ErrorCode::kPrecondition, "unknown category");
}

std::optional<std::string> structural_violation(const QAPair& pair, Date cutoff, AsOfPolicy policy) {
  try {
    if (fact_date_of(pair.question, policy).date != pair.fact_date) return "fact date does not round-trip through the question";
  } catch (const Error&) {
    return "question carries no extractable fact date";
  }
  if (pair.target_versions.empty()) return "no target versions";
  for (const auto& t : pair.target_versions) {
    if (!t.valid_at(pair.fact_date)) return "target " + display(t.provision) + " is not valid at the fact date";
  }
  switch (pair.category) {
    case QACategory::kPostCutoff: {
      for (const auto& t : pair.target_versions) {
        if (!(t.valid_from > cutoff)) return "post-cutoff target starts on or before the cutoff";
        if (pair.fact_date < t.valid_from) return "fact date precedes the post-cutoff version";
      }
      break;
    }
    case QACategory::kPreAmendment: {
      for (const auto& t : pair.target_versions) {
        if (!t.valid_to) return "pre-amendment target is the current version";
      }
      break;
    }
    case QACategory::kMultiProvision: {
      if (pair.target_versions.size() < 2) return "multi-provision pair needs at least two targets";
      bool historical = std::any_of(pair.target_versions.begin(), pair.target_versions.end(),
                                    [](const TargetVersion& t) { return t.valid_to.has_value(); });
      if (!historical) return "multi-provision pair has no historical target";
      break;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Duplicates

std::vector<std::pair<ProvisionRef, Date>> amendment_events(const QAPair& pair) {
  std::vector<std::pair<ProvisionRef, Date>> events;
  for (const auto& t : pair.target_versions) {
    if (pair.category == QACategory::kPostCutoff) {
      events.emplace_back(t.provision, t.valid_from);
    } else if (t.valid_to) {
      events.emplace_back(t.provision, *t.valid_to);
    }
  }
  return events;
}

std::vector<QAPair> detect_duplicates(std::vector<QAPair> pairs) {
  std::vector<std::size_t> parent(pairs.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<std::pair<ProvisionRef, Date>, std::size_t> first_owner;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (const auto& ev : amendment_events(pairs[i])) {
      auto [it, inserted] = first_owner.emplace(ev, i);
      if (!inserted) parent[find(i)] = find(it->second);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) groups[find(i)].push_back(i);
  for (auto& p : pairs) p.duplicate_group.reset();
  for (const auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    std::string smallest = pairs[members.front()].id;
    for (auto m : members) smallest = std::min(smallest, pairs[m].id);
    auto gid = "dup-" + Fnv1a().field(smallest).hex().substr(0, 12);
    for (auto m : members) pairs[m].duplicate_group = gid;
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(json& j, const ReviewState& s) {
  json reasons = json::array();
  for (auto r : s.reasons) reasons.push_back(to_string(r));
  j = json{{"status", to_string(s.status)},
           {"reasons", std::move(reasons)},
           {"reviewer", s.reviewer},
           {"decided_at", s.decided_at},
           {"revision", s.revision}};
}

void from_json(const json& j, ReviewState& s) {
  auto status = parse_review_status(j.value("status", "pending"));
  if (!status) fail(ErrorCode::kMalformedRecord, "unknown review status");
  s.status = *status;
  s.reasons.clear();
  for (const auto& r : j.value("reasons", json::array())) {
    auto reason = parse_rejection_reason(r.get<std::string>());
    if (!reason) fail(ErrorCode::kMalformedRecord, "unknown rejection reason " + r.dump());
    s.reasons.push_back(*reason);
  }
  s.reviewer = j.value("reviewer", "");
  s.decided_at = j.value("decided_at", "");
  s.revision = j.value("revision", std::int64_t{1});
}

void to_json(json& j, const TargetVersion& t) {
  j = json{{"statute", to_string(t.provision.statute)},
           {"paragraph", t.provision.paragraph},
           {"valid_from", t.valid_from.iso()},
           {"valid_to", t.valid_to ? json(t.valid_to->iso()) : json(nullptr)}};
}

void from_json(const json& j, TargetVersion& t) {
  t.provision = j.get<ProvisionRef>();
  t.valid_from = Date::parse_iso(j.at("valid_from").get<std::string>());
  t.valid_to.reset();
  if (j.contains("valid_to") && !j["valid_to"].is_null()) t.valid_to = Date::parse_iso(j["valid_to"].get<std::string>());
}

void to_json(json& j, const QAPair& p) {
  json steps = json::array();
  for (const auto& s : p.generation_trace.steps)
    steps.push_back(json{{"stage", s.stage}, {"system_prompt", s.system_prompt}, {"user_prompt", s.user_prompt},
                         {"transcript_id", s.transcript_id}});
  json trace{{"seed", p.generation_trace.seed},
             {"attempts", p.generation_trace.attempts},
             {"cutoff", p.generation_trace.cutoff ? json(p.generation_trace.cutoff->iso()) : json(nullptr)},
             {"steps", std::move(steps)},
             {"notes", p.generation_trace.notes}};
  j = json{{"id", p.id},
           {"category", to_string(p.category)},
           {"statute", to_string(p.statute)},
           {"question", p.question},
           {"reference_answer", p.reference_answer},
           {"fact_date", p.fact_date.iso()},
           {"target_versions", p.target_versions},
           {"duplicate_group", p.duplicate_group ? json(*p.duplicate_group) : json(nullptr)},
           {"review", p.review},
           {"generation_trace", std::move(trace)}};
}

void from_json(const json& j, QAPair& p) {
  p.id = j.at("id").get<std::string>();
  auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) fail(ErrorCode::kMalformedRecord, "unknown category " + j["category"].dump());
  p.category = *cat;
  p.statute = parse_statute_or_throw(j.at("statute").get<std::string>());
  p.question = j.at("question").get<std::string>();
  p.reference_answer = j.at("reference_answer").get<std::string>();
  p.fact_date = Date::parse_iso(j.at("fact_date").get<std::string>());
  p.target_versions = j.at("target_versions").get<std::vector<TargetVersion>>();
  p.duplicate_group.reset();
  if (j.contains("duplicate_group") && !j["duplicate_group"].is_null()) p.duplicate_group = j["duplicate_group"].get<std::string>();
  p.review = j.contains("review") ? j["review"].get<ReviewState>() : ReviewState{};
  p.generation_trace = {};
  if (j.contains("generation_trace")) {
    const auto& t = j["generation_trace"];
    p.generation_trace.seed = t.value("seed", std::uint64_t{0});
    p.generation_trace.attempts = t.value("attempts", 0);
    if (t.contains("cutoff") && !t["cutoff"].is_null()) p.generation_trace.cutoff = Date::parse_iso(t["cutoff"].get<std::string>());
    for (const auto& s : t.value("steps", json::array()))
      p.generation_trace.steps.push_back({s.value("stage", ""), s.value("system_prompt", ""), s.value("user_prompt", ""),
                                          s.value("transcript_id", "")});
    p.generation_trace.notes = t.value("notes", std::vector<std::string>{});
  }
}

std::vector<QAPair> parse_dataset(std::string_view jsonl) {
  std::vector<QAPair> out;
  for_each_line(jsonl, [&](std::string_view line, std::size_t line_no) {
    try {
      out.push_back(json::parse(line).get<QAPair>());
    } catch (const json::exception& e) {
      fail(ErrorCode::kMalformedRecord, "dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::kMalformedRecord, "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  return out;
}

std::vector<QAPair> load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

std::string serialize_dataset(const std::vector<QAPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += json(p).dump();
    out += '\n';
  }
  return out;
}

}  // namespace asof
