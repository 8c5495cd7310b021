#include "asof/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include "asof/error.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kCodes = {"BGB", "StPO", "AO", "EStG", "BauGB", "HGB"};
constexpr std::array<std::string_view, 6> kNames = {
    "Bürgerliches Gesetzbuch", "Strafprozessordnung", "Abgabenordnung",
    "Einkommensteuergesetz",   "Baugesetzbuch",       "Handelsgesetzbuch"};

constexpr std::array<std::string_view, 7> kAspects = {
    "rights_obligations", "requirements", "deadlines", "thresholds",
    "percentages",        "amounts",      "jurisdictions"};

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

const json& require(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorCode::kMalformedRecord, line_prefix(line) + "missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  const auto& v = require(obj, key, line);
  if (!v.is_string()) fail(ErrorCode::kMalformedRecord, line_prefix(line) + "field '" + key + "' must be a string");
  return v.get<std::string>();
}

Date require_date(const json& obj, const char* key, std::size_t line) {
  auto s = require_string(obj, key, line);
  auto d = Date::try_parse_iso(s);
  if (!d) fail(ErrorCode::kMalformedRecord, line_prefix(line) + "field '" + key + "' is not an ISO-8601 date: " + s);
  return *d;
}

StatuteCode require_statute(const json& obj, std::size_t line) {
  auto s = require_string(obj, "statute", line);
  auto code = parse_statute(s);
  if (!code) fail(ErrorCode::kUnknownStatute, line_prefix(line) + "unknown statute '" + s + "'");
  return *code;
}

ToCNode parse_toc_node(const json& j, StatuteCode statute, std::size_t line) {
  if (!j.is_object()) fail(ErrorCode::kMalformedRecord, line_prefix(line) + "outline node must be an object");
  ToCNode node;
  node.label = require_string(j, "label", line);
  node.heading = j.contains("heading") && j["heading"].is_string() ? j["heading"].get<std::string>() : "";
  if (auto it = j.find("paragraph"); it != j.end() && !it->is_null()) {
    if (!it->is_string() || it->get<std::string>().empty())
      fail(ErrorCode::kMalformedRecord, line_prefix(line) + "outline paragraph must be a non-empty string");
    node.provision = ProvisionRef{statute, it->get<std::string>()};
  }
  if (auto it = j.find("children"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) fail(ErrorCode::kMalformedRecord, line_prefix(line) + "outline children must be an array");
    for (const auto& child : *it) node.children.push_back(parse_toc_node(child, statute, line));
  }
  if (node.provision && !node.children.empty())
    fail(ErrorCode::kMalformedRecord, line_prefix(line) + "outline node '" + node.label + "' has both a paragraph and children");
  return node;
}

void collect_leaves(const ToCNode& node, std::vector<ProvisionRef>& out) {
  if (node.provision) out.push_back(*node.provision);
  for (const auto& c : node.children) collect_leaves(c, out);
}

std::string utc_now_iso() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string_view to_string(StatuteCode code) { return kCodes[static_cast<std::size_t>(code)]; }
std::string_view statute_name(StatuteCode code) { return kNames[static_cast<std::size_t>(code)]; }

std::optional<StatuteCode> parse_statute(std::string_view token) {
  for (std::size_t i = 0; i < kCodes.size(); ++i) {
    if (kCodes[i] == token) return static_cast<StatuteCode>(i);
  }
  return std::nullopt;
}

StatuteCode parse_statute_or_throw(std::string_view token) {
  auto code = parse_statute(token);
  if (!code) fail(ErrorCode::kUnknownStatute, "unknown statute '" + std::string(token) + "'");
  return *code;
}

std::string display(const ProvisionRef& ref) {
  return "§ " + ref.paragraph + " " + std::string(to_string(ref.statute));
}

std::vector<ProvisionRef> toc_leaves(const ToCNode& root) {
  std::vector<ProvisionRef> out;
  collect_leaves(root, out);
  return out;
}

std::string_view to_string(ChangeAspect aspect) { return kAspects[static_cast<std::size_t>(aspect)]; }

std::optional<ChangeAspect> parse_change_aspect(std::string_view token) {
  for (std::size_t i = 0; i < kAspects.size(); ++i) {
    if (kAspects[i] == token) return static_cast<ChangeAspect>(i);
  }
  return std::nullopt;
}

const std::vector<ProvisionVersion>& Corpus::version_history(const ProvisionRef& ref) const {
  auto it = chains_.find(ref);
  if (it == chains_.end()) fail(ErrorCode::kNotFound, "unknown provision " + display(ref));
  return it->second;
}

const ProvisionVersion& Corpus::resolve_as_of(const ProvisionRef& ref, Date date) const {
  const auto& chain = version_history(ref);
  if (date < chain.front().valid_from)
    fail(ErrorCode::kNotYetInForce, display(ref) + " not in force on " + date.iso() + " (earliest version " +
                                        chain.front().valid_from.iso() + ")");
  // Last version whose valid_from <= date; the chain is gapless so it is the only candidate.
  auto it = std::upper_bound(chain.begin(), chain.end(), date,
                             [](Date d, const ProvisionVersion& v) { return d < v.valid_from; });
  const auto& v = *std::prev(it);
  if (!v.valid_at(date))
    fail(ErrorCode::kNotFound, display(ref) + " has no version in force on " + date.iso());
  return v;
}

const ProvisionVersion& Corpus::current_version(const ProvisionRef& ref) const {
  return version_history(ref).back();
}

std::vector<VersionTransition> Corpus::list_transitions(std::optional<Date> after) const {
  std::vector<VersionTransition> out;
  for (const auto& [ref, chain] : chains_) {
    for (std::size_t i = 1; i < chain.size(); ++i) {
      if (after && !(chain[i].valid_from > *after)) continue;
      out.push_back(VersionTransition{chain[i - 1], chain[i], std::nullopt});
    }
  }
  return out;
}

const ToCNode& Corpus::toc(StatuteCode statute) const {
  auto it = tocs_.find(statute);
  if (it == tocs_.end()) fail(ErrorCode::kNotFound, "no outline for " + std::string(to_string(statute)));
  return it->second;
}

std::vector<ProvisionRef> Corpus::provisions() const {
  std::vector<ProvisionRef> out;
  out.reserve(chains_.size());
  for (const auto& [ref, chain] : chains_) out.push_back(ref);
  return out;
}

std::vector<ProvisionRef> Corpus::provisions(StatuteCode statute) const {
  std::vector<ProvisionRef> out;
  for (const auto& [ref, chain] : chains_) {
    if (ref.statute == statute) out.push_back(ref);
  }
  return out;
}

std::size_t Corpus::version_count() const {
  std::size_t n = 0;
  for (const auto& [ref, chain] : chains_) n += chain.size();
  return n;
}

std::string Corpus::serialize() const {
  std::string out;
  for (const auto& [ref, chain] : chains_) {
    for (const auto& v : chain) {
      out += json(v).dump();
      out += '\n';
    }
  }
  for (const auto& [statute, root] : tocs_) {
    json rec{{"statute", to_string(statute)}, {"toc", root}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

Corpus ingest_corpus(std::string_view jsonl, const IngestOptions& options) {
  Corpus corpus;
  corpus.metadata_.source = options.source_label;
  corpus.metadata_.ingested_at = options.ingested_at.empty() ? utc_now_iso() : options.ingested_at;

  std::map<StatuteCode, std::size_t> outline_lines;

  for_each_line(jsonl, [&](std::string_view line, std::size_t line_no) {
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "invalid JSON: " + e.what());
    }
    if (!rec.is_object()) fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "record must be a JSON object");
    auto statute = require_statute(rec, line_no);

    if (rec.contains("toc")) {
      if (corpus.tocs_.contains(statute))
        fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "second outline for " + std::string(to_string(statute)));
      corpus.tocs_.emplace(statute, parse_toc_node(rec["toc"], statute, line_no));
      outline_lines[statute] = line_no;
      return;
    }

    ProvisionVersion v;
    v.provision = {statute, require_string(rec, "paragraph", line_no)};
    if (v.provision.paragraph.empty()) fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "empty paragraph label");
    v.heading = require_string(rec, "heading", line_no);
    v.text = require_string(rec, "text", line_no);
    v.valid_from = require_date(rec, "valid_from", line_no);
    if (auto it = rec.find("valid_to"); it != rec.end() && !it->is_null()) v.valid_to = require_date(rec, "valid_to", line_no);
    if (auto it = rec.find("repealed"); it != rec.end()) {
      if (!it->is_boolean()) fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "field 'repealed' must be a boolean");
      v.repealed = it->get<bool>();
    }
    if (v.repealed && !v.text.empty())
      fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "repealed version must have empty text");
    if (v.valid_to && !(v.valid_from < *v.valid_to))
      fail(ErrorCode::kMalformedRecord, line_prefix(line_no) + "valid_from must precede valid_to");
    corpus.chains_[v.provision].push_back(std::move(v));
  });

  for (auto& [ref, chain] : corpus.chains_) {
    std::stable_sort(chain.begin(), chain.end(),
                     [](const ProvisionVersion& a, const ProvisionVersion& b) { return a.valid_from < b.valid_from; });
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const auto& cur = chain[i];
      const auto& nxt = chain[i + 1];
      if (!cur.valid_to)
        fail(ErrorCode::kChainViolation, display(ref) + ": open-ended version from " + cur.valid_from.iso() +
                                             " is followed by version from " + nxt.valid_from.iso());
      if (*cur.valid_to < nxt.valid_from)
        fail(ErrorCode::kChainViolation, display(ref) + ": gap between " + cur.valid_to->iso() + " and " + nxt.valid_from.iso());
      if (*cur.valid_to > nxt.valid_from)
        fail(ErrorCode::kChainViolation, display(ref) + ": versions from " + cur.valid_from.iso() + " and " +
                                             nxt.valid_from.iso() + " overlap");
    }
  }

  for (const auto& [statute, root] : corpus.tocs_) {
    for (const auto& leaf : toc_leaves(root)) {
      if (!corpus.chains_.contains(leaf))
        fail(ErrorCode::kMalformedRecord, line_prefix(outline_lines[statute]) + "outline references " + display(leaf) +
                                              " which has no versions");
    }
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  IngestOptions opts;
  opts.source_label = path;
  return ingest_corpus(read_file(path), opts);
}

void to_json(json& j, const ProvisionRef& ref) {
  j = json{{"statute", to_string(ref.statute)}, {"paragraph", ref.paragraph}};
}

void from_json(const json& j, ProvisionRef& ref) {
  ref.statute = parse_statute_or_throw(j.at("statute").get<std::string>());
  ref.paragraph = j.at("paragraph").get<std::string>();
}

void to_json(json& j, const ProvisionVersion& v) {
  j = json{{"statute", to_string(v.provision.statute)},
           {"paragraph", v.provision.paragraph},
           {"heading", v.heading},
           {"valid_from", v.valid_from.iso()},
           {"valid_to", v.valid_to ? json(v.valid_to->iso()) : json(nullptr)},
           {"text", v.text}};
  if (v.repealed) j["repealed"] = true;
}

void from_json(const json& j, ProvisionVersion& v) {
  v.provision = {parse_statute_or_throw(j.at("statute").get<std::string>()), j.at("paragraph").get<std::string>()};
  v.heading = j.value("heading", "");
  v.text = j.value("text", "");
  v.valid_from = Date::parse_iso(j.at("valid_from").get<std::string>());
  v.valid_to.reset();
  if (j.contains("valid_to") && !j["valid_to"].is_null()) v.valid_to = Date::parse_iso(j["valid_to"].get<std::string>());
  v.repealed = j.value("repealed", false);
}

void to_json(json& j, const ToCNode& node) {
  j = json{{"label", node.label}, {"heading", node.heading}};
  if (node.provision) j["paragraph"] = node.provision->paragraph;
  json children = json::array();
  for (const auto& c : node.children) children.push_back(c);
  j["children"] = std::move(children);
}

void to_json(json& j, const SubstantiveVerdict& v) {
  json aspects = json::array();
  for (auto a : v.changed_aspects) aspects.push_back(to_string(a));
  j = json{{"substantive", v.substantive}, {"rationale", v.rationale}, {"changed_aspects", aspects}};
}

void from_json(const json& j, SubstantiveVerdict& v) {
  v.substantive = j.at("substantive").get<bool>();
  v.rationale = j.value("rationale", "");
  v.changed_aspects.clear();
  if (j.contains("changed_aspects")) {
    for (const auto& a : j["changed_aspects"]) {
      auto parsed = parse_change_aspect(a.get<std::string>());
      if (!parsed) fail(ErrorCode::kUnparseableVerdict, "unknown change aspect " + a.dump());
      v.changed_aspects.push_back(*parsed);
    }
  }
  std::sort(v.changed_aspects.begin(), v.changed_aspects.end());
  v.changed_aspects.erase(std::unique(v.changed_aspects.begin(), v.changed_aspects.end()), v.changed_aspects.end());
}

}  // namespace asof
