#include "sim.hpp"

#include <atomic>
#include <cctype>
#include <regex>
#include <unistd.h>

#include <json.hpp>

#include "asof/datefinder.hpp"
#include "asof/prompts.hpp"
#include "asof/util.hpp"

namespace asof::testing {

using nlohmann::json;

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(ASOF_TEST_DATA) / name; }

const Corpus& fixture_corpus() {
  static const Corpus corpus = load_corpus(data_path("corpus.jsonl").string());
  return corpus;
}

ProviderConfig mock_config(const std::string& name, ProviderKind kind) {
  ProviderConfig c;
  c.name = name;
  c.model_id = name;
  c.kind = kind;
  c.wire = WireFormat::kMock;
  return c;
}

namespace {

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  auto a = s.find(open);
  if (a == std::string::npos) return {};
  a += open.size();
  auto b = close.empty() ? std::string::npos : s.find(close, a);
  return s.substr(a, b == std::string::npos ? std::string::npos : b - a);
}

/// Letters and digits only, lowercased: editorial edits vanish.
std::string skeleton(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c >= 0x80) out += static_cast<char>(std::tolower(c));
  }
  return out;
}

struct Window {
  Date from;
  std::optional<Date> to;
};

std::optional<Window> parse_window(const std::string& user) {
  static const std::regex re(R"(Fact date window: \[(\d{4}-\d{2}-\d{2}), (\d{4}-\d{2}-\d{2}|open)\))");
  std::smatch m;
  if (!std::regex_search(user, m, re)) return std::nullopt;
  Window w{Date::parse_iso(m[1].str()), std::nullopt};
  if (m[2].str() != "open") w.to = Date::parse_iso(m[2].str());
  return w;
}

Date pick_date(const Window& w, std::uint64_t h) {
  std::int32_t span = w.to ? w.to->days() - w.from.days() : 700;
  if (span <= 0) span = 1;
  return w.from.plus_days(static_cast<std::int32_t>(h % static_cast<std::uint64_t>(span)));
}

std::string written_date(Date d, std::uint64_t h) {
  return (h >> 17) % 2 == 0 ? german_long_date(d) : german_numeric_date(d);
}

std::string first_provision(const std::string& text) {
  static const std::regex re(R"(§ (\d+[a-z]*) (BGB|StPO|AO|EStG|BauGB|HGB))");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return {};
  return m[0].str();
}

std::string qa_json(const std::string& q, const std::string& a) {
  return "```json\n" + json{{"question", q}, {"answer", a}}.dump() + "\n```";
}

}  // namespace

MockChat::Responder generation_responder() {
  return [](const ChatExchange& ex) -> std::optional<std::string> {
    const auto& u = ex.user_prompt;
    const std::uint64_t h = Fnv1a().add(u).value();

    if (u.find("Compare two consecutive versions") != std::string::npos) {
      auto prev = between(u, "):\n", "\n\nNEXT VERSION");
      auto next = between(u.substr(u.find("NEXT VERSION")), "):\n", "");
      bool substantive = skeleton(prev) != skeleton(next);
      json v{{"substantive", substantive},
             {"changed_aspects", substantive ? json::array({"requirements"}) : json::array()},
             {"rationale", substantive ? "Die Voraussetzungen haben sich geändert." : "Nur redaktionelle Änderung."}};
      return "Bewertung:\n```json\n" + v.dump() + "\n```";
    }
    if (u.find("The anchor paragraph is") != std::string::npos) {
      auto anchor = between(u, "The anchor paragraph is ", ".");
      auto toc = between(u, "Table of contents:\n", "");
      static const std::regex leaf(R"(§ (\d+[a-z]*))");
      std::string reply;
      int taken = 0;
      for (auto it = std::sregex_iterator(toc.begin(), toc.end(), leaf); it != std::sregex_iterator() && taken < 2; ++it) {
        if (anchor.rfind((*it)[0].str() + " ", 0) == 0) continue;
        reply += (reply.empty() ? "" : ", ") + (*it)[0].str();
        ++taken;
      }
      return reply.empty() ? "keine" : reply;
    }
    if (u.find("Write a temporally neutral") != std::string::npos) {
      static const std::regex head(R"((?:^|\n)(§ \d+[a-z]* (?:BGB|StPO|AO|EStG|BauGB|HGB)))");
      std::string refs;
      for (auto it = std::sregex_iterator(u.begin(), u.end(), head); it != std::sregex_iterator(); ++it)
        refs += (refs.empty() ? "" : " und ") + (*it)[1].str();
      return qa_json("Ein Unternehmen streitet mit seinem Vertragspartner. Welche Rechtsfolgen ergeben sich aus " + refs + "?",
                     "Die Rechtsfolgen ergeben sich aus " + refs + ".");
    }
    if (auto w = parse_window(u)) {
      const Date d = pick_date(*w, h);
      const auto when = written_date(d, h);
      if (u.find("Rewrite the draft case") != std::string::npos) {
        auto draft = between(u, "Draft question:\n", "\n\nDraft answer:");
        auto hist = between(u, "at which ", " must be applied");
        return qa_json("Am " + when + " ereignet sich folgender Fall. " + draft,
                       "Maßgeblich ist " + hist + " in der am " + when + " geltenden Fassung.");
      }
      auto prov = first_provision(u);
      return qa_json("Am " + when + " gibt M eine Erklärung ab, die V für unwirksam hält. Ist die Erklärung nach " + prov +
                         " wirksam?",
                     "Nach " + prov + " in der am " + when + " geltenden Fassung ist die Erklärung zu beurteilen.");
    }
    return std::nullopt;
  };
}

std::shared_ptr<MockChat> make_generator(const std::string& name) {
  return std::make_shared<MockChat>(mock_config(name), generation_responder());
}

MockChat::Responder answering_responder() {
  return [](const ChatExchange& ex) -> std::optional<std::string> {
    const auto& u = ex.user_prompt;
    auto question = between(u, "Question:\n", "");
    if (u.rfind("Which German statute governs", 0) == 0) {
      static const std::regex code(R"(\b(BGB|StPO|AO|EStG|BauGB|HGB)\b)");
      std::smatch m;
      if (std::regex_search(question, m, code)) return "Das einschlägige Gesetz ist das " + m[1].str() + ".";
      return "BGB";
    }
    if (u.find("Select at most") != std::string::npos) {
      static const std::regex sec(R"(§ (\d+[a-z]*))");
      std::smatch m;
      std::string reply;
      if (std::regex_search(question, m, sec)) reply = m[0].str();
      auto toc = between(u, "Table of contents:\n", "\nQuestion:");
      if (std::regex_search(toc, m, sec)) reply += (reply.empty() ? "" : ", ") + m[0].str();
      return reply;
    }
    if (question.find("UNKLAR") != std::string::npos) return std::string(kDefaultRefusalSentinel);
    if (u.find("in force on the date of the facts") != std::string::npos)
      return "Nach der zum Tatzeitpunkt geltenden Fassung (" + between(u, "facts (", ")") + ") ist die Frage zu bejahen.";
    if (u.find("=== BEGIN WEB RESULTS ===") != std::string::npos) return "Laut den Suchergebnissen ist die Frage zu bejahen.";
    return "Die Frage ist zu verneinen.";
  };
}

std::shared_ptr<MockChat> make_answerer(const std::string& name, bool native_web) {
  auto cfg = mock_config(name);
  cfg.native_web_tool = native_web;
  return std::make_shared<MockChat>(cfg, answering_responder());
}

std::shared_ptr<HashEmbedder> make_hash_embedder(std::size_t dim, std::uint64_t seed) {
  auto cfg = mock_config("hash-embed", ProviderKind::kEmbedding);
  cfg.embedding_dim = dim;
  cfg.seed = seed;
  return std::make_shared<HashEmbedder>(cfg);
}

QAPair simple_pair(const std::string& id, const std::string& question, QACategory category, Date fact,
                   std::vector<TargetVersion> targets) {
  QAPair p;
  p.id = id;
  p.category = category;
  p.question = question;
  p.reference_answer = "Referenzantwort zu " + id;
  p.fact_date = fact;
  p.target_versions = std::move(targets);
  p.review.status = ReviewStatus::kAccepted;
  p.review.revision = 2;
  return p;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("asof-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace asof::testing
