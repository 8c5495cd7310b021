#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "asof/error.hpp"
#include "asof/kernels.hpp"
#include "asof/retrieval.hpp"
#include "asof/util.hpp"
#include "sim.hpp"

using namespace asof;
using asof::testing::fixture_corpus;
using asof::testing::make_answerer;
using asof::testing::make_hash_embedder;
using asof::testing::TempDir;

namespace {

Date d(const char* iso) { return Date::parse_iso(iso); }

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::kIo;
}

ProvisionVersion version_with_text(std::string text) {
  ProvisionVersion v;
  v.provision = {StatuteCode::kBGB, "1"};
  v.valid_from = d("2000-01-01");
  v.text = std::move(text);
  return v;
}

std::string random_text(SplitMix64& rng, std::size_t words) {
  static const char* vocab[] = {"Der", "Mieter", "kann", "widersprechen.", "Frist", "Prüfung", "ä", "Abs.", "\n",
                                "Schaden;", "Euro", "zwei", "Monate", "Erklärung:", "ß"};
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocab[rng.below(15)];
  }
  return out;
}

/// Brute-force top-k: score every admissible row, full sort.
std::vector<ScoredChunk> brute_force(const ChunkIndex& index, const EmbeddingVector& q, const KnnQuery& query) {
  std::vector<ScoredChunk> all;
  double qn = 0;
  for (double x : q.values) qn += x * x;
  qn = std::sqrt(qn);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& c = index.chunks()[i];
    if (c.version.provision.statute != query.statute) continue;
    if (query.filter_enabled && !(c.version.valid_from <= query.as_of && (!c.valid_to || query.as_of < *c.valid_to)))
      continue;
    auto v = index.vector(i);
    double dot = 0, n = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      dot += v[k] * q.values[k];
      n += v[k] * v[k];
    }
    all.push_back({i, dot / (std::sqrt(n) * qn)});
  }
  std::sort(all.begin(), all.end(), [&](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto& ca = index.chunks()[a.row];
    const auto& cb = index.chunks()[b.row];
    if (ca.version != cb.version) return ca.version < cb.version;
    return ca.chunk_index < cb.chunk_index;
  });
  if (all.size() > query.k) all.resize(query.k);
  return all;
}

}  // namespace

TEST_CASE("chunking: short text is a single chunk") {
  std::string text(100, 'x');
  auto cs = chunk_version(version_with_text(text), {1000, 200});
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].text == text);
  CHECK_FALSE(cs[0].empty_marker);
}

TEST_CASE("chunking: 2500 chars at 1000/200") {
  SplitMix64 rng(5);
  std::string text;
  while (utf8_length(text) < 2500) text += "Ein Satz über die Frist. ";
  text = utf8_truncate(text, 2500);
  auto cs = chunk_version(version_with_text(text), {1000, 200});
  CHECK(cs.size() >= 3);
  CHECK(cs.size() <= 4);
  CHECK(reconstruct_text(cs) == text);
}

TEST_CASE("chunking: empty text is one flagged chunk") {
  auto cs = chunk_version(version_with_text(""));
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].empty_marker);
  CHECK(code_of([] { chunk_version(version_with_text("abc"), {10, 10}); }) == ErrorCode::kPrecondition);
}

TEST_CASE("chunking property: reconstruction, bounds and exact overlap") {
  SplitMix64 rng(11);
  for (int round = 0; round < 300; ++round) {
    auto text = random_text(rng, 1 + rng.below(600));
    std::size_t max = 20 + rng.below(400);
    std::size_t overlap = rng.below(max);
    auto cs = chunk_version(version_with_text(text), {max, overlap});
    REQUIRE(reconstruct_text(cs) == text);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      CHECK(utf8_length(cs[i].text) <= max);
      CHECK(cs[i].chunk_index == i);
      CHECK(text.substr(cs[i].begin, cs[i].end - cs[i].begin) == cs[i].text);
      if (i > 0) {
        CHECK(utf8_length(text.substr(cs[i].begin, cs[i - 1].end - cs[i].begin)) == overlap);
        CHECK(cs[i].begin > cs[i - 1].begin);
      }
    }
  }
}

TEST_CASE("cosine similarity") {
  CHECK(cosine_similarity({{1, 0, 0}}, {{1, 0, 0}}) == doctest::Approx(1.0));
  CHECK(cosine_similarity({{1, 0, 0}}, {{0, 1, 0}}) == doctest::Approx(0.0));
  CHECK(std::abs(cosine_similarity({{1, 1}}, {{1, 0}}) - 1 / std::sqrt(2.0)) < 1e-9);
  CHECK(code_of([] { cosine_similarity({{1, 0}}, {{1, 0, 0}}); }) == ErrorCode::kDimensionMismatch);
  CHECK(code_of([] { cosine_similarity({{0, 0}}, {{1, 0}}); }) == ErrorCode::kZeroVector);
}

TEST_CASE("index: build, determinism, persistence") {
  auto emb = make_hash_embedder();
  auto idx = build_index(fixture_corpus(), *emb);
  CHECK(idx.size() >= fixture_corpus().version_count());
  CHECK(idx.dimension() == 64);
  auto again = build_index(fixture_corpus(), *make_hash_embedder());
  CHECK(again.fingerprint() == idx.fingerprint());
  CHECK(build_index(fixture_corpus(), *make_hash_embedder(64, 1)).fingerprint() != idx.fingerprint());

  TempDir tmp;
  idx.save(tmp / "i.bin");
  auto loaded = ChunkIndex::load(tmp / "i.bin");
  CHECK(loaded.fingerprint() == idx.fingerprint());
  CHECK(loaded.chunks() == idx.chunks());
  CHECK(loaded.embedder_fingerprint() == emb->config().fingerprint());
}

namespace {
/// Returns ragged vectors on the second batch.
class BrokenEmbedder : public EmbeddingProvider {
 public:
  BrokenEmbedder() : EmbeddingProvider(asof::testing::mock_config("broken", ProviderKind::kEmbedding)) {}

 protected:
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({std::vector<double>(calls_++ == 0 ? 4 : 3, 1.0)});
    return out;
  }

 private:
  int calls_ = 0;
};
}  // namespace

TEST_CASE("index: dimension mismatch aborts the build") {
  BrokenEmbedder bad;
  TempDir tmp;
  CHECK(code_of([&] { build_index(fixture_corpus(), bad, {}, 1).save(tmp / "never.bin"); }) == ErrorCode::kDimensionMismatch);
  CHECK_FALSE(std::filesystem::exists(tmp / "never.bin"));
}

TEST_CASE("knn: self retrieval and agreement with brute force") {
  SplitMix64 rng(3);
  std::vector<Chunk> chunks;
  std::vector<double> matrix;
  const std::size_t dim = 16;
  for (int v = 0; v < 60; ++v) {
    for (int c = 0; c < 20; ++c) {
      Chunk ch;
      ch.version = {{v % 3 == 0 ? StatuteCode::kHGB : StatuteCode::kBGB, std::to_string(v / 4)},
                    Date::from_days(10000 + 400 * (v % 4))};
      if (v % 4 != 3) ch.valid_to = Date::from_days(10000 + 400 * (v % 4 + 1));
      ch.chunk_index = static_cast<std::size_t>(c);
      chunks.push_back(ch);
      auto vec = HashEmbedder::vector_for(std::to_string(v) + ":" + std::to_string(c), dim, 0);
      matrix.insert(matrix.end(), vec.values.begin(), vec.values.end());
    }
  }
  ChunkIndex idx(chunks, matrix, dim, "fp", {});
  auto self = EmbeddingVector{std::vector<double>(idx.vector(5).begin(), idx.vector(5).end())};
  auto top = knn_retrieve(idx, self, {6, Date::from_days(10000), StatuteCode::kHGB, true});
  REQUIRE_FALSE(top.empty());
  CHECK(top[0].row == 5);
  CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-12));

  for (int q = 0; q < 50; ++q) {
    auto query = HashEmbedder::vector_for("q" + std::to_string(q), dim, 9);
    KnnQuery kq{1 + rng.below(10), Date::from_days(9900 + static_cast<std::int32_t>(rng.below(2000))),
                rng.below(2) ? StatuteCode::kBGB : StatuteCode::kHGB, rng.below(2) == 0};
    auto got = knn_retrieve(idx, query, kq);
    auto serial = knn_retrieve_serial(idx, query, kq);
    auto want = brute_force(idx, query, kq);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].row == want[i].row);
      CHECK(std::abs(got[i].score - want[i].score) <= 1e-12);
      CHECK(got[i].row == serial[i].row);
      CHECK(got[i].score == serial[i].score);
    }
  }
  CHECK(code_of([&] { knn_retrieve(idx, {{1, 2}}, {}); }) == ErrorCode::kDimensionMismatch);
  CHECK(code_of([&] { knn_retrieve(ChunkIndex{}, {{1, 2}}, {}); }) == ErrorCode::kEmptyIndex);
}

TEST_CASE("knn: temporal filter hides the invalid best match, ablation returns it") {
  // Old version is a perfect match for the query but expired before as_of.
  std::vector<Chunk> chunks(2);
  chunks[0].version = {{StatuteCode::kBGB, "9"}, d("2000-01-01")};
  chunks[0].valid_to = d("2020-01-01");
  chunks[1].version = {{StatuteCode::kBGB, "9"}, d("2020-01-01")};
  std::vector<double> matrix = {1, 0, 0, 0.6, 0.8, 0};
  ChunkIndex idx(chunks, matrix, 3, "fp", {});
  EmbeddingVector q{{1, 0, 0}};
  auto filtered = knn_retrieve(idx, q, {6, d("2022-05-01"), StatuteCode::kBGB, true});
  REQUIRE(filtered.size() == 1);
  CHECK(filtered[0].row == 1);
  auto ablated = knn_retrieve(idx, q, {6, d("2022-05-01"), StatuteCode::kBGB, false});
  REQUIRE(ablated.size() == 2);
  CHECK(ablated[0].row == 0);
}

TEST_CASE("kernels: parallel and serial cosine are bit-identical") {
  SplitMix64 rng(1);
  const std::size_t dim = 33, rows = 500;
  std::vector<double> data(dim * rows);
  for (auto& x : data) x = rng.unit() - 0.5;
  std::vector<double> norms(rows);
  kernels::row_norms(data, dim, norms);
  std::vector<double> q(dim);
  for (auto& x : q) x = rng.unit();
  std::vector<std::uint32_t> idx(rows);
  for (std::uint32_t i = 0; i < rows; ++i) idx[i] = i;
  std::vector<double> a(rows), b(rows);
  kernels::MatrixView m{data, dim, norms};
  kernels::cosine_scores(m, q, kernels::l2_norm(q), idx, a);
  kernels::cosine_scores_serial(m, q, kernels::l2_norm(q), idx, b);
  CHECK(a == b);
}

TEST_CASE("statute verdicts") {
  CHECK(parse_statute_verdict("BGB") == StatuteCode::kBGB);
  CHECK(parse_statute_verdict("Handelsgesetzbuch") == StatuteCode::kHGB);
  CHECK(parse_statute_verdict("Es gilt die StPO.") == StatuteCode::kStPO);
  CHECK(code_of([] { parse_statute_verdict("the law of contracts"); }) == ErrorCode::kUnparseableVerdict);
  CHECK(code_of([] { parse_statute_verdict("BGB oder HGB"); }) == ErrorCode::kUnparseableVerdict);
}

TEST_CASE("toc selection parsing") {
  const auto& toc = fixture_corpus().toc(StatuteCode::kHGB);
  auto four = parse_toc_selection("§ 316, § 317, § 322, § 323", toc, 8);
  REQUIRE(four.size() == 4);
  CHECK(four[3].paragraph == "323");
  CHECK(four[0].statute == StatuteCode::kHGB);
  CHECK(parse_toc_selection("§ 316 und § 999", toc, 8).size() == 1);
  CHECK(parse_toc_selection("§ 316, § 316, § 317", toc, 8).size() == 2);
  CHECK(parse_toc_selection("§ 316, § 317, § 322", toc, 2).size() == 2);
  CHECK(code_of([&] { parse_toc_selection("none", toc, 8); }) == ErrorCode::kUnparseableVerdict);
  auto rendered = render_toc(toc);
  CHECK(rendered.find("§ 323 Verantwortlichkeit des Abschlussprüfers") != std::string::npos);
}

TEST_CASE("rag_knn: worked example picks the version in force") {
  const auto& corpus = fixture_corpus();
  auto emb = make_hash_embedder();
  auto idx = build_index(corpus, *emb);
  auto model = make_answerer();
  const std::string q =
      "Am 10. Februar 2025 erhält Mieter M die Kündigung. Am 20. Februar 2025 widerspricht er per E-Mail. "
      "Ist der Widerspruch nach § 574b BGB formwirksam?";
  auto b = rag_knn_context("q1", q, corpus, idx, *emb, *model, PromptSet::defaults(), {20, 8, true});
  CHECK(b.as_of.date == d("2025-02-20"));
  CHECK(b.statute == StatuteCode::kBGB);
  CHECK(is_temporally_sound(b));
  bool has_new = false, has_old = false;
  for (const auto& p : b.provisions) {
    if (p.provision.paragraph == "574b") (p.valid_from == d("2025-01-01") ? has_new : has_old) = true;
  }
  CHECK(has_new);
  CHECK_FALSE(has_old);
  CHECK(b.provisions.size() == 5);  // k exceeds candidates: all valid BGB provisions

  auto calls = model->call_count();
  CHECK(code_of([&] { rag_knn_context("q2", "ohne Datum", corpus, idx, *emb, *model, PromptSet::defaults()); }) ==
        ErrorCode::kNoDateFound);
  CHECK(model->call_count() == calls);
}

TEST_CASE("rag_toc: the liability cap follows the fact date unless the filter is off") {
  const auto& corpus = fixture_corpus();
  auto model = make_answerer();
  const std::string q = "Am 10.03.2020 verletzt Prüfer P fahrlässig seine Pflichten. Haftung nach § 323 HGB?";
  auto b = rag_toc_context("q", q, corpus, *model, PromptSet::defaults());
  CHECK(is_temporally_sound(b));
  const ProvisionVersion* cap = nullptr;
  for (const auto& p : b.provisions) {
    if (p.provision.paragraph == "323") cap = &p;
  }
  REQUIRE(cap);
  CHECK(cap->text.find("eine Million Euro") != std::string::npos);

  auto off = rag_toc_context("q", q, corpus, *model, PromptSet::defaults(), {6, 8, false});
  CHECK_FALSE(is_temporally_sound(off));
  CHECK(off.trace.front().kind == "filter_disabled");
  for (const auto& p : off.provisions) {
    if (p.provision.paragraph == "323") CHECK(p.text.find("1,5 Millionen Euro") != std::string::npos);
  }
}

TEST_CASE("rag_toc: provisions not yet in force are dropped and traced") {
  const auto& corpus = fixture_corpus();
  MockChat model(asof::testing::mock_config("m"));
  model.add_rule("Which German statute", "StPO");
  model.add_rule("Select at most", "§ 81a, § 81");
  auto b = rag_toc_context("q", "Am 1.1.2000 wird B untersucht.", corpus, model, PromptSet::defaults());
  REQUIRE(b.provisions.size() == 1);
  CHECK(b.provisions[0].provision.paragraph == "81");
  bool dropped = std::any_of(b.trace.begin(), b.trace.end(), [](const TraceEntry& t) { return t.kind == "dropped"; });
  CHECK(dropped);
}

TEST_CASE("context bundle json round trip") {
  auto model = make_answerer();
  auto b = rag_toc_context("q", "Am 3.3.2017 wird B nach § 81a StPO Blut entnommen.", fixture_corpus(), *model,
                           PromptSet::defaults());
  nlohmann::json j = b;
  auto back = j.get<ContextBundle>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.provisions == b.provisions);
}

TEST_CASE("temporal soundness rejects duplicates") {
  ContextBundle b;
  b.as_of.date = d("2025-02-20");
  b.provisions.push_back(fixture_corpus().current_version({StatuteCode::kBGB, "574b"}));
  CHECK(is_temporally_sound(b));
  b.provisions.push_back(b.provisions.back());
  CHECK_FALSE(is_temporally_sound(b));
}
