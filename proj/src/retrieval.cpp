#include "asof/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>

#include "asof/error.hpp"
#include "asof/kernels.hpp"
#include "asof/util.hpp"

namespace asof {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Chunking

namespace {

std::vector<std::size_t> code_point_offsets(std::string_view text) {
  std::vector<std::size_t> offs;
  offs.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offs.push_back(i);
  }
  offs.push_back(text.size());
  return offs;
}

bool is_sentence_end(std::string_view text, const std::vector<std::size_t>& offs, std::size_t cp) {
  // A split before code point `cp` is a sentence boundary if the previous
  // code point is a newline, or a space preceded by terminal punctuation.
  if (cp < 1) return false;
  char prev = text[offs[cp - 1]];
  if (prev == '\n') return true;
  if (prev != ' ' || cp < 2) return false;
  char before = text[offs[cp - 2]];
  return before == '.' || before == '!' || before == '?' || before == ';' || before == ':';
}

}  // namespace

std::vector<Chunk> chunk_version(const ProvisionVersion& version, const ChunkParams& params) {
  if (params.max_chars == 0 || params.overlap_chars >= params.max_chars)
    fail(ErrorCode::kPrecondition, "chunking requires 0 <= overlap_chars < max_chars");

  const VersionKey key{version.provision, version.valid_from};
  const std::string& text = version.text;
  std::vector<Chunk> chunks;
  if (text.empty()) {
    chunks.push_back(Chunk{key, version.valid_to, 0, "", 0, 0, true});
    return chunks;
  }

  const auto offs = code_point_offsets(text);
  const std::size_t n = offs.size() - 1;
  std::size_t start = 0;
  while (true) {
    std::size_t end = n;
    if (n - start > params.max_chars) {
      const std::size_t hard_end = start + params.max_chars;
      const std::size_t window_lo = std::max(start + params.overlap_chars + 1, hard_end - params.max_chars / 4);
      end = hard_end;
      for (std::size_t e = hard_end; e >= window_lo && e > start; --e) {
        if (is_sentence_end(text, offs, e)) {
          end = e;
          break;
        }
      }
    }
    Chunk c{key, version.valid_to, chunks.size(), text.substr(offs[start], offs[end] - offs[start]), offs[start], offs[end], false};
    chunks.push_back(std::move(c));
    if (end == n) break;
    start = end - params.overlap_chars;
  }
  return chunks;
}

std::string reconstruct_text(const std::vector<Chunk>& chunks) {
  std::string out;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i == 0) {
      out = chunks[i].text;
      continue;
    }
    const auto shared = chunks[i - 1].end - chunks[i].begin;
    out += chunks[i].text.substr(shared);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Index

ChunkIndex::ChunkIndex(std::vector<Chunk> chunks, std::vector<double> matrix, std::size_t dim,
                       std::string embedder_fingerprint, ChunkParams params)
    : chunks_(std::move(chunks)),
      matrix_(std::move(matrix)),
      dim_(dim),
      embedder_fingerprint_(std::move(embedder_fingerprint)),
      params_(params) {
  if (dim_ == 0 && !chunks_.empty()) fail(ErrorCode::kDimensionMismatch, "index dimension must be positive");
  if (matrix_.size() != chunks_.size() * dim_) fail(ErrorCode::kDimensionMismatch, "index matrix size mismatch");
  norms_.resize(chunks_.size());
  kernels::row_norms(matrix_, dim_, norms_);
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    if (!(norms_[i] > 0.0)) fail(ErrorCode::kZeroVector, "index row " + std::to_string(i) + " is a zero vector");
  }
}

std::string ChunkIndex::fingerprint() const {
  Fnv1a h;
  h.add_u64(dim_).field(embedder_fingerprint_).add_u64(params_.max_chars).add_u64(params_.overlap_chars);
  for (const auto& c : chunks_) {
    h.field(to_string(c.version.provision.statute)).field(c.version.provision.paragraph);
    h.add_u64(static_cast<std::uint64_t>(c.version.valid_from.days())).add_u64(c.chunk_index).field(c.text);
  }
  for (double x : matrix_) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h.add_u64(bits);
  }
  return h.hex();
}

namespace {

constexpr char kIndexMagic[8] = {'A', 'S', 'O', 'F', 'I', 'D', 'X', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& out, std::string_view s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorCode::kIo, "truncated index file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_str(std::istream& in) {
  auto n = get_u64(in);
  if (n > (1ULL << 32)) fail(ErrorCode::kIo, "corrupt index file");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) fail(ErrorCode::kIo, "truncated index file");
  return s;
}

constexpr std::int64_t kNoDate = INT64_MIN;

}  // namespace

void ChunkIndex::save(const std::filesystem::path& path) const {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kIndexMagic, sizeof kIndexMagic);
    put_u64(out, dim_);
    put_str(out, embedder_fingerprint_);
    put_u64(out, params_.max_chars);
    put_u64(out, params_.overlap_chars);
    put_u64(out, chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
      const auto& c = chunks_[i];
      put_str(out, to_string(c.version.provision.statute));
      put_str(out, c.version.provision.paragraph);
      put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(c.version.valid_from.days())));
      put_u64(out, static_cast<std::uint64_t>(c.valid_to ? static_cast<std::int64_t>(c.valid_to->days()) : kNoDate));
      put_u64(out, c.chunk_index);
      put_u64(out, c.begin);
      put_u64(out, c.end);
      put_u64(out, c.empty_marker ? 1 : 0);
      put_str(out, c.text);
      for (double x : vector(i)) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        put_u64(out, bits);
      }
    }
    if (!out) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ChunkIndex ChunkIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kIndexMagic, 8) != 0) fail(ErrorCode::kIo, path.string() + " is not an index file");
  const auto dim = get_u64(in);
  auto fp = get_str(in);
  ChunkParams params{get_u64(in), get_u64(in)};
  const auto n = get_u64(in);
  std::vector<Chunk> chunks;
  std::vector<double> matrix;
  chunks.reserve(n);
  matrix.reserve(n * dim);
  for (std::uint64_t i = 0; i < n; ++i) {
    Chunk c;
    c.version.provision.statute = parse_statute_or_throw(get_str(in));
    c.version.provision.paragraph = get_str(in);
    c.version.valid_from = Date::from_days(static_cast<std::int32_t>(static_cast<std::int64_t>(get_u64(in))));
    auto to = static_cast<std::int64_t>(get_u64(in));
    if (to != kNoDate) c.valid_to = Date::from_days(static_cast<std::int32_t>(to));
    c.chunk_index = get_u64(in);
    c.begin = get_u64(in);
    c.end = get_u64(in);
    c.empty_marker = get_u64(in) != 0;
    c.text = get_str(in);
    for (std::uint64_t d = 0; d < dim; ++d) {
      auto bits = get_u64(in);
      double x;
      std::memcpy(&x, &bits, sizeof x);
      matrix.push_back(x);
    }
    chunks.push_back(std::move(c));
  }
  return ChunkIndex(std::move(chunks), std::move(matrix), dim, std::move(fp), params);
}

json ChunkIndex::to_debug_json() const {
  json entries = json::array();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const auto& c = chunks_[i];
    auto v = vector(i);
    entries.push_back(json{{"statute", to_string(c.version.provision.statute)},
                           {"paragraph", c.version.provision.paragraph},
                           {"valid_from", c.version.valid_from.iso()},
                           {"valid_to", c.valid_to ? json(c.valid_to->iso()) : json(nullptr)},
                           {"chunk_index", c.chunk_index},
                           {"char_span", json::array({c.begin, c.end})},
                           {"empty_marker", c.empty_marker},
                           {"text", c.text},
                           {"vector", std::vector<double>(v.begin(), v.end())}});
  }
  return json{{"dimension", dim_},
              {"embedder_fingerprint", embedder_fingerprint_},
              {"chunk_params", {{"max_chars", params_.max_chars}, {"overlap_chars", params_.overlap_chars}}},
              {"fingerprint", fingerprint()},
              {"entries", std::move(entries)}};
}

ChunkIndex build_index(const Corpus& corpus, EmbeddingProvider& embedder, const ChunkParams& params,
                       std::size_t batch_size) {
  if (embedder.config().kind != ProviderKind::kEmbedding)
    fail(ErrorCode::kPrecondition, "build_index needs an embedding provider");
  if (batch_size == 0) batch_size = 1;
  std::vector<Chunk> chunks;
  for (const auto& ref : corpus.provisions()) {
    for (const auto& v : corpus.version_history(ref)) {
      auto cs = chunk_version(v, params);
      for (auto& c : cs) {
        if (c.empty_marker) c.text.clear();
        chunks.push_back(std::move(c));
      }
    }
  }
  std::vector<std::string> inputs;
  inputs.reserve(chunks.size());
  for (const auto& c : chunks) {
    inputs.push_back(c.empty_marker ? "[aufgehoben] " + display(c.version.provision) : c.text);
  }

  std::vector<double> matrix;
  std::size_t dim = 0;
  for (std::size_t off = 0; off < inputs.size(); off += batch_size) {
    auto count = std::min(batch_size, inputs.size() - off);
    auto vecs = embedder.embed(std::span<const std::string>(inputs).subspan(off, count));
    for (const auto& v : vecs) {
      if (dim == 0) {
        dim = v.dimension();
        matrix.reserve(dim * inputs.size());
      }
      if (v.dimension() != dim) fail(ErrorCode::kDimensionMismatch, "embedding dimension changed between batches");
      matrix.insert(matrix.end(), v.values.begin(), v.values.end());
    }
  }
  return ChunkIndex(std::move(chunks), std::move(matrix), dim, embedder.config().fingerprint(), params);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension() || a.dimension() == 0)
    fail(ErrorCode::kDimensionMismatch, "cosine similarity of vectors with dimensions " + std::to_string(a.dimension()) +
                                            " and " + std::to_string(b.dimension()));
  const double na = kernels::l2_norm(a.values);
  const double nb = kernels::l2_norm(b.values);
  if (na == 0.0 || nb == 0.0) fail(ErrorCode::kZeroVector, "cosine similarity of a zero vector");
  return std::clamp(kernels::dot(a.values, b.values) / (na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// kNN

namespace {

using ScoreFn = void (*)(kernels::MatrixView, std::span<const double>, double, std::span<const std::uint32_t>,
                         std::span<double>);

std::vector<ScoredChunk> knn_impl(const ChunkIndex& index, const EmbeddingVector& query, const KnnQuery& q,
                                  ScoreFn score) {
  if (index.empty()) fail(ErrorCode::kEmptyIndex, "kNN over an empty index");
  if (query.dimension() != index.dimension())
    fail(ErrorCode::kDimensionMismatch, "query dimension " + std::to_string(query.dimension()) + " != index dimension " +
                                            std::to_string(index.dimension()));
  const double qnorm = kernels::l2_norm(query.values);
  if (qnorm == 0.0) fail(ErrorCode::kZeroVector, "query is a zero vector");

  std::vector<std::uint32_t> rows;
  const auto& chunks = index.chunks();
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i].version.provision.statute != q.statute) continue;
    if (q.filter_enabled && !chunks[i].valid_at(q.as_of)) continue;
    rows.push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<double> scores(rows.size());
  score(kernels::MatrixView{index.matrix(), index.dimension(), index.norms()}, query.values, qnorm, rows, scores);

  std::vector<ScoredChunk> hits(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) hits[i] = {rows[i], scores[i]};
  auto better = [&](const ScoredChunk& a, const ScoredChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto& ca = chunks[a.row];
    const auto& cb = chunks[b.row];
    if (ca.version != cb.version) return ca.version < cb.version;
    return ca.chunk_index < cb.chunk_index;
  };
  const auto k = std::min(q.k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
  hits.resize(k);
  return hits;
}

}  // namespace

std::vector<ScoredChunk> knn_retrieve(const ChunkIndex& index, const EmbeddingVector& query, const KnnQuery& q) {
  return knn_impl(index, query, q, &kernels::cosine_scores);
}

std::vector<ScoredChunk> knn_retrieve_serial(const ChunkIndex& index, const EmbeddingVector& query, const KnnQuery& q) {
  return knn_impl(index, query, q, &kernels::cosine_scores_serial);
}

// ---------------------------------------------------------------------------
// Statute identification and ToC selection

std::string_view to_string(RetrievalStrategy s) { return s == RetrievalStrategy::kKnn ? "knn" : "toc"; }

bool is_temporally_sound(const ContextBundle& bundle) {
  std::set<ProvisionRef> seen;
  for (const auto& p : bundle.provisions) {
    if (!seen.insert(p.provision).second) return false;
    if (!p.valid_at(bundle.as_of.date)) return false;
  }
  return true;
}

StatuteCode parse_statute_verdict(std::string_view reply) {
  std::set<StatuteCode> found;
  std::string token;
  auto flush = [&] {
    if (auto code = parse_statute(token)) found.insert(*code);
    token.clear();
  };
  for (char c : reply) {
    bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (alnum) {
      token.push_back(c);
    } else {
      flush();
    }
  }
  flush();

  auto lower = ascii_lower(reply);
  for (auto code : kAllStatutes) {
    if (lower.find(ascii_lower(statute_name(code))) != std::string::npos) found.insert(code);
  }
  if (lower.find("buergerliches gesetzbuch") != std::string::npos) found.insert(StatuteCode::kBGB);

  if (found.size() != 1)
    fail(ErrorCode::kUnparseableVerdict, "statute reply names " + std::to_string(found.size()) + " statutes: " +
                                             utf8_truncate(reply, 120));
  return *found.begin();
}

StatuteCode identify_statute(const std::string& question, ChatProvider& chat, const PromptSet& prompts) {
  auto ex = chat.chat("You classify German legal questions by the statute that governs them.",
                      render_template(prompts.identify_statute, {{"question", question}}));
  return parse_statute_verdict(ex.response_text);
}

namespace {

void render_toc_node(const ToCNode& node, int depth, std::string& out) {
  out.append(static_cast<std::size_t>(depth) * 2, ' ');
  if (node.provision) {
    out += "§ " + node.provision->paragraph;
    if (!node.heading.empty()) out += " " + node.heading;
  } else {
    out += node.label;
    if (!node.heading.empty()) out += " " + node.heading;
  }
  out += '\n';
  for (const auto& c : node.children) render_toc_node(c, depth + 1, out);
}

}  // namespace

std::string render_toc(const ToCNode& toc) {
  std::string out;
  render_toc_node(toc, 0, out);
  return out;
}

std::vector<ProvisionRef> parse_toc_selection(std::string_view reply, const ToCNode& toc, std::size_t max_select) {
  static const std::regex section_re("(?:§)+\\s*(\\d+[a-z]*)");
  static const std::regex bare_re("(?:^|[^0-9A-Za-z])(\\d+[a-z]?)(?![0-9A-Za-z])");
  const std::string text(reply);

  std::vector<std::string> labels;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), section_re); it != std::sregex_iterator(); ++it)
    labels.push_back((*it)[1].str());
  if (labels.empty()) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), bare_re); it != std::sregex_iterator(); ++it)
      labels.push_back((*it)[1].str());
  }

  std::set<std::string> allowed;
  StatuteCode statute = StatuteCode::kBGB;
  for (const auto& leaf : toc_leaves(toc)) {
    allowed.insert(leaf.paragraph);
    statute = leaf.statute;
  }

  std::vector<ProvisionRef> out;
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!allowed.contains(l) || !seen.insert(l).second) continue;
    out.push_back({statute, l});
    if (out.size() == max_select) break;
  }
  if (out.empty()) fail(ErrorCode::kUnparseableVerdict, "no valid paragraph label in reply: " + utf8_truncate(reply, 120));
  return out;
}

std::vector<ProvisionRef> toc_select(ChatProvider& chat, const ToCNode& toc, const std::string& question,
                                     std::size_t max_select, const PromptSet& prompts) {
  if (toc.children.empty() && !toc.provision) fail(ErrorCode::kPrecondition, "empty table of contents");
  std::string statute_label = toc.heading.empty() ? toc.label : toc.heading;
  auto max_str = std::to_string(max_select);
  auto ex = chat.chat("You select statutory provisions for German legal questions.",
                      render_template(prompts.toc_select, {{"statute", statute_label},
                                                           {"max_select", max_str},
                                                           {"toc", render_toc(toc)},
                                                           {"question", question}}));
  return parse_toc_selection(ex.response_text, toc, max_select);
}

// ---------------------------------------------------------------------------
// RAG context assembly

namespace {

std::string hit_label(const Chunk& c) {
  return display(c.version.provision) + " @" + c.version.valid_from.iso() + " #" + std::to_string(c.chunk_index);
}

const ProvisionVersion& version_for(const Corpus& corpus, const VersionKey& key) {
  for (const auto& v : corpus.version_history(key.provision)) {
    if (v.valid_from == key.valid_from) return v;
  }
  fail(ErrorCode::kNotFound, "index refers to missing version " + display(key.provision) + " @" + key.valid_from.iso());
}

}  // namespace

ContextBundle rag_knn_context(const std::string& question_id, const std::string& question, const Corpus& corpus,
                              const ChunkIndex& index, EmbeddingProvider& embedder, ChatProvider& chat,
                              const PromptSet& prompts, const RagOptions& options) {
  ContextBundle bundle;
  bundle.question_id = question_id;
  bundle.strategy = RetrievalStrategy::kKnn;
  bundle.filter_enabled = options.filter_enabled;
  bundle.as_of = fact_date_of(question, options.as_of_policy);
  bundle.statute = identify_statute(question, chat, prompts);
  if (!options.filter_enabled) bundle.trace.push_back({"filter_disabled", "", std::nullopt, "temporal filter disabled"});

  auto qvec = embedder.embed_one(question);
  auto hits = knn_retrieve(index, qvec, {options.k, bundle.as_of.date, bundle.statute, options.filter_enabled});
  std::set<ProvisionRef> seen;
  for (const auto& hit : hits) {
    const auto& chunk = index.chunks()[hit.row];
    bundle.trace.push_back({"hit", hit_label(chunk), hit.score, ""});
    if (!seen.insert(chunk.version.provision).second) continue;
    bundle.provisions.push_back(version_for(corpus, chunk.version));
  }
  return bundle;
}

ContextBundle rag_toc_context(const std::string& question_id, const std::string& question, const Corpus& corpus,
                              ChatProvider& chat, const PromptSet& prompts, const RagOptions& options) {
  ContextBundle bundle;
  bundle.question_id = question_id;
  bundle.strategy = RetrievalStrategy::kToc;
  bundle.filter_enabled = options.filter_enabled;
  bundle.as_of = fact_date_of(question, options.as_of_policy);
  bundle.statute = identify_statute(question, chat, prompts);
  if (!options.filter_enabled) bundle.trace.push_back({"filter_disabled", "", std::nullopt, "temporal filter disabled"});

  const auto& toc = corpus.toc(bundle.statute);
  auto refs = toc_select(chat, toc, question, options.max_select, prompts);
  for (const auto& ref : refs) {
    bundle.trace.push_back({"selected", display(ref), std::nullopt, ""});
    if (!options.filter_enabled) {
      bundle.provisions.push_back(corpus.current_version(ref));
      continue;
    }
    try {
      bundle.provisions.push_back(corpus.resolve_as_of(ref, bundle.as_of.date));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotYetInForce && e.code() != ErrorCode::kNotFound) throw;
      bundle.trace.push_back({"dropped", display(ref), std::nullopt, e.what()});
    }
  }
  return bundle;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const ContextBundle& b) {
  json trace = json::array();
  for (const auto& t : b.trace) {
    json e{{"kind", t.kind}, {"label", t.label}};
    if (t.score) e["score"] = *t.score;
    if (!t.note.empty()) e["note"] = t.note;
    trace.push_back(std::move(e));
  }
  j = json{{"question_id", b.question_id},
           {"as_of", b.as_of.date.iso()},
           {"as_of_provenance", b.as_of.provenance == DateProvenance::kExplicitExtraction ? "explicit" : "caller"},
           {"statute", to_string(b.statute)},
           {"strategy", to_string(b.strategy)},
           {"filter_enabled", b.filter_enabled},
           {"provisions", b.provisions},
           {"trace", std::move(trace)}};
}

void from_json(const json& j, ContextBundle& b) {
  b.question_id = j.at("question_id").get<std::string>();
  b.as_of.date = Date::parse_iso(j.at("as_of").get<std::string>());
  b.as_of.provenance = j.value("as_of_provenance", "explicit") == "explicit" ? DateProvenance::kExplicitExtraction
                                                                             : DateProvenance::kCallerSupplied;
  b.statute = parse_statute_or_throw(j.at("statute").get<std::string>());
  b.strategy = j.at("strategy").get<std::string>() == "knn" ? RetrievalStrategy::kKnn : RetrievalStrategy::kToc;
  b.filter_enabled = j.value("filter_enabled", true);
  b.provisions = j.at("provisions").get<std::vector<ProvisionVersion>>();
  b.trace.clear();
  for (const auto& t : j.value("trace", json::array())) {
    TraceEntry e{t.value("kind", ""), t.value("label", ""), std::nullopt, t.value("note", "")};
    if (t.contains("score")) e.score = t["score"].get<double>();
    b.trace.push_back(std::move(e));
  }
}

}  // namespace asof
