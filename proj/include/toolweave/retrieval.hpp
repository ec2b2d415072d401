#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/text.hpp"

namespace toolweave {

inline constexpr std::size_t kDefaultEmbeddingDims = 256;

struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;

  std::size_t dims() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

inline double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline EmbeddingVector normalized(std::vector<double> values) {
  const double norm = l2_norm(values);
  if (norm > 0.0)
    for (double& x : values) x /= norm;
  return EmbeddingVector{std::move(values), norm > 0.0};
}

/// Cosine similarity; 0 when either side is the zero vector.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimsMismatch, "cosine over " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " dims");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Bucket index of one character n-gram in the hashed embedder.
inline std::size_t ngram_bucket(std::string_view gram, std::size_t dims) {
  return static_cast<std::size_t>(fnv1a64(gram) % dims);
}

/// Deterministic offline embedder: lowercase character 3-gram counts hashed
/// into `dims` buckets, then L2-normalized. Texts shorter than three bytes
/// contribute themselves as a single gram.
inline EmbeddingVector hashed_ngram_embedding(std::string_view text, std::size_t dims = kDefaultEmbeddingDims) {
  if (text.empty()) fail(ErrorCode::EmptyText, "cannot embed empty text");
  const std::string lower = to_lower(text);
  std::vector<double> v(dims, 0.0);
  if (lower.size() < 3) {
    v[ngram_bucket(lower, dims)] += 1.0;
  } else {
    for (std::size_t i = 0; i + 3 <= lower.size(); ++i) v[ngram_bucket(std::string_view(lower).substr(i, 3), dims)] += 1.0;
  }
  return normalized(std::move(v));
}

inline std::string embed_payload(const std::vector<std::string>& texts, std::size_t dims) {
  return Json{{"texts", texts}, {"dims", dims}}.dump();
}

/// Stub answer for an embed request: `{"vectors": [[...], ...]}`.
inline std::string stub_embed_response(const std::string& payload) {
  const Json req = Json::parse(payload);
  const std::size_t dims = req.value("dims", kDefaultEmbeddingDims);
  Json vectors = Json::array();
  for (const auto& t : req.at("texts")) vectors.push_back(hashed_ngram_embedding(t.get<std::string>(), dims).values);
  return Json{{"vectors", std::move(vectors)}}.dump();
}

/// Embedding provider routed through the gateway so live, replay and stub
/// modes share one code path.
class Embedder {
 public:
  Embedder(Gateway& gateway, std::size_t dims = kDefaultEmbeddingDims) : gateway_(&gateway), dims_(dims) {}

  std::size_t dims() const { return dims_; }

  EmbeddingVector embed(std::string_view text) const { return embed_batch({std::string(text)}).front(); }

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const {
    for (const auto& t : texts)
      if (t.empty()) fail(ErrorCode::EmptyText, "cannot embed empty text");
    if (texts.empty()) return {};
    const std::string response = gateway_->complete(Role::Embed, embed_payload(texts, dims_));
    Json j;
    try {
      j = Json::parse(response);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::GatewayError, std::string("unparseable embedding response: ") + e.what());
    }
    const Json& vectors = j.is_object() ? j.at("vectors") : j;
    if (!vectors.is_array() || vectors.size() != texts.size()) {
      fail(ErrorCode::GatewayError, "embedding response has the wrong number of vectors");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& v : vectors) {
      auto values = v.get<std::vector<double>>();
      if (values.size() != dims_) {
        fail(ErrorCode::DimsMismatch, "provider returned " + std::to_string(values.size()) + " dims, expected " +
                                          std::to_string(dims_));
      }
      out.push_back(normalized(std::move(values)));
    }
    return out;
  }

 private:
  Gateway* gateway_;
  std::size_t dims_;
};

// ---------------------------------------------------------------------------
// Vector store
// ---------------------------------------------------------------------------

enum class EntryKind { Triplet, Passage, Artifact };

inline std::string_view to_string(EntryKind k) {
  switch (k) {
    case EntryKind::Triplet: return "triplet";
    case EntryKind::Passage: return "passage";
    case EntryKind::Artifact: return "artifact";
  }
  return "triplet";
}

inline EntryKind parse_entry_kind(std::string_view raw) {
  if (raw == "triplet") return EntryKind::Triplet;
  if (raw == "passage") return EntryKind::Passage;
  if (raw == "artifact") return EntryKind::Artifact;
  fail(ErrorCode::MalformedRecord, "unknown store entry kind '" + std::string(raw) + "'");
}

struct StoreEntry {
  EmbeddingVector vector;
  EntryKind kind = EntryKind::Triplet;
  Json metadata = Json::object();
  friend bool operator==(const StoreEntry&, const StoreEntry&) = default;
};

struct ScoredId {
  std::string id;
  double score = 0.0;
  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Exact cosine store. Reads are const and may run concurrently; inserts
/// must not overlap with reads.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dims = kDefaultEmbeddingDims) : dims_(dims) {}

  std::size_t dims() const { return dims_; }
  std::size_t size() const { return entries_.size(); }

  void insert(const std::string& id, EmbeddingVector vector, EntryKind kind, Json metadata = Json::object()) {
    if (vector.dims() != dims_) {
      fail(ErrorCode::DimsMismatch, "entry '" + id + "' has " + std::to_string(vector.dims()) + " dims, store has " +
                                        std::to_string(dims_));
    }
    if (entries_.count(id)) fail(ErrorCode::DuplicateEntry, "store already holds '" + id + "'");
    entries_.emplace(id, StoreEntry{std::move(vector), kind, std::move(metadata)});
  }

  const StoreEntry* find(const std::string& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t count(EntryKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const auto& kv) { return kv.second.kind == kind; }));
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Exact top-k by cosine, descending, ties by id.
  std::vector<ScoredId> top_k(const EmbeddingVector& query, std::size_t k,
                              std::optional<EntryKind> kind_filter = std::nullopt) const {
    if (k < 1) fail(ErrorCode::InvalidConfig, "k must be >= 1");
    if (query.dims() != dims_) {
      fail(ErrorCode::DimsMismatch, "query has " + std::to_string(query.dims()) + " dims, store has " +
                                        std::to_string(dims_));
    }
    std::vector<ScoredId> scored;
    for (const auto& [id, e] : entries_) {
      if (kind_filter && e.kind != *kind_filter) continue;
      scored.push_back({id, cosine(query.values, e.vector.values)});
    }
    auto better = [](const ScoredId& a, const ScoredId& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    scored.resize(n);
    return scored;
  }

  std::string serialize() const {
    std::string out =
        Json{{"format", "toolweave-store"}, {"version", 1}, {"dims", dims_}, {"count", entries_.size()}}.dump();
    out += '\n';
    for (const auto& [id, e] : entries_) {
      out += Json{{"id", id},
                  {"kind", std::string(to_string(e.kind))},
                  {"normalized", e.vector.normalized},
                  {"metadata", e.metadata},
                  {"vector", e.vector.values}}
                 .dump();
      out += '\n';
    }
    return out;
  }

  static VectorStore parse(const std::string& text, const std::string& source = "") {
    std::optional<VectorStore> store;
    std::size_t expected = 0;
    for_each_jsonl(text, source, [&](const Json& j, std::size_t line_no) {
      if (!store) {
        if (j.value("format", std::string{}) != "toolweave-store") {
          fail(ErrorCode::MalformedRecord, source + " line " + std::to_string(line_no) + ": missing store header");
        }
        store.emplace(j.at("dims").get<std::size_t>());
        expected = j.at("count").get<std::size_t>();
        return;
      }
      EmbeddingVector v{require_field(j, "vector", line_no).get<std::vector<double>>(), j.value("normalized", true)};
      store->insert(require_field(j, "id", line_no).get<std::string>(), std::move(v),
                    parse_entry_kind(require_field(j, "kind", line_no).get<std::string>()),
                    j.value("metadata", Json::object()));
    });
    if (!store) fail(ErrorCode::MalformedRecord, source + ": empty store file");
    if (store->size() != expected) fail(ErrorCode::MalformedRecord, source + ": header count does not match entries");
    return std::move(*store);
  }

  static VectorStore load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }
  void save(const std::filesystem::path& path) const { write_file(path, serialize()); }

  friend bool operator==(const VectorStore&, const VectorStore&) = default;

 private:
  std::size_t dims_;
  std::map<std::string, StoreEntry> entries_;
};

// ---------------------------------------------------------------------------
// Triplets and indexing
// ---------------------------------------------------------------------------

struct TripletText {
  NodeId source;
  NodeId target;
  std::string text;
};

/// "SOURCE —can_use_this_tool_output→ TARGET: <source desc> / <target desc>"
inline TripletText verbalize_triplet(const Edge& edge, const FusedGraph& graph) {
  if (edge.relation != Relation::CanUseToolOutput) {
    fail(ErrorCode::WrongRelation, "only " + std::string(kCanUseToolOutput) + " edges verbalize as triplets");
  }
  const Node* src = graph.find(edge.src);
  const Node* dst = graph.find(edge.dst);
  if (src == nullptr || dst == nullptr) fail(ErrorCode::UnknownNode, "triplet endpoint missing from graph");
  std::string text = src->label + " —can_use_this_tool_output→ " + dst->label + ": " + src->text + " / " +
                     dst->text;
  return TripletText{edge.src, edge.dst, std::move(text)};
}

inline std::string triplet_entry_id(const NodeId& src, const NodeId& dst) {
  return "triplet:" + src.value + "->" + dst.value;
}

struct IndexStats {
  std::size_t triplets = 0;
  std::size_t passages = 0;
};

/// Embeds every tool triplet and passage of `graph` into `store`.
inline IndexStats index_graph(VectorStore& store, const FusedGraph& graph, const Embedder& embedder) {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<EntryKind> kinds;
  std::vector<Json> metas;
  for (const auto& e : graph.edges()) {
    if (e.relation != Relation::CanUseToolOutput) continue;
    TripletText t = verbalize_triplet(e, graph);
    ids.push_back(triplet_entry_id(e.src, e.dst));
    metas.push_back({{"source", e.src.value}, {"target", e.dst.value}, {"text", t.text}});
    texts.push_back(std::move(t.text));
    kinds.push_back(EntryKind::Triplet);
  }
  for (const auto& n : graph.nodes()) {
    if (n.kind != NodeKind::Passage || trim(n.text).empty()) continue;
    ids.push_back(n.id.value);
    texts.push_back(n.text);
    kinds.push_back(EntryKind::Passage);
    metas.push_back({{"node", n.id.value}, {"doc", n.payload_ref ? n.payload_ref->source_id : ""}});
  }
  IndexStats stats;
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < texts.size(); start += kBatch) {
    const std::size_t stop = std::min(texts.size(), start + kBatch);
    std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                   texts.begin() + static_cast<std::ptrdiff_t>(stop));
    auto vectors = embedder.embed_batch(batch);
    for (std::size_t i = start; i < stop; ++i) {
      store.insert(ids[i], std::move(vectors[i - start]), kinds[i], metas[i]);
      (kinds[i] == EntryKind::Triplet ? stats.triplets : stats.passages)++;
    }
  }
  return stats;
}

}  // namespace toolweave
