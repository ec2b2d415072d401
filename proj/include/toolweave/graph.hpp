#pragma once

#include <algorithm>
#include <compare>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "toolweave/dependency.hpp"
#include "toolweave/error.hpp"
#include "toolweave/io.hpp"
#include "toolweave/schema.hpp"
#include "toolweave/text.hpp"

namespace toolweave {

enum class NodeKind { Tool, Entity, Passage };

inline std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Tool: return "tool";
    case NodeKind::Entity: return "entity";
    case NodeKind::Passage: return "passage";
  }
  return "tool";
}

inline NodeKind parse_node_kind(std::string_view raw) {
  if (raw == "tool") return NodeKind::Tool;
  if (raw == "entity") return NodeKind::Entity;
  if (raw == "passage") return NodeKind::Passage;
  fail(ErrorCode::MalformedRecord, "unknown node kind '" + std::string(raw) + "'");
}

/// Stable identifier "<kind>:<canonical label>". Ordering on the string is the
/// canonical node order used everywhere ties need breaking.
struct NodeId {
  std::string value;

  static NodeId make(NodeKind kind, std::string_view label) {
    return NodeId{std::string(to_string(kind)) + ":" + std::string(label)};
  }
  static NodeId tool(std::string_view tool_id) { return make(NodeKind::Tool, tool_id); }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;
};

/// Where a node came from: a tool id, or a doc id plus byte span.
struct PayloadRef {
  std::string source_id;
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const PayloadRef&, const PayloadRef&) = default;
};

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Entity;
  std::string label;
  std::string text;  // tool description or passage body; empty for entities
  std::optional<PayloadRef> payload_ref;
  friend bool operator==(const Node&, const Node&) = default;
};

enum class Relation { CanUseToolOutput, DocTriple, MentionsTool };

inline constexpr std::string_view kCanUseToolOutput = "_can_use_this_tool_output";

inline std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::CanUseToolOutput: return kCanUseToolOutput;
    case Relation::DocTriple: return "doc_triple";
    case Relation::MentionsTool: return "mentions_tool";
  }
  return "doc_triple";
}

inline Relation parse_relation(std::string_view raw) {
  if (raw == kCanUseToolOutput) return Relation::CanUseToolOutput;
  if (raw == "doc_triple") return Relation::DocTriple;
  if (raw == "mentions_tool") return Relation::MentionsTool;
  fail(ErrorCode::MalformedRecord, "unknown relation '" + std::string(raw) + "'");
}

struct Edge {
  NodeId src;
  NodeId dst;
  Relation relation = Relation::DocTriple;
  std::string predicate;  // doc_triple only
  double weight = 1.0;

  auto key() const { return std::tie(src, dst, relation, predicate); }
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Immutable heterogeneous graph. Nodes and edges are held in canonical order;
/// adjacency lists store edge indices.
class FusedGraph {
 public:
  FusedGraph() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::optional<std::size_t> index_of(const NodeId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const NodeId& id) const { return index_.count(id) > 0; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  const Node* find(const NodeId& id) const {
    auto i = index_of(id);
    return i ? &nodes_[*i] : nullptr;
  }

  const std::vector<std::size_t>& out_edges(std::size_t node_index) const { return out_[node_index]; }
  const std::vector<std::size_t>& in_edges(std::size_t node_index) const { return in_[node_index]; }

  std::map<Relation, std::size_t> relation_counts() const {
    std::map<Relation, std::size_t> counts;
    for (const auto& e : edges_) ++counts[e.relation];
    return counts;
  }

  std::size_t count_kind(NodeKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.kind == kind; }));
  }

  const Edge* find_edge(const NodeId& src, const NodeId& dst, Relation relation) const {
    auto i = index_of(src);
    if (!i) return nullptr;
    for (std::size_t e : out_[*i]) {
      if (edges_[e].dst == dst && edges_[e].relation == relation) return &edges_[e];
    }
    return nullptr;
  }

  /// Hash of the sorted node-id set.
  std::string fingerprint() const {
    std::string joined;
    for (const auto& n : nodes_) {
      joined += n.id.value;
      joined += '\n';
    }
    return hex64(fnv1a64(joined));
  }

  friend bool operator==(const FusedGraph& a, const FusedGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  friend class GraphBuilder;

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::map<NodeId, std::size_t> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

/// Accumulates nodes and edges, then produces a canonical FusedGraph.
/// Re-adding a node keeps the first copy (filling in empty text); re-adding an
/// edge with the same (src, dst, relation, predicate) keeps the larger weight.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  explicit GraphBuilder(const FusedGraph& g) { add_graph(g); }

  void add_node(Node node) {
    auto it = nodes_.find(node.id);
    if (it == nodes_.end()) {
      nodes_.emplace(node.id, std::move(node));
    } else if (it->second.text.empty() && !node.text.empty()) {
      it->second.text = std::move(node.text);
    }
  }

  void add_edge(Edge edge) {
    if (!(edge.weight > 0.0)) fail(ErrorCode::MalformedRecord, "edge weight must be positive");
    if (edge.relation != Relation::DocTriple) edge.predicate.clear();
    auto key = std::make_tuple(edge.src, edge.dst, edge.relation, edge.predicate);
    auto it = edges_.find(key);
    if (it == edges_.end()) {
      edges_.emplace(std::move(key), std::move(edge));
    } else {
      it->second.weight = std::max(it->second.weight, edge.weight);
    }
  }

  void add_graph(const FusedGraph& g) {
    for (const auto& n : g.nodes()) add_node(n);
    for (const auto& e : g.edges()) add_edge(e);
  }

  bool has_node(const NodeId& id) const { return nodes_.count(id) > 0; }

  FusedGraph build() const {
    FusedGraph g;
    g.nodes_.reserve(nodes_.size());
    for (const auto& [id, n] : nodes_) {
      g.index_.emplace(id, g.nodes_.size());
      g.nodes_.push_back(n);
    }
    g.out_.assign(g.nodes_.size(), {});
    g.in_.assign(g.nodes_.size(), {});
    for (const auto& [_, e] : edges_) {
      auto s = g.index_.find(e.src);
      auto d = g.index_.find(e.dst);
      if (s == g.index_.end() || d == g.index_.end()) {
        fail(ErrorCode::UnknownNode, "edge " + e.src.value + " -> " + e.dst.value + " has a missing endpoint");
      }
      if (e.relation == Relation::CanUseToolOutput && e.src == e.dst) {
        fail(ErrorCode::MalformedRecord, "self-loop on " + e.src.value);
      }
      const std::size_t idx = g.edges_.size();
      g.edges_.push_back(e);
      g.out_[s->second].push_back(idx);
      g.in_[d->second].push_back(idx);
    }
    return g;
  }

 private:
  std::map<NodeId, Node> nodes_;
  std::map<std::tuple<NodeId, NodeId, Relation, std::string>, Edge> edges_;
};

// ---------------------------------------------------------------------------
// Tool graph
// ---------------------------------------------------------------------------

inline Node make_tool_node(const ToolSchema& t) {
  return Node{NodeId::tool(t.tool_id), NodeKind::Tool, t.tool_id, t.description, PayloadRef{t.tool_id, 0, 0}};
}

/// One Tool node per schema and one weighted `_can_use_this_tool_output` edge
/// per accepted (source, target) pair; weight counts the field-level links.
inline FusedGraph build_tool_graph(const ToolCatalog& catalog, const std::vector<ToolDependency>& deps) {
  GraphBuilder builder;
  for (const auto& [_, t] : catalog) builder.add_node(make_tool_node(t));
  std::map<ToolIdPair, double> weights;
  for (const auto& d : deps) {
    if (!d.accepted()) continue;
    const auto& c = d.candidate;
    for (const auto* id : {&c.source_tool, &c.target_tool}) {
      if (!catalog.contains(*id)) {
        fail(ErrorCode::UnknownToolInDependency, "dependency references unknown tool '" + *id + "'");
      }
    }
    if (c.source_tool == c.target_tool) continue;
    weights[{c.source_tool, c.target_tool}] += 1.0;
  }
  for (const auto& [pair, w] : weights) {
    builder.add_edge(Edge{NodeId::tool(pair.first), NodeId::tool(pair.second), Relation::CanUseToolOutput, "", w});
  }
  return builder.build();
}

// ---------------------------------------------------------------------------
// Document graph
// ---------------------------------------------------------------------------

struct ExtractedTriple {
  std::string subject;
  std::string predicate;
  std::string object;
};

struct PassageExtraction {
  std::vector<std::string> entities;  // canonical labels
  std::vector<ExtractedTriple> triples;
};

using EntityExtractor = std::function<PassageExtraction(std::string_view passage)>;

/// Predicate used for entity -> passage membership edges.
inline constexpr std::string_view kMentionedIn = "mentioned_in";

namespace detail {

inline bool is_word_char(char c) { return is_alnum(c) || c == '_'; }

inline bool is_stop_capital(const std::string& lower_word) {
  static const std::set<std::string> kStop = {
      "a",    "an",    "the",  "this", "that", "these", "those", "it",    "its",  "if",   "when",
      "then", "for",   "in",   "on",   "to",   "of",    "and",   "or",    "but",  "with", "after",
      "before", "each", "every", "use", "run",  "call",  "we",    "you",   "they", "our",  "all",
      "any",  "once",  "also", "note", "step", "first", "next",  "finally", "is",  "be",   "at"};
  return kStop.count(lower_word) > 0;
}

struct Word {
  std::string text;
  bool capital = false;
};

inline std::vector<std::vector<Word>> split_sentences(std::string_view text) {
  std::vector<std::vector<Word>> sentences(1);
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      const bool capital = std::isupper(static_cast<unsigned char>(current[0])) != 0;
      sentences.back().push_back(Word{current, capital});
      current.clear();
    }
  };
  for (char c : text) {
    if (is_word_char(c)) {
      current.push_back(c);
      continue;
    }
    flush();
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      if (!sentences.back().empty()) sentences.emplace_back();
    }
  }
  flush();
  if (sentences.back().empty()) sentences.pop_back();
  return sentences;
}

}  // namespace detail

/// Offline extractor: runs of capitalized words (minus common sentence
/// starters) become entities; consecutive entities in a sentence are linked
/// by the lowercased words between them.
inline PassageExtraction heuristic_entity_extractor(std::string_view passage) {
  PassageExtraction out;
  std::set<std::string> seen;
  for (const auto& sentence : detail::split_sentences(passage)) {
    struct Mention {
      std::string label;
      std::size_t begin, end;  // word indices [begin, end)
    };
    std::vector<Mention> mentions;
    std::size_t i = 0;
    while (i < sentence.size()) {
      if (!sentence[i].capital || detail::is_stop_capital(to_lower(sentence[i].text))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      std::string phrase;
      while (j < sentence.size() && sentence[j].capital && !detail::is_stop_capital(to_lower(sentence[j].text))) {
        if (!phrase.empty()) phrase += ' ';
        phrase += sentence[j].text;
        ++j;
      }
      if (auto label = detail::try_normalize(phrase)) mentions.push_back({*label, i, j});
      i = j;
    }
    for (const auto& m : mentions)
      if (seen.insert(m.label).second) out.entities.push_back(m.label);
    for (std::size_t k = 0; k + 1 < mentions.size(); ++k) {
      const auto& a = mentions[k];
      const auto& b = mentions[k + 1];
      if (a.label == b.label) continue;
      std::string predicate;
      for (std::size_t w = a.end; w < b.begin; ++w) {
        if (!predicate.empty()) predicate += '_';
        predicate += to_lower(sentence[w].text);
      }
      if (predicate.empty()) predicate = "related_to";
      out.triples.push_back({a.label, predicate, b.label});
    }
  }
  return out;
}

/// Gateway-backed extractor: sends `{"task": "extract_entities", "text": ...}`
/// on the generate role and expects `{"entities": [...], "triples": [[s, p, o], ...]}`.
inline EntityExtractor gateway_entity_extractor(Gateway& gateway) {
  return [&gateway](std::string_view passage) {
    const std::string response =
        gateway.complete(Role::Generate, Json{{"task", "extract_entities"}, {"text", std::string(passage)}}.dump());
    PassageExtraction out;
    Json j;
    try {
      j = Json::parse(response);
    } catch (const Json::parse_error&) {
      return out;
    }
    if (j.contains("entities") && j.at("entities").is_array()) {
      for (const auto& e : j.at("entities"))
        if (e.is_string())
          if (auto label = detail::try_normalize(e.get<std::string>())) out.entities.push_back(*label);
    }
    if (j.contains("triples") && j.at("triples").is_array()) {
      for (const auto& t : j.at("triples")) {
        if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() || !t[2].is_string()) continue;
        auto s = detail::try_normalize(t[0].get<std::string>());
        auto p = detail::try_normalize(t[1].get<std::string>());
        auto o = detail::try_normalize(t[2].get<std::string>());
        if (s && p && o && *s != *o) out.triples.push_back({*s, *p, *o});
      }
    }
    return out;
  };
}

struct PassageSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Paragraphs separated by blank lines; spans exclude surrounding whitespace.
inline std::vector<PassageSpan> split_paragraphs(std::string_view body) {
  std::vector<PassageSpan> spans;
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t start = pos;
    while (start < body.size() && detail::is_space(body[start])) ++start;
    if (start >= body.size()) break;
    std::size_t cursor = start;
    std::size_t stop = body.size();
    while (cursor < body.size()) {
      std::size_t nl = body.find('\n', cursor);
      if (nl == std::string_view::npos) break;
      std::size_t k = nl + 1;
      while (k < body.size() && (body[k] == ' ' || body[k] == '\t' || body[k] == '\r')) ++k;
      if (k < body.size() && body[k] == '\n') {
        stop = nl;
        break;
      }
      cursor = nl + 1;
    }
    std::size_t end = stop;
    while (end > start && detail::is_space(body[end - 1])) --end;
    spans.push_back({start, end});
    pos = stop;
    if (pos < body.size()) ++pos;
  }
  return spans;
}

inline NodeId passage_node_id(const std::string& doc_id, std::size_t paragraph) {
  return NodeId::make(NodeKind::Passage, doc_id + "#" + std::to_string(paragraph));
}

/// Passage nodes per paragraph, Entity nodes from the extractor, entity
/// triples, and entity -> passage membership edges. Tools listed in a
/// document's `referenced_tools` become entities of the passages naming them
/// (or of the first passage when none does).
inline FusedGraph ingest_document_graph(const std::vector<DocumentRecord>& docs,
                                        const EntityExtractor& extractor = heuristic_entity_extractor) {
  GraphBuilder builder;
  std::map<std::tuple<NodeId, NodeId, std::string>, double> triple_weights;
  std::set<std::pair<NodeId, NodeId>> membership;

  for (const auto& doc : docs) {
    const auto spans = split_paragraphs(doc.body);
    std::vector<NodeId> passage_ids;
    std::vector<std::vector<std::string>> passage_tokens;
    for (std::size_t p = 0; p < spans.size(); ++p) {
      const std::string text = doc.body.substr(spans[p].begin, spans[p].end - spans[p].begin);
      const NodeId pid = passage_node_id(doc.doc_id, p);
      builder.add_node(Node{pid, NodeKind::Passage, doc.doc_id + "#" + std::to_string(p), text,
                            PayloadRef{doc.doc_id, spans[p].begin, spans[p].end}});
      passage_ids.push_back(pid);
      passage_tokens.push_back(tokenize(text));

      const PassageExtraction ex = extractor(text);
      for (const auto& label : ex.entities) {
        const NodeId eid = NodeId::make(NodeKind::Entity, label);
        builder.add_node(Node{eid, NodeKind::Entity, label, "", std::nullopt});
        membership.emplace(eid, pid);
      }
      for (const auto& t : ex.triples) {
        const NodeId s = NodeId::make(NodeKind::Entity, t.subject);
        const NodeId o = NodeId::make(NodeKind::Entity, t.object);
        builder.add_node(Node{s, NodeKind::Entity, t.subject, "", std::nullopt});
        builder.add_node(Node{o, NodeKind::Entity, t.object, "", std::nullopt});
        membership.emplace(s, pid);
        membership.emplace(o, pid);
        triple_weights[{s, o, t.predicate}] += 1.0;
      }
    }
    if (passage_ids.empty()) continue;
    for (const auto& tool_id : doc.referenced_tools) {
      const NodeId eid = NodeId::make(NodeKind::Entity, tool_id);
      builder.add_node(Node{eid, NodeKind::Entity, tool_id, "", std::nullopt});
      const auto needle = tokenize(tool_id);
      bool linked = false;
      for (std::size_t p = 0; p < passage_ids.size(); ++p) {
        if (contains_token_sequence(passage_tokens[p], needle)) {
          membership.emplace(eid, passage_ids[p]);
          linked = true;
        }
      }
      if (!linked) membership.emplace(eid, passage_ids.front());
    }
  }
  for (const auto& [key, w] : triple_weights) {
    builder.add_edge(Edge{std::get<0>(key), std::get<1>(key), Relation::DocTriple, std::get<2>(key), w});
  }
  for (const auto& [eid, pid] : membership) {
    builder.add_edge(Edge{eid, pid, Relation::DocTriple, std::string(kMentionedIn), 1.0});
  }
  return builder.build();
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

/// Union of both graphs plus `mentions_tool` edges from every Entity whose
/// label, or Passage whose body, contains a tool id as a token run. Idempotent
/// and symmetric in its arguments.
inline FusedGraph fuse(const FusedGraph& a, const FusedGraph& b) {
  GraphBuilder builder;
  builder.add_graph(a);
  builder.add_graph(b);
  const FusedGraph merged = builder.build();

  std::vector<std::pair<NodeId, std::vector<std::string>>> tools;
  for (const auto& n : merged.nodes())
    if (n.kind == NodeKind::Tool) tools.emplace_back(n.id, tokenize(n.label));
  if (tools.empty()) return merged;

  for (const auto& n : merged.nodes()) {
    if (n.kind == NodeKind::Tool) continue;
    const auto tokens = tokenize(n.kind == NodeKind::Entity ? n.label : n.text);
    for (const auto& [tool_id, needle] : tools) {
      if (contains_token_sequence(tokens, needle)) {
        builder.add_edge(Edge{n.id, tool_id, Relation::MentionsTool, "", 1.0});
      }
    }
  }
  return builder.build();
}

// ---------------------------------------------------------------------------
// Graph files
// ---------------------------------------------------------------------------

inline std::string serialize_graph(const FusedGraph& g) {
  Json relations = Json::array();
  for (auto r : {Relation::CanUseToolOutput, Relation::DocTriple, Relation::MentionsTool})
    relations.push_back(std::string(to_string(r)));
  Json counts = Json::object();
  for (const auto& [r, c] : g.relation_counts()) counts[std::string(to_string(r))] = c;

  std::string out = Json{{"format", "toolweave-graph"},
                         {"version", 1},
                         {"node_count", g.node_count()},
                         {"edge_count", g.edge_count()},
                         {"relations", relations},
                         {"relation_counts", counts}}
                        .dump();
  out += '\n';
  for (const auto& n : g.nodes()) {
    Json j = {{"id", n.id.value}, {"kind", std::string(to_string(n.kind))}, {"label", n.label}, {"text", n.text}};
    if (n.payload_ref) {
      j["ref"] = {{"source", n.payload_ref->source_id}, {"begin", n.payload_ref->begin}, {"end", n.payload_ref->end}};
    }
    out += j.dump();
    out += '\n';
  }
  for (const auto& e : g.edges()) {
    Json j = {{"src", e.src.value}, {"dst", e.dst.value}, {"relation", std::string(to_string(e.relation))},
              {"weight", e.weight}};
    if (e.relation == Relation::DocTriple) j["predicate"] = e.predicate;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline FusedGraph parse_graph(const std::string& text, const std::string& source = "") {
  GraphBuilder builder;
  std::size_t expected_nodes = 0;
  std::size_t expected_edges = 0;
  std::size_t nodes_seen = 0;
  std::size_t edges_seen = 0;
  bool header = false;
  for_each_jsonl(text, source, [&](const Json& j, std::size_t line_no) {
    if (!header) {
      if (j.value("format", std::string{}) != "toolweave-graph") {
        fail(ErrorCode::MalformedRecord, source + " line " + std::to_string(line_no) + ": missing graph header");
      }
      expected_nodes = j.at("node_count").get<std::size_t>();
      expected_edges = j.at("edge_count").get<std::size_t>();
      header = true;
      return;
    }
    if (nodes_seen < expected_nodes) {
      Node n;
      n.id = NodeId{require_field(j, "id", line_no).get<std::string>()};
      n.kind = parse_node_kind(require_field(j, "kind", line_no).get<std::string>());
      n.label = string_field(j, "label", line_no);
      n.text = string_field(j, "text", line_no);
      if (j.contains("ref")) {
        const Json& r = j.at("ref");
        n.payload_ref = PayloadRef{r.at("source").get<std::string>(), r.at("begin").get<std::size_t>(),
                                   r.at("end").get<std::size_t>()};
      }
      builder.add_node(std::move(n));
      ++nodes_seen;
      return;
    }
    Edge e;
    e.src = NodeId{require_field(j, "src", line_no).get<std::string>()};
    e.dst = NodeId{require_field(j, "dst", line_no).get<std::string>()};
    e.relation = parse_relation(require_field(j, "relation", line_no).get<std::string>());
    e.predicate = string_field(j, "predicate", line_no);
    e.weight = require_field(j, "weight", line_no).get<double>();
    builder.add_edge(std::move(e));
    ++edges_seen;
  });
  if (!header) fail(ErrorCode::MalformedRecord, source + ": empty graph file");
  if (nodes_seen != expected_nodes || edges_seen != expected_edges) {
    fail(ErrorCode::MalformedRecord, source + ": header counts do not match records");
  }
  return builder.build();
}

inline void save_graph(const FusedGraph& g, const std::filesystem::path& path) { write_file(path, serialize_graph(g)); }
inline FusedGraph load_graph(const std::filesystem::path& path) { return parse_graph(read_file(path), path.string()); }

}  // namespace toolweave
