#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/ppr.hpp"
#include "toolweave/retrieval.hpp"
#include "toolweave/schema.hpp"

namespace toolweave {

// ---------------------------------------------------------------------------
// Plan artifacts
// ---------------------------------------------------------------------------

struct PlanStep {
  std::size_t step_index = 0;  // 1-based
  std::string tool_id;
  std::map<std::string, Binding> argument_bindings;
  std::set<std::size_t> depends_on;
  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct PlanArtifact {
  std::string artifact_id;  // empty until stored
  std::string query_id;
  std::vector<PlanStep> steps;
  std::vector<std::string> supporting_passage_ids;
  std::string subgraph_fingerprint;
  std::string provenance;  // live | replay | stub
  friend bool operator==(const PlanArtifact&, const PlanArtifact&) = default;
};

inline Json steps_to_json(const std::vector<PlanStep>& steps) {
  Json out = Json::array();
  for (const auto& s : steps) {
    Json args = Json::object();
    for (const auto& [k, v] : s.argument_bindings) args[k] = to_json(v);
    out.push_back({{"step", s.step_index},
                   {"tool", s.tool_id},
                   {"arguments", std::move(args)},
                   {"depends_on", std::vector<std::size_t>(s.depends_on.begin(), s.depends_on.end())}});
  }
  return out;
}

/// Parses a `steps` array. Steps are numbered by position (1-based); every
/// cross-step reference is also recorded in `depends_on`.
inline std::vector<PlanStep> parse_steps(const Json& steps) {
  if (!steps.is_array()) fail(ErrorCode::MalformedRecord, "'steps' is not an array");
  std::vector<PlanStep> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Json& s = steps[i];
    if (!s.is_object() || !s.contains("tool") || !s.at("tool").is_string()) {
      fail(ErrorCode::MalformedRecord, "step " + std::to_string(i + 1) + " has no tool");
    }
    PlanStep step;
    step.step_index = i + 1;
    step.tool_id = normalize_tool_id(s.at("tool").get<std::string>());
    if (s.contains("arguments")) {
      if (!s.at("arguments").is_object()) fail(ErrorCode::MalformedRecord, "step arguments must be an object");
      for (const auto& [k, v] : s.at("arguments").items()) {
        Binding b = parse_binding(v);
        if (b.is_ref()) step.depends_on.insert(b.as_ref().step);
        step.argument_bindings.emplace(k, std::move(b));
      }
    }
    if (s.contains("depends_on")) {
      for (const auto& d : s.at("depends_on")) {
        if (!d.is_number_integer() || d.get<long long>() < 0) fail(ErrorCode::MalformedRecord, "bad depends_on entry");
        step.depends_on.insert(d.get<std::size_t>());
      }
    }
    out.push_back(std::move(step));
  }
  return out;
}

inline Json to_json(const PlanArtifact& a) {
  Json j = {{"query_id", a.query_id},
            {"steps", steps_to_json(a.steps)},
            {"supporting_passage_ids", a.supporting_passage_ids},
            {"subgraph_fingerprint", a.subgraph_fingerprint},
            {"provenance", a.provenance}};
  if (!a.artifact_id.empty()) j["artifact_id"] = a.artifact_id;
  return j;
}

inline PlanArtifact parse_artifact(const Json& j, std::size_t line_no = 0) {
  PlanArtifact a;
  a.artifact_id = string_field(j, "artifact_id", line_no);
  a.query_id = require_field(j, "query_id", line_no).get<std::string>();
  a.steps = parse_steps(require_field(j, "steps", line_no));
  a.supporting_passage_ids = j.value("supporting_passage_ids", std::vector<std::string>{});
  a.subgraph_fingerprint = string_field(j, "subgraph_fingerprint", line_no);
  a.provenance = string_field(j, "provenance", line_no);
  return a;
}

inline std::string serialize_artifacts(const std::vector<PlanArtifact>& artifacts) {
  std::string out;
  for (const auto& a : artifacts) {
    out += to_json(a).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<PlanArtifact> parse_artifact_file(const std::string& text, const std::string& source = "") {
  std::vector<PlanArtifact> out;
  for_each_jsonl(text, source, [&](const Json& j, std::size_t line_no) { out.push_back(parse_artifact(j, line_no)); });
  return out;
}

inline std::vector<PlanArtifact> load_artifacts(const std::filesystem::path& path) {
  return parse_artifact_file(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Declared dependencies plus every step named by a reference binding.
inline std::set<std::size_t> effective_dependencies(const PlanStep& step) {
  std::set<std::size_t> deps = step.depends_on;
  for (const auto& [_, b] : step.argument_bindings)
    if (b.is_ref()) deps.insert(b.as_ref().step);
  return deps;
}

enum class ViolationKind {
  EmptyPlan,
  UnknownTool,
  UnknownArgument,
  UnknownField,
  ForwardReference,
  Cycle,
  MissingGraphEdge,
};

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::EmptyPlan: return "empty_plan";
    case ViolationKind::UnknownTool: return "unknown_tool";
    case ViolationKind::UnknownArgument: return "unknown_argument";
    case ViolationKind::UnknownField: return "unknown_field";
    case ViolationKind::ForwardReference: return "forward_reference";
    case ViolationKind::Cycle: return "cycle";
    case ViolationKind::MissingGraphEdge: return "missing_graph_edge";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Structural checks; `graph` is only consulted in strict mode, where every
/// cross-step reference needs a matching `_can_use_this_tool_output` edge.
inline std::vector<Violation> validate_plan(const PlanArtifact& artifact, const ToolCatalog& catalog,
                                            const FusedGraph* graph = nullptr, bool strict = false) {
  std::vector<Violation> out;
  const auto& steps = artifact.steps;
  if (steps.empty()) {
    out.push_back({ViolationKind::EmptyPlan, "plan has no steps"});
    return out;
  }
  for (const auto& step : steps) {
    const ToolSchema* tool = catalog.find(step.tool_id);
    if (tool == nullptr) {
      out.push_back({ViolationKind::UnknownTool, "unknown tool " + step.tool_id});
    }
    for (const auto& [arg, binding] : step.argument_bindings) {
      if (tool != nullptr && tool->find_argument(arg) == nullptr) {
        out.push_back({ViolationKind::UnknownArgument, "unknown argument " + arg + " on " + step.tool_id});
      }
      if (!binding.is_ref()) continue;
      const StepRef& ref = binding.as_ref();
      if (ref.step == 0 || ref.step >= step.step_index) continue;  // reported via depends_on below
      const PlanStep& from = steps[ref.step - 1];
      const ToolSchema* from_tool = catalog.find(from.tool_id);
      if (from_tool != nullptr && from_tool->find_payload(ref.field) == nullptr) {
        out.push_back({ViolationKind::UnknownField, "unknown field " + ref.field + " on " + from.tool_id +
                                                        " (referenced by step " + std::to_string(step.step_index) +
                                                        ")"});
      }
      if (strict && graph != nullptr &&
          graph->find_edge(NodeId::tool(from.tool_id), NodeId::tool(step.tool_id), Relation::CanUseToolOutput) ==
              nullptr) {
        out.push_back({ViolationKind::MissingGraphEdge,
                       "no " + std::string(kCanUseToolOutput) + " edge " + from.tool_id + " -> " + step.tool_id});
      }
    }
    for (std::size_t dep : effective_dependencies(step)) {
      if (dep == 0 || dep > steps.size()) {
        out.push_back({ViolationKind::ForwardReference, "step " + std::to_string(step.step_index) +
                                                            " depends on nonexistent step " + std::to_string(dep)});
      } else if (dep >= step.step_index) {
        out.push_back({ViolationKind::ForwardReference, "forward reference: step " + std::to_string(step.step_index) +
                                                            " depends on step " + std::to_string(dep)});
      }
    }
  }

  // Kahn's algorithm over in-range dependencies.
  const std::size_t n = steps.size();
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (const auto& step : steps) {
    for (std::size_t dep : effective_dependencies(step)) {
      if (dep == 0 || dep > n) continue;
      children[dep - 1].push_back(step.step_index - 1);
      ++indegree[step.step_index - 1];
    }
  }
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t u = ready.back();
    ready.pop_back();
    ++visited;
    for (std::size_t v : children[u])
      if (--indegree[v] == 0) ready.push_back(v);
  }
  if (visited != n) out.push_back({ViolationKind::Cycle, "step dependencies contain a cycle"});
  return out;
}

// ---------------------------------------------------------------------------
// Context assembly
// ---------------------------------------------------------------------------

struct BundleTriplet {
  std::string source_tool;
  std::string target_tool;
  std::string text;
  double score = 0.0;
};

struct BundlePassage {
  std::string id;
  std::string text;
  double score = 0.0;
};

struct TruncationReport {
  std::vector<std::string> dropped_triplets;  // "source->target"
  std::vector<std::string> dropped_passages;
  bool empty() const { return dropped_triplets.empty() && dropped_passages.empty(); }
};

struct PromptBundle {
  std::string query_id;
  std::string query_text;
  std::vector<BundleTriplet> triplets;
  std::vector<BundlePassage> passages;
  std::vector<ToolSchema> tools;  // schemas of tools named by the included triplets
  std::size_t token_budget = 0;
  std::size_t used_tokens = 0;
  TruncationReport truncation;
  std::string subgraph_fingerprint;
};

using TripletScores = std::map<std::pair<NodeId, NodeId>, double>;

/// Greedy packing under `budget` whitespace tokens: triplets of the subgraph
/// by descending score, then passages by descending retrieval score. Each
/// list stops at its first item that does not fit.
inline PromptBundle assemble_context(const QueryRecord& query, const FusedGraph& subgraph,
                                     const TripletScores& triplet_scores, const std::vector<BundlePassage>& passages,
                                     std::size_t budget, const ToolCatalog& catalog) {
  if (subgraph.empty()) fail(ErrorCode::EmptySubgraph, "no context nodes for query " + query.query_id);
  PromptBundle bundle;
  bundle.query_id = query.query_id;
  bundle.query_text = query.text;
  bundle.token_budget = budget;
  bundle.subgraph_fingerprint = subgraph.fingerprint();

  std::vector<BundleTriplet> triplets;
  for (const auto& e : subgraph.edges()) {
    if (e.relation != Relation::CanUseToolOutput) continue;
    auto it = triplet_scores.find({e.src, e.dst});
    TripletText t = verbalize_triplet(e, subgraph);
    triplets.push_back({subgraph.find(e.src)->label, subgraph.find(e.dst)->label, std::move(t.text),
                        it == triplet_scores.end() ? 0.0 : it->second});
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.source_tool, a.target_tool) < std::tie(b.source_tool, b.target_tool);
  });
  std::vector<BundlePassage> ranked_passages = passages;
  std::stable_sort(ranked_passages.begin(), ranked_passages.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });

  std::size_t used = 0;
  bool full = false;
  for (auto& t : triplets) {
    const std::size_t cost = count_words(t.text);
    if (full || used + cost > budget) {
      full = true;
      bundle.truncation.dropped_triplets.push_back(t.source_tool + "->" + t.target_tool);
      continue;
    }
    used += cost;
    bundle.triplets.push_back(std::move(t));
  }
  full = false;
  for (auto& p : ranked_passages) {
    const std::size_t cost = count_words(p.text);
    if (full || used + cost > budget) {
      full = true;
      bundle.truncation.dropped_passages.push_back(p.id);
      continue;
    }
    used += cost;
    bundle.passages.push_back(std::move(p));
  }
  bundle.used_tokens = used;

  std::set<std::string> tool_ids;
  for (const auto& t : bundle.triplets) {
    tool_ids.insert(t.source_tool);
    tool_ids.insert(t.target_tool);
  }
  if (tool_ids.empty()) {
    for (const auto& n : subgraph.nodes())
      if (n.kind == NodeKind::Tool) tool_ids.insert(n.label);
  }
  for (const auto& id : tool_ids)
    if (const ToolSchema* s = catalog.find(id)) bundle.tools.push_back(*s);
  return bundle;
}

inline Json to_json(const PromptBundle& b) {
  Json triplets = Json::array();
  for (const auto& t : b.triplets)
    triplets.push_back({{"source", t.source_tool}, {"target", t.target_tool}, {"text", t.text}, {"score", t.score}});
  Json passages = Json::array();
  for (const auto& p : b.passages) passages.push_back({{"id", p.id}, {"text", p.text}, {"score", p.score}});
  Json tools = Json::array();
  for (const auto& t : b.tools) {
    Json j = to_json(t);
    j["tool_id"] = t.tool_id;
    tools.push_back(std::move(j));
  }
  return {{"query_id", b.query_id},
          {"query", b.query_text},
          {"triplets", std::move(triplets)},
          {"passages", std::move(passages)},
          {"tools", std::move(tools)}};
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GenerationOptions {
  int max_attempts = 3;
  bool strict = false;
};

inline std::string generation_payload(const PromptBundle& bundle, int attempt,
                                      const std::vector<Violation>& previous) {
  Json j = to_json(bundle);
  if (attempt > 1) {
    j["attempt"] = attempt;
    Json v = Json::array();
    for (const auto& x : previous) v.push_back(x.message);
    j["previous_violations"] = std::move(v);
  }
  return j.dump();
}

/// Calls the gateway for a plan, validates it, and retries on rejection up
/// to `max_attempts` times. Throws GenerationRejected with the last reasons.
inline PlanArtifact generate_plan(const PromptBundle& bundle, Gateway& gateway, const ToolCatalog& catalog,
                                  const FusedGraph* graph = nullptr, const GenerationOptions& options = {}) {
  std::vector<Violation> violations;
  std::string reasons;
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    const std::string response = gateway.complete(Role::Generate, generation_payload(bundle, attempt, violations));
    PlanArtifact artifact;
    artifact.query_id = bundle.query_id;
    artifact.subgraph_fingerprint = bundle.subgraph_fingerprint;
    artifact.provenance = std::string(to_string(gateway.mode()));
    for (const auto& p : bundle.passages) artifact.supporting_passage_ids.push_back(p.id);
    try {
      const Json j = Json::parse(response);
      artifact.steps = parse_steps(j.is_object() ? j.at("steps") : j);
    } catch (const std::exception& e) {
      violations = {{ViolationKind::EmptyPlan, std::string("unparseable plan: ") + e.what()}};
      reasons = violations.front().message;
      continue;
    }
    violations = validate_plan(artifact, catalog, graph, options.strict);
    if (violations.empty()) return artifact;
    reasons.clear();
    for (const auto& v : violations) {
      if (!reasons.empty()) reasons += "; ";
      reasons += v.message;
    }
  }
  fail(ErrorCode::GenerationRejected, bundle.query_id + ": " + reasons);
}

// ---------------------------------------------------------------------------
// Artifact storage
// ---------------------------------------------------------------------------

inline std::string step_summary(const PlanArtifact& a) {
  std::string out;
  for (const auto& s : a.steps) {
    if (!out.empty()) out += " -> ";
    out += s.tool_id;
  }
  return out;
}

inline std::string artifact_id_for(std::size_t counter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "artifact-%06zu", counter);
  return buf;
}

/// Inserts the artifact into `store` under the next "artifact-NNNNNN" id. The
/// vector embeds the originating query text; the step summary and the full
/// artifact ride along as metadata.
inline std::string store_artifact(VectorStore& store, PlanArtifact& artifact, const std::string& query_text,
                                  const Embedder& embedder) {
  const std::string id = artifact_id_for(store.count(EntryKind::Artifact) + 1);
  artifact.artifact_id = id;
  try {
    store.insert(id, embedder.embed(query_text), EntryKind::Artifact,
                 {{"query_id", artifact.query_id}, {"summary", step_summary(artifact)}, {"artifact", to_json(artifact)}});
  } catch (const Error& e) {
    artifact.artifact_id.clear();
    fail(ErrorCode::StoreWriteError, e.what());
  }
  return id;
}

// ---------------------------------------------------------------------------
// Query-time retrieval
// ---------------------------------------------------------------------------

struct RetrievalConfig {
  std::size_t k_triplets = 20;
  std::size_t k_passages = 10;
  bool use_ppr = true;
  bool seed_passages = false;  // also seed PPR with retrieved passages
  std::size_t top_n = 30;
  PprConfig ppr;
};

struct RetrievedContext {
  FusedGraph subgraph;
  TripletScores triplet_scores;
  std::vector<BundlePassage> passages;
  SeedMap seeds;
  std::vector<ScoredId> triplet_hits;
  std::vector<ScoredId> passage_hits;
  bool ppr_converged = true;
};

/// Dense retrieval of triplets and passages, then (optionally) PPR from the
/// triplet endpoints and top-n subgraph extraction. Without PPR the context
/// is exactly the retrieved triplets and passages.
inline RetrievedContext retrieve_context(const QueryRecord& query, const FusedGraph& graph, const VectorStore& store,
                                         const Embedder& embedder, const RetrievalConfig& config) {
  RetrievedContext ctx;
  const EmbeddingVector qv = embedder.embed(query.text);
  ctx.triplet_hits = store.top_k(qv, config.k_triplets, EntryKind::Triplet);
  ctx.passage_hits = store.top_k(qv, config.k_passages, EntryKind::Passage);

  std::map<std::string, double> passage_score;
  for (const auto& h : ctx.passage_hits) passage_score[h.id] = h.score;

  std::map<NodeId, double> seed_weight;
  std::vector<std::pair<NodeId, NodeId>> hit_edges;
  for (const auto& h : ctx.triplet_hits) {
    const StoreEntry* e = store.find(h.id);
    NodeId src{e->metadata.at("source").get<std::string>()};
    NodeId dst{e->metadata.at("target").get<std::string>()};
    if (!graph.contains(src) || !graph.contains(dst)) continue;
    const double w = std::max(h.score, 0.0);
    seed_weight[src] += w;
    seed_weight[dst] += w;
    hit_edges.emplace_back(src, dst);
    ctx.triplet_scores[{src, dst}] = h.score;
  }
  if (config.seed_passages) {
    for (const auto& h : ctx.passage_hits) {
      NodeId pid{h.id};
      if (graph.contains(pid)) seed_weight[pid] += std::max(h.score, 0.0);
    }
  }

  const bool run_ppr = config.use_ppr && !seed_weight.empty();
  if (run_ppr) {
    double total = 0.0;
    for (const auto& [_, w] : seed_weight) total += w;
    for (const auto& [id, w] : seed_weight) {
      ctx.seeds[id] = total > 0.0 ? w / total : 1.0 / static_cast<double>(seed_weight.size());
    }
    // Renormalize so the masses sum to 1 as tightly as floating point allows.
    double sum = 0.0;
    for (const auto& [_, m] : ctx.seeds) sum += m;
    for (auto& [_, m] : ctx.seeds) m /= sum;

    PprResult ppr = personalized_pagerank(graph, ctx.seeds, config.ppr);
    ctx.ppr_converged = ppr.converged;
    ctx.subgraph = extract_subgraph(graph, ppr.scores, config.top_n, ctx.seeds);
    ctx.triplet_scores.clear();
    for (const auto& e : ctx.subgraph.edges()) {
      if (e.relation == Relation::CanUseToolOutput) {
        ctx.triplet_scores[{e.src, e.dst}] = ppr.scores.at(e.src) + ppr.scores.at(e.dst);
      }
    }
    for (const auto& n : ctx.subgraph.nodes()) {
      if (n.kind != NodeKind::Passage || passage_score.count(n.id.value)) continue;
      if (const StoreEntry* e = store.find(n.id.value)) passage_score[n.id.value] = cosine(qv.values, e->vector.values);
    }
  } else {
    GraphBuilder builder;
    for (const auto& [src, dst] : hit_edges) {
      builder.add_node(*graph.find(src));
      builder.add_node(*graph.find(dst));
      builder.add_edge(*graph.find_edge(src, dst, Relation::CanUseToolOutput));
    }
    for (const auto& h : ctx.passage_hits)
      if (const Node* n = graph.find(NodeId{h.id})) builder.add_node(*n);
    ctx.subgraph = builder.build();
  }

  for (const auto& [id, score] : passage_score) {
    const Node* n = graph.find(NodeId{id});
    if (n != nullptr) ctx.passages.push_back({id, n->text, score});
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Batch generation
// ---------------------------------------------------------------------------

struct GenerationConfig {
  RetrievalConfig retrieval;
  std::size_t budget = 2000;
  GenerationOptions options;
};

struct GenerationFailure {
  std::string query_id;
  std::string reason;
};

struct GenerationRun {
  std::vector<PlanArtifact> artifacts;
  std::vector<GenerationFailure> failures;
  std::size_t ppr_not_converged = 0;
};

/// Retrieve, assemble, generate and store, one query at a time in input
/// order so artifact ids are reproducible. Rejected queries are recorded and
/// skipped; gateway failures propagate.
inline GenerationRun generate_artifacts(const std::vector<QueryRecord>& queries, const FusedGraph& graph,
                                        VectorStore& store, const ToolCatalog& catalog, Gateway& gateway,
                                        const Embedder& embedder, const GenerationConfig& config) {
  GenerationRun run;
  for (const auto& q : queries) {
    RetrievedContext ctx = retrieve_context(q, graph, store, embedder, config.retrieval);
    if (!ctx.ppr_converged) ++run.ppr_not_converged;
    try {
      const PromptBundle bundle =
          assemble_context(q, ctx.subgraph, ctx.triplet_scores, ctx.passages, config.budget, catalog);
      PlanArtifact artifact = generate_plan(bundle, gateway, catalog, &graph, config.options);
      store_artifact(store, artifact, q.text, embedder);
      run.artifacts.push_back(std::move(artifact));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::GenerationRejected && e.code() != ErrorCode::EmptySubgraph) throw;
      run.failures.push_back({q.query_id, e.what()});
    }
  }
  return run;
}

}  // namespace toolweave
