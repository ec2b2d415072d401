#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "toolweave/dependency.hpp"
#include "toolweave/error.hpp"
#include "toolweave/evaluation.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/plan.hpp"
#include "toolweave/retrieval.hpp"
#include "toolweave/schema.hpp"

namespace toolweave {

struct PipelineConfig {
  std::filesystem::path tools;
  std::filesystem::path docs;               // optional
  std::filesystem::path queries;
  std::filesystem::path gold_dependencies;  // optional, enables the dependency report
  std::filesystem::path out_dir;
  std::optional<Level> level;  // unset: every query
  std::size_t dims = kDefaultEmbeddingDims;
  ExtractionConfig extraction;
  GenerationConfig generation;
};

/// Inputs named by `cfg` must exist. Errors name the config field.
inline void check_pipeline_paths(const PipelineConfig& cfg) {
  auto required = [](const std::filesystem::path& p, const char* field) {
    if (p.empty()) fail(ErrorCode::ConfigError, std::string(field) + ": required path is not set");
    if (!std::filesystem::exists(p)) fail(ErrorCode::ConfigError, std::string(field) + ": no such file " + p.string());
  };
  auto optional = [](const std::filesystem::path& p, const char* field) {
    if (!p.empty() && !std::filesystem::exists(p)) {
      fail(ErrorCode::ConfigError, std::string(field) + ": no such file " + p.string());
    }
  };
  required(cfg.tools, "paths.tools");
  required(cfg.queries, "paths.queries");
  optional(cfg.docs, "paths.docs");
  optional(cfg.gold_dependencies, "paths.gold_dependencies");
  if (cfg.out_dir.empty()) fail(ErrorCode::ConfigError, "paths.out: required path is not set");
  if (cfg.generation.retrieval.top_n < 1) fail(ErrorCode::ConfigError, "retrieval.top_n must be >= 1");
  if (cfg.generation.retrieval.k_triplets < 1) fail(ErrorCode::ConfigError, "retrieval.k_triplets must be >= 1");
  if (cfg.generation.retrieval.k_passages < 1) fail(ErrorCode::ConfigError, "retrieval.k_passages must be >= 1");
  const double d = cfg.generation.retrieval.ppr.damping;
  if (!(d > 0.0 && d < 1.0)) fail(ErrorCode::ConfigError, "ppr.damping must lie in (0, 1)");
  if (cfg.extraction.max_in_flight < 1) fail(ErrorCode::ConfigError, "extraction.max_in_flight must be >= 1");
  if (cfg.generation.options.max_attempts < 1) fail(ErrorCode::ConfigError, "generation.max_attempts must be >= 1");
}

/// Rethrows the first pair failure when it is a gateway or IO failure, so
/// the caller can map it to the right exit status.
inline void raise_gateway_errors(const ExtractionResult& r) {
  for (const auto& e : r.errors)
    if (is_gateway_or_io(e.code)) fail(e.code, e.message);
}

inline std::vector<QueryRecord> filter_queries(std::vector<QueryRecord> queries, const ToolCatalog& catalog,
                                               const std::optional<Level>& level, std::size_t* dropped = nullptr) {
  std::vector<QueryRecord> out;
  std::size_t n_dropped = 0;
  for (auto& q : queries) {
    if (level && q.level != *level) continue;
    if (q.gold_plan && !gold_plan_is_valid(*q.gold_plan, catalog)) {
      ++n_dropped;
      continue;
    }
    out.push_back(std::move(q));
  }
  if (dropped != nullptr) *dropped = n_dropped;
  return out;
}

inline std::string serialize_failures(const std::vector<GenerationFailure>& failures) {
  std::string out;
  for (const auto& f : failures) out += Json{{"query_id", f.query_id}, {"reason", f.reason}}.dump() + "\n";
  return out;
}

inline std::string serialize_pair_errors(const std::vector<PairError>& errors) {
  std::string out;
  for (const auto& e : errors) {
    out += Json{{"source_tool", e.source_tool},
                {"target_tool", e.target_tool},
                {"code", std::string(to_string(e.code))},
                {"message", e.message}}
               .dump() +
           "\n";
  }
  return out;
}

struct PipelineSummary {
  std::size_t tools = 0;
  std::size_t pairs = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t triplets = 0;
  std::size_t passages = 0;
  std::size_t queries = 0;
  std::size_t dropped_queries = 0;
  std::size_t artifacts = 0;
  std::size_t failures = 0;
  PlanEvalReport plans;
  std::optional<DependencyEvalReport> dependencies;
};

/// File names written under `out_dir`.
struct PipelineOutputs {
  static constexpr const char* kTools = "tools.jsonl";
  static constexpr const char* kDeps = "deps.jsonl";
  static constexpr const char* kAudit = "audit.jsonl";
  static constexpr const char* kPairErrors = "pair_errors.jsonl";
  static constexpr const char* kToolGraph = "tool_graph.jsonl";
  static constexpr const char* kDocGraph = "doc_graph.jsonl";
  static constexpr const char* kGraph = "graph.jsonl";
  static constexpr const char* kStore = "store.jsonl";
  static constexpr const char* kArtifacts = "artifacts.jsonl";
  static constexpr const char* kFailures = "failures.jsonl";
  static constexpr const char* kReport = "report.jsonl";
};

/// Every stage in order: ingest, extract, tool graph, document graph, fuse,
/// index, generate, evaluate. All outputs land in `cfg.out_dir`.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg, Gateway& gateway) {
  check_pipeline_paths(cfg);
  const auto& out = cfg.out_dir;
  using O = PipelineOutputs;
  PipelineSummary summary;

  const ToolCatalog catalog = load_tool_corpus(cfg.tools);
  summary.tools = catalog.size();
  write_file(out / O::kTools, serialize_tool_corpus(catalog));

  const ExtractionResult extraction = run_extraction(catalog, cfg.extraction, gateway);
  raise_gateway_errors(extraction);
  const auto accepted = extraction.accepted();
  summary.pairs = extraction.stats.pairs_examined;
  summary.accepted = extraction.stats.accepted;
  summary.rejected = extraction.stats.rejected;
  write_file(out / O::kDeps, serialize_dependencies(accepted));
  write_file(out / O::kAudit, serialize_dependencies(extraction.audit));
  write_file(out / O::kPairErrors, serialize_pair_errors(extraction.errors));

  const FusedGraph tool_graph = build_tool_graph(catalog, accepted);
  save_graph(tool_graph, out / O::kToolGraph);
  FusedGraph graph = tool_graph;
  if (!cfg.docs.empty()) {
    const FusedGraph doc_graph = ingest_document_graph(load_document_corpus(cfg.docs), gateway_entity_extractor(gateway));
    save_graph(doc_graph, out / O::kDocGraph);
    graph = fuse(tool_graph, doc_graph);
  }
  save_graph(graph, out / O::kGraph);
  summary.nodes = graph.node_count();
  summary.edges = graph.edges().size();

  const Embedder embedder(gateway, cfg.dims);
  VectorStore store(cfg.dims);
  const IndexStats indexed = index_graph(store, graph, embedder);
  summary.triplets = indexed.triplets;
  summary.passages = indexed.passages;

  const auto queries =
      filter_queries(parse_query_file(read_file(cfg.queries), cfg.queries.string()), catalog, cfg.level,
                     &summary.dropped_queries);
  summary.queries = queries.size();
  const GenerationRun run = generate_artifacts(queries, graph, store, catalog, gateway, embedder, cfg.generation);
  summary.artifacts = run.artifacts.size();
  summary.failures = run.failures.size();
  write_file(out / O::kArtifacts, serialize_artifacts(run.artifacts));
  write_file(out / O::kFailures, serialize_failures(run.failures));
  store.save(out / O::kStore);

  summary.plans = evaluate_plans(run.artifacts, queries, gateway);
  std::string report = serialize_report(summary.plans);
  if (!cfg.gold_dependencies.empty()) {
    const auto gold = load_dependencies(cfg.gold_dependencies);
    summary.dependencies = score_dependencies(dependency_pairs(accepted), dependency_pairs(gold));
    report = serialize_dependency_report(*summary.dependencies) + report;
  }
  write_file(out / O::kReport, report);
  return summary;
}

}  // namespace toolweave
