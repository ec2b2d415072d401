#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "toolweave.hpp"
#include "toolweave/http_transport.hpp"

namespace tw = toolweave;
namespace fs = std::filesystem;

namespace {

// Every setting reachable from flags and from the shared config file.
struct Settings {
  // [paths]
  std::string tools, docs, queries, gold_deps, out, report, graph, graph_b, store, store_out, deps, audit, artifacts,
      fixtures, record, spec;
  // [gateway]
  std::string mode = "stub";
  std::string model = "gpt-4o";
  std::string embedding_model = "text-embedding-3-small";
  std::string endpoint = "https://api.openai.com/v1";
  double rps = 0.0;
  // [extraction]
  std::size_t max_in_flight = 4;
  std::string blocking = "auto";
  bool judge = true;
  // [ppr]
  double damping = 0.85;
  double tolerance = 1e-8;
  std::size_t max_iterations = 100;
  std::string direction = "symmetrize";
  std::string seeds;
  std::size_t top = 10;
  // [retrieval]
  std::size_t k_triplets = 20;
  std::size_t k_passages = 10;
  std::size_t top_n = 30;
  bool no_ppr = false;
  bool seed_passages = false;
  // [generation]
  std::size_t budget = 2000;
  int max_attempts = 3;
  bool strict = false;
  // [queries]
  std::string level = "all";
  std::size_t dims = tw::kDefaultEmbeddingDims;
};

using Setter = std::function<void(const std::string&)>;

class Binder {
 public:
  explicit Binder(std::map<std::string, Setter>& keys) : keys_(&keys) {}

  template <class T>
  void operator()(CLI::App* sub, const std::string& flag, const std::string& key, T& var, const std::string& help) {
    sub->add_option(flag, var, help + " [" + key + "]")->capture_default_str();
    register_key(key, var);
  }

  void flag(CLI::App* sub, const std::string& flag, const std::string& key, bool& var, const std::string& help) {
    sub->add_flag(flag, var, help + " [" + key + "]");
    register_key(key, var);
  }

 private:
  template <class T>
  void register_key(const std::string& key, T& var) {
    (*keys_)[key] = [&var, key](const std::string& raw) {
      T parsed{};
      if (!CLI::detail::lexical_cast(raw, parsed)) {
        tw::fail(tw::ErrorCode::ConfigError, key + ": cannot parse value '" + raw + "'");
      }
      var = parsed;
    };
  }

  std::map<std::string, Setter>* keys_;
};

std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return "";
}

void apply_config_file(const std::string& path, const std::map<std::string, Setter>& keys) {
  if (!fs::exists(path)) tw::fail(tw::ErrorCode::ConfigError, "config: no such file " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::Error& e) {
    tw::fail(tw::ErrorCode::ConfigError, "config: " + std::string(e.what()));
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const std::string key = item.fullname();
    auto it = keys.find(key);
    if (it == keys.end()) tw::fail(tw::ErrorCode::ConfigError, key + ": unknown config field");
    if (item.inputs.size() != 1) tw::fail(tw::ErrorCode::ConfigError, key + ": expected a single value");
    it->second(item.inputs.front());
  }
}

std::string need(const std::string& value, const std::string& key) {
  if (value.empty()) tw::fail(tw::ErrorCode::ConfigError, key + ": required path is not set");
  return value;
}

fs::path need_input(const std::string& value, const std::string& key) {
  need(value, key);
  if (!fs::exists(value)) tw::fail(tw::ErrorCode::ConfigError, key + ": no such file " + value);
  return value;
}

std::unique_ptr<tw::Gateway> make_gateway(const Settings& s) {
  tw::GatewayOptions opts;
  opts.mode = tw::parse_gateway_mode(s.mode);
  opts.model = s.model;
  opts.requests_per_second = s.rps;
  opts.record = !s.record.empty();
  auto g = std::make_unique<tw::Gateway>(opts);
  switch (opts.mode) {
    case tw::GatewayMode::Stub: g->set_stub(tw::make_stub_responder()); break;
    case tw::GatewayMode::Replay:
      g->set_fixtures(tw::FixtureFile::load(need_input(s.fixtures, "gateway.fixtures")));
      break;
    case tw::GatewayMode::Live: {
      tw::HttpTransportConfig http;
      http.endpoint = s.endpoint;
      http.chat_model = s.model;
      http.embedding_model = s.embedding_model;
      if (const char* ep = std::getenv("TOOLWEAVE_ENDPOINT")) http.endpoint = ep;
      if (const char* key = std::getenv("TOOLWEAVE_API_KEY")) http.api_key = key;
      if (http.api_key.empty()) tw::fail(tw::ErrorCode::ConfigError, "TOOLWEAVE_API_KEY: live mode needs credentials");
      g->set_transport(std::make_shared<tw::HttpTransport>(http));
      break;
    }
  }
  return g;
}

/// Writes the live session to the record path, merged over any existing file.
void save_recording(const Settings& s, const tw::Gateway& g) {
  if (s.record.empty() || g.mode() != tw::GatewayMode::Live) return;
  tw::FixtureFile session = g.recorded_session();
  if (fs::exists(s.record)) {
    auto merged = tw::merge_fixtures(tw::FixtureFile::load(s.record), session);
    for (const auto& w : merged.warnings) std::cerr << "warning: " << w << "\n";
    session = std::move(merged.merged);
  }
  session.save(s.record);
}

tw::ExtractionConfig extraction_config(const Settings& s) {
  tw::ExtractionConfig c;
  c.max_in_flight = s.max_in_flight;
  c.judge_enabled = s.judge;
  if (s.blocking == "all") {
    c.pair_blocking = tw::PairBlocking::AllPairs;
  } else if (s.blocking == "overlap") {
    c.pair_blocking = tw::PairBlocking::FieldOverlap;
  } else if (s.blocking != "auto") {
    tw::fail(tw::ErrorCode::ConfigError, "extraction.blocking: expected all, overlap or auto");
  }
  if (s.max_in_flight < 1) tw::fail(tw::ErrorCode::ConfigError, "extraction.max_in_flight must be >= 1");
  return c;
}

tw::PprConfig ppr_config(const Settings& s) {
  tw::PprConfig c;
  c.damping = s.damping;
  c.tolerance = s.tolerance;
  c.max_iterations = s.max_iterations;
  if (s.direction == "symmetrize") {
    c.edge_direction = tw::EdgeDirection::Symmetrize;
  } else if (s.direction == "as_is") {
    c.edge_direction = tw::EdgeDirection::AsIs;
  } else {
    tw::fail(tw::ErrorCode::ConfigError, "ppr.direction: expected symmetrize or as_is");
  }
  if (!(s.damping > 0.0 && s.damping < 1.0)) tw::fail(tw::ErrorCode::ConfigError, "ppr.damping must lie in (0, 1)");
  return c;
}

tw::GenerationConfig generation_config(const Settings& s) {
  tw::GenerationConfig c;
  c.retrieval.k_triplets = s.k_triplets;
  c.retrieval.k_passages = s.k_passages;
  c.retrieval.top_n = s.top_n;
  c.retrieval.use_ppr = !s.no_ppr;
  c.retrieval.seed_passages = s.seed_passages;
  c.retrieval.ppr = ppr_config(s);
  c.budget = s.budget;
  c.options.max_attempts = s.max_attempts;
  c.options.strict = s.strict;
  if (s.top_n < 1) tw::fail(tw::ErrorCode::ConfigError, "retrieval.top_n must be >= 1");
  if (s.k_triplets < 1) tw::fail(tw::ErrorCode::ConfigError, "retrieval.k_triplets must be >= 1");
  if (s.k_passages < 1) tw::fail(tw::ErrorCode::ConfigError, "retrieval.k_passages must be >= 1");
  if (s.max_attempts < 1) tw::fail(tw::ErrorCode::ConfigError, "generation.max_attempts must be >= 1");
  return c;
}

std::optional<tw::Level> level_filter(const Settings& s) {
  if (s.level == "all") return std::nullopt;
  try {
    return tw::parse_level(s.level);
  } catch (const tw::Error&) {
    tw::fail(tw::ErrorCode::ConfigError, "queries.level: expected G1, G2, G3 or all");
  }
}

tw::SeedMap parse_seeds(const std::string& raw) {
  tw::SeedMap seeds;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = tw::trim(item);
    if (item.empty()) continue;
    const auto colon = item.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      tw::fail(tw::ErrorCode::ConfigError, "ppr.seeds: expected node_id:mass, got '" + item + "'");
    }
    double mass = 0.0;
    if (!CLI::detail::lexical_cast(item.substr(colon + 1), mass)) {
      tw::fail(tw::ErrorCode::ConfigError, "ppr.seeds: bad mass in '" + item + "'");
    }
    seeds[tw::NodeId{item.substr(0, colon)}] += mass;
  }
  return seeds;
}

/// `status=... stage=... key=value ...`
class Summary {
 public:
  explicit Summary(std::string stage) : stage_(std::move(stage)) {}
  template <class T>
  Summary& add(const std::string& key, const T& value) {
    std::ostringstream os;
    os << value;
    fields_.emplace_back(key, os.str());
    return *this;
  }
  std::string line(bool ok) const {
    std::string out = std::string("status=") + (ok ? "ok" : "fail") + " stage=" + stage_;
    for (const auto& [k, v] : fields_) out += " " + k + "=" + v;
    return out;
  }
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
  std::vector<std::pair<std::string, std::string>> fields_;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  std::map<std::string, Setter> keys;
  Binder bind(keys);

  CLI::App app{"Tool dependency graphs, graph retrieval and exemplar plan generation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Sectioned config file; flags override its values");

  auto gateway_flags = [&](CLI::App* sub) {
    bind(sub, "--mode", "gateway.mode", s.mode, "Gateway mode: live, replay or stub");
    bind(sub, "--fixtures", "gateway.fixtures", s.fixtures, "Fixture file read in replay mode");
    bind(sub, "--record", "gateway.record", s.record, "Fixture file written in live mode");
    bind(sub, "--model", "gateway.model", s.model, "Chat model name");
    bind(sub, "--embedding-model", "gateway.embedding_model", s.embedding_model, "Embedding model name");
    bind(sub, "--endpoint", "gateway.endpoint", s.endpoint, "Provider base URL");
    bind(sub, "--rps", "gateway.rps", s.rps, "Request rate limit, 0 for none");
  };
  auto ppr_flags = [&](CLI::App* sub) {
    bind(sub, "--damping", "ppr.damping", s.damping, "PPR damping factor in (0, 1)");
    bind(sub, "--tolerance", "ppr.tolerance", s.tolerance, "PPR L1 convergence tolerance");
    bind(sub, "--max-iterations", "ppr.max_iterations", s.max_iterations, "PPR iteration cap");
    bind(sub, "--direction", "ppr.direction", s.direction, "Edge handling: symmetrize or as_is");
  };
  auto generation_flags = [&](CLI::App* sub) {
    ppr_flags(sub);
    bind(sub, "--k-triplets", "retrieval.k_triplets", s.k_triplets, "Triplets retrieved per query");
    bind(sub, "--k-passages", "retrieval.k_passages", s.k_passages, "Passages retrieved per query");
    bind(sub, "--top-n", "retrieval.top_n", s.top_n, "Subgraph size after PPR");
    bind.flag(sub, "--no-ppr", "retrieval.no_ppr", s.no_ppr, "Embedding-only context");
    bind.flag(sub, "--seed-passages", "retrieval.seed_passages", s.seed_passages, "Also seed PPR with passages");
    bind(sub, "--budget", "generation.budget", s.budget, "Prompt token budget");
    bind(sub, "--max-attempts", "generation.max_attempts", s.max_attempts, "Generation attempts per query");
    bind.flag(sub, "--strict", "generation.strict", s.strict, "Require graph edges for cross-step references");
    bind(sub, "--level", "queries.level", s.level, "Query level filter: G1, G2, G3 or all");
    bind(sub, "--dims", "retrieval.dims", s.dims, "Embedding dimensions");
  };
  auto extraction_flags = [&](CLI::App* sub) {
    bind(sub, "--max-in-flight", "extraction.max_in_flight", s.max_in_flight, "Concurrent pairs");
    bind(sub, "--blocking", "extraction.blocking", s.blocking, "Pair blocking: all, overlap or auto");
    bind(sub, "--judge", "extraction.judge", s.judge, "Judge proposals (true/false)");
  };

  std::map<CLI::App*, std::function<Summary()>> handlers;

  auto* ingest_tools = app.add_subcommand("ingest-tools", "Parse and normalize a tool corpus");
  bind(ingest_tools, "--tools", "paths.tools", s.tools, "Tool corpus (native or ToolBench JSONL)");
  bind(ingest_tools, "--out", "paths.out", s.out, "Normalized tool corpus output");
  handlers[ingest_tools] = [&] {
    const auto catalog = tw::load_tool_corpus(need_input(s.tools, "paths.tools"));
    tw::write_file(need(s.out, "paths.out"), tw::serialize_tool_corpus(catalog));
    return Summary("ingest-tools").add("tools", catalog.size()).add("out", s.out);
  };

  auto* extract = app.add_subcommand("extract-deps", "Propose and judge tool dependencies");
  bind(extract, "--tools", "paths.tools", s.tools, "Tool corpus");
  bind(extract, "--out", "paths.deps", s.deps, "Accepted dependency file");
  bind(extract, "--audit", "paths.audit", s.audit, "Audit file with rejected candidates");
  gateway_flags(extract);
  extraction_flags(extract);
  handlers[extract] = [&] {
    const auto catalog = tw::load_tool_corpus(need_input(s.tools, "paths.tools"));
    const auto cfg = extraction_config(s);
    auto gateway = make_gateway(s);
    const auto result = tw::run_extraction(catalog, cfg, *gateway);
    save_recording(s, *gateway);
    tw::raise_gateway_errors(result);
    tw::write_file(need(s.deps, "paths.deps"), tw::serialize_dependencies(result.accepted()));
    if (!s.audit.empty()) tw::write_file(s.audit, tw::serialize_dependencies(result.audit));
    return Summary("extract-deps")
        .add("pairs", result.stats.pairs_examined)
        .add("proposals", result.stats.proposals)
        .add("accepted", result.stats.accepted)
        .add("rejected", result.stats.rejected)
        .add("malformed", result.stats.malformed_proposals + result.stats.malformed_verdicts)
        .add("failed_pairs", result.stats.failed_pairs);
  };

  auto* build = app.add_subcommand("build-graph", "Build the tool dependency graph");
  bind(build, "--tools", "paths.tools", s.tools, "Tool corpus");
  bind(build, "--deps", "paths.deps", s.deps, "Dependency file");
  bind(build, "--out", "paths.graph", s.graph, "Graph output");
  handlers[build] = [&] {
    const auto catalog = tw::load_tool_corpus(need_input(s.tools, "paths.tools"));
    const auto deps = tw::load_dependencies(need_input(s.deps, "paths.deps"));
    const auto graph = tw::build_tool_graph(catalog, deps);
    tw::save_graph(graph, need(s.graph, "paths.graph"));
    return Summary("build-graph").add("nodes", graph.node_count()).add("edges", graph.edges().size());
  };

  auto* ingest_docs = app.add_subcommand("ingest-docs", "Build the document knowledge graph");
  bind(ingest_docs, "--docs", "paths.docs", s.docs, "Document corpus");
  bind(ingest_docs, "--out", "paths.graph", s.graph, "Graph output");
  gateway_flags(ingest_docs);
  handlers[ingest_docs] = [&] {
    const auto docs = tw::load_document_corpus(need_input(s.docs, "paths.docs"));
    auto gateway = make_gateway(s);
    const auto graph = tw::ingest_document_graph(docs, tw::gateway_entity_extractor(*gateway));
    save_recording(s, *gateway);
    tw::save_graph(graph, need(s.graph, "paths.graph"));
    return Summary("ingest-docs")
        .add("docs", docs.size())
        .add("entities", graph.count_kind(tw::NodeKind::Entity))
        .add("passages", graph.count_kind(tw::NodeKind::Passage))
        .add("edges", graph.edges().size());
  };

  auto* fuse = app.add_subcommand("fuse", "Fuse two graphs and link tool mentions");
  bind(fuse, "--graph", "paths.graph", s.graph, "First graph");
  bind(fuse, "--with", "paths.graph_b", s.graph_b, "Second graph");
  bind(fuse, "--out", "paths.out", s.out, "Fused graph output");
  handlers[fuse] = [&] {
    const auto a = tw::load_graph(need_input(s.graph, "paths.graph"));
    const auto b = tw::load_graph(need_input(s.graph_b, "paths.graph_b"));
    const auto fused = tw::fuse(a, b);
    tw::save_graph(fused, need(s.out, "paths.out"));
    const auto counts = fused.relation_counts();
    auto count = [&](tw::Relation r) { return counts.count(r) ? counts.at(r) : 0; };
    return Summary("fuse")
        .add("nodes", fused.node_count())
        .add("edges", fused.edges().size())
        .add("mentions_tool", count(tw::Relation::MentionsTool));
  };

  auto* index = app.add_subcommand("index", "Embed triplets and passages into a vector store");
  bind(index, "--graph", "paths.graph", s.graph, "Graph to index");
  bind(index, "--out", "paths.store", s.store, "Vector store output");
  bind(index, "--dims", "retrieval.dims", s.dims, "Embedding dimensions");
  gateway_flags(index);
  handlers[index] = [&] {
    const auto graph = tw::load_graph(need_input(s.graph, "paths.graph"));
    auto gateway = make_gateway(s);
    const tw::Embedder embedder(*gateway, s.dims);
    tw::VectorStore store(s.dims);
    const auto stats = tw::index_graph(store, graph, embedder);
    save_recording(s, *gateway);
    store.save(need(s.store, "paths.store"));
    return Summary("index").add("triplets", stats.triplets).add("passages", stats.passages);
  };

  auto* ppr = app.add_subcommand("ppr", "Personalized PageRank from seed nodes");
  bind(ppr, "--graph", "paths.graph", s.graph, "Graph");
  bind(ppr, "--seeds", "ppr.seeds", s.seeds, "Comma-separated node_id:mass list summing to 1");
  bind(ppr, "--top", "ppr.top", s.top, "Ranked nodes to print");
  bind(ppr, "--out", "paths.out", s.out, "Optional score file");
  ppr_flags(ppr);
  handlers[ppr] = [&] {
    const auto graph = tw::load_graph(need_input(s.graph, "paths.graph"));
    const auto seeds = parse_seeds(need(s.seeds, "ppr.seeds"));
    const auto result = tw::personalized_pagerank(graph, seeds, ppr_config(s));
    const auto ranked = tw::rank_nodes(graph, result.scores);
    std::string scores;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const std::string line =
          tw::Json{{"rank", i + 1}, {"node", ranked[i].value}, {"score", result.scores.at(ranked[i])}}.dump();
      if (i < s.top) std::cout << line << "\n";
      scores += line + "\n";
    }
    if (!s.out.empty()) tw::write_file(s.out, scores);
    return Summary("ppr")
        .add("nodes", graph.node_count())
        .add("iterations", result.iterations)
        .add("converged", result.converged ? "true" : "false");
  };

  auto* generate = app.add_subcommand("generate", "Generate exemplar plan artifacts");
  bind(generate, "--queries", "paths.queries", s.queries, "Query file");
  bind(generate, "--tools", "paths.tools", s.tools, "Tool corpus");
  bind(generate, "--graph", "paths.graph", s.graph, "Fused graph");
  bind(generate, "--store", "paths.store", s.store, "Vector store");
  bind(generate, "--store-out", "paths.store_out", s.store_out, "Store with artifacts added");
  bind(generate, "--out", "paths.artifacts", s.artifacts, "Artifact output");
  gateway_flags(generate);
  generation_flags(generate);
  handlers[generate] = [&] {
    const auto catalog = tw::load_tool_corpus(need_input(s.tools, "paths.tools"));
    const auto graph = tw::load_graph(need_input(s.graph, "paths.graph"));
    auto store = tw::VectorStore::load(need_input(s.store, "paths.store"));
    const auto queries_path = need_input(s.queries, "paths.queries");
    const auto cfg = generation_config(s);
    const auto queries = tw::filter_queries(tw::parse_query_file(tw::read_file(queries_path), queries_path.string()),
                                            catalog, level_filter(s));
    auto gateway = make_gateway(s);
    const tw::Embedder embedder(*gateway, store.dims());
    const auto run = tw::generate_artifacts(queries, graph, store, catalog, *gateway, embedder, cfg);
    save_recording(s, *gateway);
    tw::write_file(need(s.artifacts, "paths.artifacts"), tw::serialize_artifacts(run.artifacts));
    if (!s.store_out.empty()) store.save(s.store_out);
    for (const auto& f : run.failures) std::cerr << "rejected " << f.query_id << ": " << f.reason << "\n";
    return Summary("generate")
        .add("queries", queries.size())
        .add("artifacts", run.artifacts.size())
        .add("rejected", run.failures.size())
        .add("ppr", cfg.retrieval.use_ppr ? "on" : "off");
  };

  auto* evaluate = app.add_subcommand("evaluate", "Score artifacts and dependencies");
  bind(evaluate, "--artifacts", "paths.artifacts", s.artifacts, "Artifact file");
  bind(evaluate, "--gold", "paths.queries", s.queries, "Queries with gold plans");
  bind(evaluate, "--deps", "paths.deps", s.deps, "Predicted dependencies (optional)");
  bind(evaluate, "--gold-deps", "paths.gold_dependencies", s.gold_deps, "Gold dependencies (optional)");
  bind(evaluate, "--out", "paths.report", s.report, "Report output");
  gateway_flags(evaluate);
  handlers[evaluate] = [&] {
    const auto artifacts = tw::load_artifacts(need_input(s.artifacts, "paths.artifacts"));
    const auto gold_path = need_input(s.queries, "paths.queries");
    const auto queries = tw::parse_query_file(tw::read_file(gold_path), gold_path.string());
    auto gateway = make_gateway(s);
    const auto report = tw::evaluate_plans(artifacts, queries, *gateway);
    save_recording(s, *gateway);
    Summary summary("evaluate");
    std::string out;
    if (!s.deps.empty() && !s.gold_deps.empty()) {
      const auto dr = tw::score_dependencies(tw::dependency_pairs(tw::load_dependencies(need_input(s.deps, "paths.deps"))),
                                             tw::dependency_pairs(tw::load_dependencies(
                                                 need_input(s.gold_deps, "paths.gold_dependencies"))));
      out += tw::serialize_dependency_report(dr);
      summary.add("dep_precision", fixed(dr.precision)).add("dep_recall", fixed(dr.recall));
    }
    out += tw::serialize_report(report);
    tw::write_file(need(s.report, "paths.report"), out);
    return summary.add("queries", report.n_queries)
        .add("binary_match", fixed(report.binary_match_accuracy))
        .add("judge_mean", fixed(report.mean_judge_score));
  };

  auto* ablate = app.add_subcommand("ablate", "Compare generation with and without PPR");
  bind(ablate, "--queries", "paths.queries", s.queries, "Queries with gold plans");
  bind(ablate, "--tools", "paths.tools", s.tools, "Tool corpus");
  bind(ablate, "--graph", "paths.graph", s.graph, "Fused graph");
  bind(ablate, "--store", "paths.store", s.store, "Vector store");
  bind(ablate, "--out", "paths.report", s.report, "Ablation report output");
  gateway_flags(ablate);
  generation_flags(ablate);
  handlers[ablate] = [&] {
    const auto catalog = tw::load_tool_corpus(need_input(s.tools, "paths.tools"));
    const auto graph = tw::load_graph(need_input(s.graph, "paths.graph"));
    const auto store = tw::VectorStore::load(need_input(s.store, "paths.store"));
    const auto queries_path = need_input(s.queries, "paths.queries");
    const auto queries = tw::filter_queries(tw::parse_query_file(tw::read_file(queries_path), queries_path.string()),
                                            catalog, level_filter(s));
    auto with = generation_config(s);
    with.retrieval.use_ppr = true;
    auto without = with;
    without.retrieval.use_ppr = false;
    auto gateway = make_gateway(s);
    const tw::Embedder embedder(*gateway, store.dims());
    const auto result = tw::run_ablation(queries, graph, store, catalog, *gateway, embedder, with, without);
    save_recording(s, *gateway);
    tw::write_file(need(s.report, "paths.report"), tw::serialize_ablation(result));
    return Summary("ablate")
        .add("queries", result.with_ppr.n_queries)
        .add("with_ppr", fixed(result.with_ppr.binary_match_accuracy))
        .add("without_ppr", fixed(result.without_ppr.binary_match_accuracy))
        .add("delta", fixed(result.accuracy_delta))
        .add("won", result.won_by_ppr.size())
        .add("lost", result.lost_by_ppr.size());
  };

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  bind(pipeline, "--tools", "paths.tools", s.tools, "Tool corpus");
  bind(pipeline, "--docs", "paths.docs", s.docs, "Document corpus (optional)");
  bind(pipeline, "--queries", "paths.queries", s.queries, "Queries with gold plans");
  bind(pipeline, "--gold-deps", "paths.gold_dependencies", s.gold_deps, "Gold dependencies (optional)");
  bind(pipeline, "--out", "paths.out", s.out, "Output directory");
  gateway_flags(pipeline);
  extraction_flags(pipeline);
  generation_flags(pipeline);
  handlers[pipeline] = [&] {
    tw::PipelineConfig cfg;
    cfg.tools = s.tools;
    cfg.docs = s.docs;
    cfg.queries = s.queries;
    cfg.gold_dependencies = s.gold_deps;
    cfg.out_dir = s.out;
    cfg.level = level_filter(s);
    cfg.dims = s.dims;
    cfg.extraction = extraction_config(s);
    cfg.generation = generation_config(s);
    tw::check_pipeline_paths(cfg);
    auto gateway = make_gateway(s);
    const auto r = tw::run_pipeline(cfg, *gateway);
    save_recording(s, *gateway);
    Summary summary("pipeline");
    summary.add("tools", r.tools)
        .add("accepted", r.accepted)
        .add("rejected", r.rejected)
        .add("nodes", r.nodes)
        .add("edges", r.edges)
        .add("queries", r.queries)
        .add("artifacts", r.artifacts)
        .add("rejected_plans", r.failures)
        .add("binary_match", fixed(r.plans.binary_match_accuracy))
        .add("judge_mean", fixed(r.plans.mean_judge_score));
    if (r.dependencies) {
      summary.add("dep_precision", fixed(r.dependencies->precision)).add("dep_recall", fixed(r.dependencies->recall));
    }
    return summary.add("out", s.out);
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  bind(synth, "--spec", "paths.spec", s.spec, "Corpus spec (JSON)");
  bind(synth, "--out", "paths.out", s.out, "Output directory");
  handlers[synth] = [&] {
    const auto spec_path = need_input(s.spec, "paths.spec");
    tw::Json spec_json;
    try {
      spec_json = tw::Json::parse(tw::read_file(spec_path));
    } catch (const tw::Json::parse_error& e) {
      tw::fail(tw::ErrorCode::ConfigError, "paths.spec: " + std::string(e.what()));
    }
    const auto spec = tw::parse_corpus_spec(spec_json);
    const auto corpus = tw::generate_corpus(spec);
    tw::write_corpus(corpus, need(s.out, "paths.out"));
    return Summary("synth")
        .add("tools", corpus.tools.size())
        .add("planted", corpus.gold_dependencies.size())
        .add("docs", corpus.docs.size())
        .add("queries", corpus.queries.size())
        .add("buried", corpus.buried_tool);
  };

  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--config", config_path, "Sectioned config file; flags override its values");
  }

  std::string stage = "cli";
  try {
    const std::string cfg = config_path_from_argv(argc, argv);
    if (!cfg.empty()) apply_config_file(cfg, keys);
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      const bool unknown = dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr ||
                           dynamic_cast<const CLI::RequiredError*>(&e) != nullptr;
      std::cout << "status=fail stage=cli error=" << (unknown ? "UnknownSubcommand" : "ConfigError") << "\n";
      return 1;
    }
    for (auto& [sub, handler] : handlers) {
      if (!sub->parsed()) continue;
      stage = sub->get_name();
      const Summary summary = handler();
      std::cout << summary.line(true) << "\n";
      return 0;
    }
    return 1;
  } catch (const tw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << "status=fail stage=" << stage << " error=" << tw::to_string(e.code()) << "\n";
    return tw::is_gateway_or_io(e.code()) ? 2 : 1;
  } catch (const tw::Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << "status=fail stage=" << stage << " error=MalformedRecord\n";
    return 1;
  }
}
