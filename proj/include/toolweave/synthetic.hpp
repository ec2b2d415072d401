#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "toolweave/dependency.hpp"
#include "toolweave/error.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/plan.hpp"
#include "toolweave/retrieval.hpp"
#include "toolweave/schema.hpp"
#include "toolweave/stub_rules.hpp"
#include "toolweave/text.hpp"

// Deterministic tool ecosystems with planted dependencies.
//
// Every planted dependency owns a payload field / argument pair with a name
// used nowhere else and identical types, and every other field name is either
// private to one tool or a distractor whose two sides have incompatible types.
// Hence heuristic_match_oracle recovers exactly the planted pairs.
//
// A fixed "inventory" cluster forms its own connected component. Its hub also
// feeds one lexically unrelated buried tool, which embedding-only retrieval
// misses and PPR from the cluster reaches.

namespace toolweave {

struct CorpusSpec {
  std::size_t n_tools = 50;
  std::size_t n_planted = 40;
  std::size_t n_docs = 20;
  double doc_mention_fraction = 0.5;
  double distractor_rate = 0.1;
  std::uint64_t seed = 7;
  std::size_t n_g1 = 10;  // two-tool plans over a planted pair
  std::size_t n_g2 = 5;   // three-tool chains
  std::size_t n_g3 = 3;   // buried-tool plans
  std::size_t verify_k = 4;
  std::size_t verify_top_n = 10;
  friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

inline CorpusSpec parse_corpus_spec(const Json& j) {
  CorpusSpec s;
  auto count = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      fail(ErrorCode::ConfigError, std::string("spec.") + key + " must be a non-negative integer");
    }
    out = v.get<std::size_t>();
  };
  auto rate = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) {
      fail(ErrorCode::ConfigError, std::string("spec.") + key + " must be a number in [0, 1]");
    }
    out = v.get<double>();
  };
  if (!j.is_object()) fail(ErrorCode::ConfigError, "spec must be a JSON object");
  count("n_tools", s.n_tools);
  count("n_planted", s.n_planted);
  count("n_docs", s.n_docs);
  rate("doc_mention_fraction", s.doc_mention_fraction);
  rate("distractor_rate", s.distractor_rate);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) fail(ErrorCode::ConfigError, "spec.seed must be a non-negative integer");
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  count("n_g1", s.n_g1);
  count("n_g2", s.n_g2);
  count("n_g3", s.n_g3);
  count("verify_k", s.verify_k);
  count("verify_top_n", s.verify_top_n);
  return s;
}

inline Json to_json(const CorpusSpec& s) {
  return {{"n_tools", s.n_tools},   {"n_planted", s.n_planted},
          {"n_docs", s.n_docs},     {"doc_mention_fraction", s.doc_mention_fraction},
          {"distractor_rate", s.distractor_rate}, {"seed", s.seed},
          {"n_g1", s.n_g1},         {"n_g2", s.n_g2},
          {"n_g3", s.n_g3},         {"verify_k", s.verify_k},
          {"verify_top_n", s.verify_top_n}};
}

struct SyntheticCorpus {
  ToolCatalog tools;
  std::vector<ToolDependency> gold_dependencies;
  std::vector<DocumentRecord> docs;
  std::vector<QueryRecord> queries;
  std::string buried_tool;
  std::string buried_hub;
  std::size_t draws = 1;  // redraws needed for the buried scenario to hold
};

namespace synth {

struct Verb {
  const char* id;
  const char* phrase;  // imperative, lowercase
  const char* blurb;   // third person, capitalized
};

inline constexpr std::array<Verb, 12> kVerbs{{
    {"fetch", "fetch the", "Fetches the"},
    {"create", "create a new", "Creates a new"},
    {"update", "update the", "Updates the"},
    {"cancel", "cancel the", "Cancels the"},
    {"verify", "verify the", "Verifies the"},
    {"archive", "archive the", "Archives the"},
    {"export", "export the", "Exports the"},
    {"schedule", "schedule the", "Schedules the"},
    {"approve", "approve the", "Approves the"},
    {"merge", "merge the", "Merges the"},
    {"price", "price the", "Prices the"},
    {"notify", "send a notice about the", "Sends a notice about the"},
}};

inline constexpr std::array<const char*, 20> kNouns{
    "invoice", "shipment", "customer", "payment",  "refund",  "ticket",       "account",
    "contract", "vendor",  "coupon",   "subscription", "courier", "quote",   "booking",
    "parcel",  "warranty", "receipt",  "ledger",   "payroll", "employee"};

inline constexpr std::array<const char*, 6> kSuffixes{
    "record for the billing desk", "details used by support agents", "entry in the back office",
    "file kept by the operations team", "summary for account managers", "data for the audit trail"};

inline constexpr std::array<const char*, 8> kCompanies{
    "Acme Logistics", "Northwind Billing", "Globex Support",  "Initech Finance",
    "Umbrella Retail", "Contoso Claims",   "Stark Procurement", "Wayne Payroll"};

struct ClusterTool {
  const char* name;
  std::array<const char*, 2> descriptions;
};

inline constexpr std::array<ClusterTool, 6> kCluster{{
    {"check_inventory_level",
     {"Checks the inventory stock level held in each warehouse",
      "Reports current warehouse inventory stock levels"}},
    {"inventory_stock_lookup",
     {"Looks up warehouse inventory stock by item",
      "Finds the inventory stock count for a warehouse item"}},
    {"reserve_inventory_stock",
     {"Reserves warehouse inventory stock for an item",
      "Holds inventory stock in the warehouse for pending use"}},
    {"restock_inventory_item",
     {"Restocks warehouse inventory when stock levels run low",
      "Raises a restock of inventory items for the warehouse"}},
    {"audit_inventory_count",
     {"Audits the inventory stock count in a warehouse",
      "Compares counted warehouse inventory stock with records"}},
    {"forecast_inventory_demand",
     {"Forecasts inventory stock demand for the warehouse",
      "Projects warehouse inventory stock needs by item"}},
}};

inline constexpr const char* kBuriedName = "backlog_check";
inline constexpr std::array<const char*, 3> kBuriedDescriptions{
    "Flags overdue fulfilment queues awaiting dispatch",
    "Reports delayed jobs pending in the fulfilment queue",
    "Lists overdue queue entries awaiting a courier slot"};

inline constexpr std::array<const char*, 3> kBuriedQueries{
    "Check the current inventory stock level in the warehouse",
    "Look up inventory stock levels across each warehouse",
    "What inventory stock level does the warehouse hold right now"};

inline constexpr std::array<TypeTag, 6> kTypes{TypeTag::String, TypeTag::Integer, TypeTag::Number,
                                              TypeTag::Boolean, TypeTag::List,    TypeTag::Object};

struct ToolDraft {
  ToolSchema schema;
  std::string phrase;  // imperative phrase used in query text
};

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline std::string words_of(const std::string& tool_id) {
  std::string out = tool_id;
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

/// Planted edge: `field` on source.output_payload feeds the same-named
/// argument on target.
struct Plant {
  std::size_t src;
  std::size_t dst;
  std::string field;
  TypeTag type;
};

inline void plant(std::vector<ToolDraft>& tools, const Plant& p) {
  tools[p.src].schema.output_payload.push_back({p.field, p.type, "value handed to downstream tools"});
  tools[p.dst].schema.arguments.push_back({p.field, p.type, true, "value produced upstream"});
}

inline GoldPlan chain_plan(const std::vector<ToolDraft>& tools, const std::vector<std::size_t>& chain,
                           const std::map<std::pair<std::size_t, std::size_t>, Plant>& plants) {
  GoldPlan plan;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const ToolSchema& t = tools[chain[i]].schema;
    GoldStep step;
    step.tool_id = t.tool_id;
    const Plant* incoming = nullptr;
    if (i > 0) {
      incoming = &plants.at({chain[i - 1], chain[i]});
      plan.gold_dependencies.emplace_back(tools[chain[i - 1]].schema.tool_id, t.tool_id);
    }
    for (const auto& a : t.arguments) {
      if (incoming != nullptr && a.name == incoming->field) {
        step.arguments.emplace(a.name, Binding::ref(i, a.name));
      } else if (a.required) {
        step.arguments.emplace(a.name, Binding{Json("<" + a.name + ">")});
      }
    }
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

inline std::string query_id(Level level, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03zu", std::string(to_string(level)).c_str(), k + 1);
  return to_lower(buf);
}

/// True when every gold tool of `q` appears in the retrieved subgraph.
inline bool context_covers(const RetrievedContext& ctx, const GoldPlan& plan) {
  for (const auto& s : plan.steps)
    if (!ctx.subgraph.contains(NodeId::tool(s.tool_id))) return false;
  for (const auto& [a, b] : plan.gold_dependencies)
    if (!ctx.subgraph.find_edge(NodeId::tool(a), NodeId::tool(b), Relation::CanUseToolOutput)) return false;
  return true;
}

}  // namespace synth

/// Builds the corpus for `spec`. Throws InfeasibleSpec when the counts
/// cannot hold the buried cluster, the plants, or the requested queries.
inline SyntheticCorpus generate_corpus(const CorpusSpec& spec) {
  using namespace synth;
  constexpr std::size_t kClusterSize = kCluster.size();
  // Hub <-> every other cluster tool, plus hub -> buried.
  constexpr std::size_t kClusterPlants = 2 * (kClusterSize - 1) + 1;

  if (spec.n_tools < kClusterSize + 1 + 2) {
    fail(ErrorCode::InfeasibleSpec, "n_tools must be at least " + std::to_string(kClusterSize + 3));
  }
  if (spec.n_tools > 0 && spec.n_planted > spec.n_tools * (spec.n_tools - 1)) {
    fail(ErrorCode::InfeasibleSpec, "n_planted exceeds n_tools * (n_tools - 1)");
  }
  if (spec.n_planted < kClusterPlants) {
    fail(ErrorCode::InfeasibleSpec, "n_planted must be at least " + std::to_string(kClusterPlants));
  }
  const std::size_t n_regular = spec.n_tools - kClusterSize - 1;
  const std::size_t regular_plants = spec.n_planted - kClusterPlants;
  if (n_regular > kVerbs.size() * kNouns.size()) fail(ErrorCode::InfeasibleSpec, "n_tools exceeds the vocabulary");
  if (regular_plants > n_regular * (n_regular - 1)) {
    fail(ErrorCode::InfeasibleSpec, "n_planted does not fit among the tools outside the buried cluster");
  }
  if (spec.n_g3 > kBuriedQueries.size()) {
    fail(ErrorCode::InfeasibleSpec, "at most " + std::to_string(kBuriedQueries.size()) + " buried queries");
  }
  if (spec.verify_k < 1 || spec.verify_top_n < 1) fail(ErrorCode::InfeasibleSpec, "verify_k and verify_top_n >= 1");

  auto gateway = make_stub_gateway();
  const Embedder embedder(*gateway);
  constexpr std::size_t kMaxDraws = 32;

  for (std::size_t draw = 0; draw < kMaxDraws; ++draw) {
    std::mt19937_64 rng(spec.seed + 0x9e3779b97f4a7c15ULL * draw);
    std::vector<ToolDraft> tools;

    // Regular tools: distinct verb/noun combinations.
    const auto combos = sample_indices(kVerbs.size() * kNouns.size(), n_regular, rng());
    for (std::size_t c : combos) {
      const Verb& v = kVerbs[c / kNouns.size()];
      const std::string noun = kNouns[c % kNouns.size()];
      ToolDraft d;
      d.schema.name = std::string(v.id) + "_" + noun;
      d.schema.tool_id = d.schema.name;
      d.schema.description =
          std::string(v.blurb) + " " + noun + " " + kSuffixes[uniform_below(rng, kSuffixes.size())];
      d.phrase = std::string(v.phrase) + " " + noun;
      tools.push_back(std::move(d));
    }
    // Cluster and buried tool.
    const std::size_t cluster_begin = tools.size();
    for (const auto& c : kCluster) {
      ToolDraft d;
      d.schema.name = c.name;
      d.schema.tool_id = c.name;
      d.schema.description = c.descriptions[uniform_below(rng, c.descriptions.size())];
      d.phrase = to_lower(d.schema.description);
      tools.push_back(std::move(d));
    }
    const std::size_t hub = cluster_begin;
    const std::size_t buried = tools.size();
    {
      ToolDraft d;
      d.schema.name = kBuriedName;
      d.schema.tool_id = kBuriedName;
      d.schema.description = kBuriedDescriptions[uniform_below(rng, kBuriedDescriptions.size())];
      d.phrase = to_lower(d.schema.description);
      tools.push_back(std::move(d));
    }

    // Private fields: unique per tool.
    for (auto& t : tools) {
      t.schema.arguments.push_back({t.schema.tool_id + "_mode", TypeTag::String, false, "processing mode"});
      t.schema.output_payload.push_back({t.schema.tool_id + "_status", TypeTag::String, "outcome of the call"});
    }

    std::map<std::pair<std::size_t, std::size_t>, Plant> plants;
    std::size_t field_counter = 0;
    auto add_plant = [&](std::size_t src, std::size_t dst) {
      const std::string noun = tokenize(tools[src].schema.tool_id).back();
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s_ref_%03zu", noun.c_str(), ++field_counter);
      Plant p{src, dst, buf, kTypes[uniform_below(rng, kTypes.size())]};
      plant(tools, p);
      plants.emplace(std::make_pair(src, dst), p);
    };
    for (std::size_t i = cluster_begin + 1; i < buried; ++i) {
      add_plant(hub, i);
      add_plant(i, hub);
    }
    add_plant(hub, buried);
    for (std::size_t k : sample_indices(n_regular * (n_regular - 1), regular_plants, rng())) {
      const std::size_t src = k / (n_regular - 1);
      std::size_t dst = k % (n_regular - 1);
      if (dst >= src) ++dst;
      add_plant(src, dst);
    }

    // Distractors: same name on both sides, incompatible types.
    std::size_t distractors = 0;
    for (std::size_t i = 0; i < tools.size(); ++i) {
      if (uniform_unit(rng) >= spec.distractor_rate) continue;
      std::size_t j = uniform_below(rng, tools.size() - 1);
      if (j >= i) ++j;
      const std::string name = "shared_code_" + std::to_string(++distractors);
      tools[i].schema.output_payload.push_back({name, TypeTag::Integer, "internal code"});
      tools[j].schema.arguments.push_back({name, TypeTag::Boolean, false, "internal flag"});
    }

    SyntheticCorpus corpus;
    corpus.draws = draw + 1;
    corpus.buried_tool = tools[buried].schema.tool_id;
    corpus.buried_hub = tools[hub].schema.tool_id;
    for (const auto& t : tools) corpus.tools.add(t.schema);
    for (const auto& [key, p] : plants) {
      ToolDependency d;
      d.candidate = {tools[p.src].schema.tool_id, tools[p.dst].schema.tool_id, p.field, p.field, "planted", 1.0};
      d.verdict = Verdict::Accepted;
      d.judge_rationale = "planted";
      d.provenance = Provenance::Heuristic;
      corpus.gold_dependencies.push_back(std::move(d));
    }
    std::sort(corpus.gold_dependencies.begin(), corpus.gold_dependencies.end(),
              [](const auto& a, const auto& b) { return a.candidate.key() < b.candidate.key(); });

    // Retrieval check harness over the tool graph.
    const FusedGraph graph = build_tool_graph(corpus.tools, corpus.gold_dependencies);
    VectorStore store(embedder.dims());
    index_graph(store, graph, embedder);
    RetrievalConfig with_ppr;
    with_ppr.k_triplets = spec.verify_k;
    with_ppr.top_n = spec.verify_top_n;
    RetrievalConfig without_ppr = with_ppr;
    without_ppr.use_ppr = false;
    auto both_cover = [&](const QueryRecord& q) {
      return synth::context_covers(retrieve_context(q, graph, store, embedder, with_ppr), *q.gold_plan) &&
             synth::context_covers(retrieve_context(q, graph, store, embedder, without_ppr), *q.gold_plan);
    };

    // Buried queries: PPR context must contain the buried tool, the
    // embedding-only context must not.
    bool buried_ok = true;
    std::vector<QueryRecord> g3;
    for (std::size_t k = 0; k < spec.n_g3; ++k) {
      QueryRecord q{query_id(Level::G3, k), kBuriedQueries[k], Level::G3, chain_plan(tools, {hub, buried}, plants)};
      const NodeId bid = NodeId::tool(corpus.buried_tool);
      const bool in_ppr = retrieve_context(q, graph, store, embedder, with_ppr).subgraph.contains(bid);
      const bool in_dense = retrieve_context(q, graph, store, embedder, without_ppr).subgraph.contains(bid);
      if (!in_ppr || in_dense) {
        buried_ok = false;
        break;
      }
      g3.push_back(std::move(q));
    }
    if (!buried_ok) continue;

    // Regular queries, kept when both retrieval arms surface the gold tools.
    std::vector<std::pair<std::size_t, std::size_t>> regular_pairs;
    for (const auto& [key, p] : plants)
      if (key.first < cluster_begin && key.second < cluster_begin) regular_pairs.push_back(key);
    std::vector<QueryRecord> g1;
    for (std::size_t idx : sample_indices(regular_pairs.size(), regular_pairs.size(), rng())) {
      if (g1.size() == spec.n_g1) break;
      const auto [a, b] = regular_pairs[idx];
      QueryRecord q{query_id(Level::G1, g1.size()),
                    capitalize(tools[a].phrase) + " and then " + tools[b].phrase, Level::G1,
                    chain_plan(tools, {a, b}, plants)};
      if (both_cover(q)) g1.push_back(std::move(q));
    }
    std::vector<std::vector<std::size_t>> chains;
    for (const auto& [ab, p1] : plants) {
      if (ab.first >= cluster_begin || ab.second >= cluster_begin) continue;
      for (const auto& [bc, p2] : plants) {
        if (bc.first != ab.second || bc.second == ab.first || bc.second >= cluster_begin) continue;
        chains.push_back({ab.first, ab.second, bc.second});
      }
    }
    std::vector<QueryRecord> g2;
    for (std::size_t idx : sample_indices(chains.size(), chains.size(), rng())) {
      if (g2.size() == spec.n_g2) break;
      const auto& c = chains[idx];
      QueryRecord q{query_id(Level::G2, g2.size()),
                    capitalize(tools[c[0]].phrase) + ", then " + tools[c[1]].phrase + ", and finally " +
                        tools[c[2]].phrase,
                    Level::G2, chain_plan(tools, c, plants)};
      if (both_cover(q)) g2.push_back(std::move(q));
    }
    if (g1.size() < spec.n_g1 || g2.size() < spec.n_g2) continue;
    for (auto* level : {&g1, &g2, &g3})
      for (auto& q : *level) corpus.queries.push_back(std::move(q));

    // Documents. Cluster tools stay out of the prose so the cluster remains
    // its own component after fusion.
    for (std::size_t k = 0; k < spec.n_docs; ++k) {
      DocumentRecord doc;
      char buf[32];
      std::snprintf(buf, sizeof buf, "doc-%03zu", k + 1);
      doc.doc_id = buf;
      const std::string a = kCompanies[uniform_below(rng, kCompanies.size())];
      std::string b = kCompanies[uniform_below(rng, kCompanies.size())];
      if (b == a) b = kCompanies[(std::find(kCompanies.begin(), kCompanies.end(), a) - kCompanies.begin() + 1) %
                                 kCompanies.size()];
      const bool mentions = n_regular > 0 && uniform_unit(rng) < spec.doc_mention_fraction;
      if (mentions) {
        const ToolDraft& t = tools[uniform_below(rng, n_regular)];
        const std::string words = words_of(t.schema.tool_id);
        doc.title = "Procedure: " + words;
        doc.body = a + " escalates cases to " + b + " when agents " + words + " requests.\n\n" + b +
                   " reviews every " + tokenize(t.schema.tool_id).back() + " before closing the case.";
        doc.referenced_tools.push_back(t.schema.tool_id);
      } else {
        doc.title = "Partner note " + std::to_string(k + 1);
        doc.body = a + " shares weekly reports with " + b + ".\n\n" + b + " confirms the reports with " + a + ".";
      }
      corpus.docs.push_back(std::move(doc));
    }
    return corpus;
  }
  fail(ErrorCode::InfeasibleSpec,
       "no draw satisfied the buried-tool and query coverage checks after " + std::to_string(kMaxDraws) + " draws");
}

struct CorpusFiles {
  std::filesystem::path tools;
  std::filesystem::path docs;
  std::filesystem::path queries;
  std::filesystem::path gold_dependencies;
};

inline CorpusFiles write_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  CorpusFiles f{dir / "tools.jsonl", dir / "docs.jsonl", dir / "queries.jsonl", dir / "gold_dependencies.jsonl"};
  write_file(f.tools, serialize_tool_corpus(corpus.tools));
  std::string docs;
  for (const auto& d : corpus.docs) docs += to_json(d).dump() + "\n";
  write_file(f.docs, docs);
  std::string queries;
  for (const auto& q : corpus.queries) queries += to_json(q).dump() + "\n";
  write_file(f.queries, queries);
  write_file(f.gold_dependencies, serialize_dependencies(corpus.gold_dependencies));
  return f;
}

}  // namespace toolweave
