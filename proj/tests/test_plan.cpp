#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace tw_test;

namespace {

FusedGraph order_graph() {
  return build_tool_graph(order_catalog(), {accepted_dep("get_order", "cancel_order", "order_id"),
                                            accepted_dep("cancel_order", "refund_order", "refund_id")});
}

QueryRecord query(const std::string& id, const std::string& text) {
  QueryRecord q;
  q.query_id = id;
  q.text = text;
  return q;
}

PromptBundle order_bundle() {
  const auto g = order_graph();
  return assemble_context(query("q1", "cancel my order"), g, {}, {}, 2000, order_catalog());
}

std::vector<ViolationKind> kinds(const std::vector<Violation>& v) {
  std::vector<ViolationKind> out;
  for (const auto& x : v) out.push_back(x.kind);
  return out;
}

std::size_t words(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected an Error";
  return Error(ErrorCode::GatewayError, "none");
}

}  // namespace

TEST(ValidatePlan, WellFormedTwoStep) {
  const auto a = artifact_from(two_step_plan_json());
  EXPECT_TRUE(validate_plan(a, order_catalog()).empty());
  EXPECT_EQ(a.steps[1].depends_on, std::set<std::size_t>{1});
}

TEST(ValidatePlan, UnknownArgumentMessage) {
  Json plan = two_step_plan_json();
  plan["steps"][1]["arguments"]["qty"] = 3;
  const auto v = validate_plan(artifact_from(plan), order_catalog());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::UnknownArgument);
  EXPECT_EQ(v[0].message, "unknown argument qty on cancel_order");
}

TEST(ValidatePlan, StrictModeNeedsGraphEdge) {
  const auto g = build_tool_graph(order_catalog(), {});
  const auto a = artifact_from(two_step_plan_json());
  EXPECT_TRUE(validate_plan(a, order_catalog(), &g, false).empty());
  const auto v = validate_plan(a, order_catalog(), &g, true);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::MissingGraphEdge);
  const auto full = order_graph();
  EXPECT_TRUE(validate_plan(a, order_catalog(), &full, true).empty());
}

TEST(ValidatePlan, Categories) {
  const auto catalog = order_catalog();
  EXPECT_EQ(kinds(validate_plan(artifact_from(Json{{"steps", Json::array()}}), catalog)),
            std::vector<ViolationKind>{ViolationKind::EmptyPlan});

  Json unknown_tool = two_step_plan_json();
  unknown_tool["steps"][0]["tool"] = "launch_rocket";
  EXPECT_EQ(kinds(validate_plan(artifact_from(unknown_tool), catalog)),
            std::vector<ViolationKind>{ViolationKind::UnknownTool});

  Json unknown_field = two_step_plan_json();
  unknown_field["steps"][1]["arguments"]["order_id"]["field"] = "nope";
  EXPECT_EQ(kinds(validate_plan(artifact_from(unknown_field), catalog)),
            std::vector<ViolationKind>{ViolationKind::UnknownField});

  Json forward = two_step_plan_json();
  forward["steps"][0]["depends_on"] = {2};
  const auto fv = kinds(validate_plan(artifact_from(forward), catalog));
  EXPECT_NE(std::find(fv.begin(), fv.end(), ViolationKind::ForwardReference), fv.end());
  EXPECT_NE(std::find(fv.begin(), fv.end(), ViolationKind::Cycle), fv.end());

  Json dangling = two_step_plan_json();
  dangling["steps"][1]["depends_on"] = {7};
  EXPECT_EQ(kinds(validate_plan(artifact_from(dangling), catalog)),
            std::vector<ViolationKind>{ViolationKind::ForwardReference});
}

TEST(ValidatePlan, SelfReferenceIsForwardAndCycle) {
  Json plan = two_step_plan_json();
  plan["steps"][1]["depends_on"] = {1, 2};
  const auto v = kinds(validate_plan(artifact_from(plan), order_catalog()));
  EXPECT_NE(std::find(v.begin(), v.end(), ViolationKind::ForwardReference), v.end());
  EXPECT_NE(std::find(v.begin(), v.end(), ViolationKind::Cycle), v.end());
}

TEST(AssembleContext, LargeBudgetTakesEverything) {
  const auto g = fuse(order_graph(), ingest_document_graph({{"d1", "SOP", "Cancel Order first.", {}}}));
  const std::vector<BundlePassage> passages = {{"passage:d1#0", "Cancel Order first.", 0.5}};
  const auto b = assemble_context(query("q", "cancel"), g, {}, passages, 10000, order_catalog());
  EXPECT_TRUE(b.truncation.empty());
  EXPECT_EQ(b.triplets.size(), 2u);
  EXPECT_EQ(b.passages.size(), 1u);
  EXPECT_EQ(b.tools.size(), 3u);
  EXPECT_EQ(b.subgraph_fingerprint, g.fingerprint());
}

TEST(AssembleContext, BudgetFitsTopThreeOfFive) {
  ToolCatalog catalog;
  const char* names[] = {"Alpha", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot"};
  const char* descs[] = {"one", "two words", "three words here", "four words right here", "five words are right here",
                         "six words are right here now"};
  for (int i = 0; i < 6; ++i) catalog.add(make_schema(names[i], {}, {}, descs[i]));
  std::vector<ToolDependency> deps;
  for (int i = 1; i < 6; ++i) deps.push_back(accepted_dep("alpha", normalize_tool_id(names[i]), "x"));
  const auto g = build_tool_graph(catalog, deps);

  TripletScores scores;
  const double s[] = {0.0, 0.3, 0.9, 0.1, 0.7, 0.5};  // ranking: charlie, echo, foxtrot, bravo, delta
  for (int i = 1; i < 6; ++i) scores[{NodeId::tool("alpha"), NodeId::tool(normalize_tool_id(names[i]))}] = s[i];

  std::map<std::string, std::size_t> cost;
  for (const auto& e : g.edges()) cost[g.find(e.dst)->label] = words(verbalize_triplet(e, g).text);
  const std::size_t budget = cost["charlie"] + cost["echo"] + cost["foxtrot"];

  const auto b = assemble_context(query("q", "x"), g, scores, {}, budget, catalog);
  ASSERT_EQ(b.triplets.size(), 3u);
  EXPECT_EQ(b.triplets[0].target_tool, "charlie");
  EXPECT_EQ(b.triplets[1].target_tool, "echo");
  EXPECT_EQ(b.triplets[2].target_tool, "foxtrot");
  EXPECT_EQ(b.used_tokens, budget);
  EXPECT_EQ(b.truncation.dropped_triplets, (std::vector<std::string>{"alpha->bravo", "alpha->delta"}));
}

TEST(AssembleContext, EmptySubgraph) {
  EXPECT_EQ(error_of([] { assemble_context(query("q", "x"), FusedGraph{}, {}, {}, 100, order_catalog()); }).code(),
            ErrorCode::EmptySubgraph);
}

TEST(GeneratePlan, ReplayTwoStepPlan) {
  const auto bundle = order_bundle();
  FixtureFile f;
  put_fixture(f, Role::Generate, generation_payload(bundle, 1, {}), two_step_plan_json().dump());
  auto gw = replay_gateway(f);
  const auto a = generate_plan(bundle, *gw, order_catalog());
  ASSERT_EQ(a.steps.size(), 2u);
  EXPECT_EQ(a.steps[1].depends_on, std::set<std::size_t>{1});
  EXPECT_EQ(a.provenance, "replay");
  EXPECT_EQ(a.query_id, "q1");
  EXPECT_EQ(a.subgraph_fingerprint, bundle.subgraph_fingerprint);
}

TEST(GeneratePlan, ReplayUnknownToolRejected) {
  const auto bundle = order_bundle();
  Json plan = two_step_plan_json();
  plan["steps"][0]["tool"] = "launch_rocket";
  FixtureFile f;
  put_fixture(f, Role::Generate, generation_payload(bundle, 1, {}), plan.dump());
  auto gw = replay_gateway(f);
  GenerationOptions one;
  one.max_attempts = 1;
  const Error e = error_of([&] { generate_plan(bundle, *gw, order_catalog(), nullptr, one); });
  EXPECT_EQ(e.code(), ErrorCode::GenerationRejected);
  EXPECT_NE(std::string(e.what()).find("unknown tool"), std::string::npos) << e.what();
}

TEST(GeneratePlan, ReplayForwardReferenceRejected) {
  const auto bundle = order_bundle();
  Json plan = two_step_plan_json();
  plan["steps"][0]["depends_on"] = {2};
  FixtureFile f;
  put_fixture(f, Role::Generate, generation_payload(bundle, 1, {}), plan.dump());
  auto gw = replay_gateway(f);
  GenerationOptions one;
  one.max_attempts = 1;
  const Error e = error_of([&] { generate_plan(bundle, *gw, order_catalog(), nullptr, one); });
  EXPECT_EQ(e.code(), ErrorCode::GenerationRejected);
  EXPECT_NE(std::string(e.what()).find("forward reference"), std::string::npos) << e.what();
}

TEST(GeneratePlan, RetriesUpToThreeAttempts) {
  Json bad = two_step_plan_json();
  bad["steps"][0]["tool"] = "launch_rocket";
  auto rig = live_rig([&](const GatewayRequest&) { return bad.dump(); }, false);
  EXPECT_EQ(error_of([&] { generate_plan(order_bundle(), *rig->gateway, order_catalog()); }).code(),
            ErrorCode::GenerationRejected);
  EXPECT_EQ(rig->transport->calls, 3u);
}

TEST(GeneratePlan, RetryCarriesViolationsAndSucceeds) {
  Json bad = two_step_plan_json();
  bad["steps"][1]["arguments"]["qty"] = 1;
  std::vector<Json> seen;
  auto rig = live_rig([&](const GatewayRequest& r) {
    seen.push_back(Json::parse(r.payload));
    return seen.size() == 1 ? bad.dump() : two_step_plan_json().dump();
  }, false);
  const auto a = generate_plan(order_bundle(), *rig->gateway, order_catalog());
  EXPECT_EQ(a.steps.size(), 2u);
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_FALSE(seen[0].contains("previous_violations"));
  EXPECT_EQ(seen[1].at("attempt"), 2);
  EXPECT_EQ(seen[1].at("previous_violations"), Json::array({"unknown argument qty on cancel_order"}));
}

TEST(GeneratePlan, UnparseableOutputIsRejected) {
  auto rig = live_rig([](const GatewayRequest&) { return std::string("step one: call get_order"); }, false);
  EXPECT_EQ(error_of([&] { generate_plan(order_bundle(), *rig->gateway, order_catalog()); }).code(),
            ErrorCode::GenerationRejected);
}

TEST(StoreArtifact, CounterIdsAndRetrieval) {
  auto gw = stub_gateway();
  const Embedder embedder(*gw);
  VectorStore store;
  auto a = artifact_from(two_step_plan_json(), "q1");
  auto b = artifact_from(two_step_plan_json(), "q2");
  EXPECT_EQ(store_artifact(store, a, "cancel my order and refund it", embedder), "artifact-000001");
  EXPECT_EQ(a.artifact_id, "artifact-000001");
  EXPECT_EQ(store_artifact(store, b, "where is my parcel", embedder), "artifact-000002");
  const auto hits = store.top_k(embedder.embed("cancel my order and refund it"), 1, EntryKind::Artifact);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, "artifact-000001");
  EXPECT_NEAR(hits[0].score, 1.0, 1e-12);
  const StoreEntry* e = store.find("artifact-000001");
  EXPECT_EQ(e->metadata.at("summary"), "get_order -> cancel_order");
  EXPECT_EQ(parse_artifact(e->metadata.at("artifact")), a);
}

TEST(StoreArtifact, WriteFailureKeepsArtifactUnstored) {
  auto gw = stub_gateway();
  const Embedder embedder(*gw, 8);
  VectorStore store(16);
  auto a = artifact_from(two_step_plan_json());
  EXPECT_EQ(error_of([&] { store_artifact(store, a, "q", embedder); }).code(), ErrorCode::StoreWriteError);
  EXPECT_TRUE(a.artifact_id.empty());
  EXPECT_EQ(store.size(), 0u);
}

TEST(ArtifactFile, RoundTrip) {
  auto a = artifact_from(two_step_plan_json(), "q1");
  a.artifact_id = "artifact-000004";
  a.supporting_passage_ids = {"passage:d1#0"};
  a.subgraph_fingerprint = "abc";
  auto b = artifact_from(Json{{"steps", {{{"tool", "refund_order"}, {"arguments", {{"refund_id", {1, 2}}}}}}}}, "q2");
  const std::string text = serialize_artifacts({a, b});
  EXPECT_EQ(parse_artifact_file(text), (std::vector<PlanArtifact>{a, b}));
  EXPECT_EQ(serialize_artifacts(parse_artifact_file(text)), text);
}

TEST(RetrieveContext, DenseOnlyIsRetrievedTriplets) {
  auto gw = stub_gateway();
  const Embedder embedder(*gw);
  const auto g = order_graph();
  VectorStore store;
  index_graph(store, g, embedder);
  RetrievalConfig cfg;
  cfg.use_ppr = false;
  cfg.k_triplets = 1;
  const auto ctx = retrieve_context(query("q", "refund order refund_id pays out"), g, store, embedder, cfg);
  ASSERT_EQ(ctx.triplet_hits.size(), 1u);
  EXPECT_EQ(ctx.subgraph.edge_count(), 1u);
  EXPECT_EQ(ctx.subgraph.node_count(), 2u);
  EXPECT_TRUE(ctx.seeds.empty());
}

TEST(RetrieveContext, PprSeedsAreTripletEndpoints) {
  auto gw = stub_gateway();
  const Embedder embedder(*gw);
  const auto g = order_graph();
  VectorStore store;
  index_graph(store, g, embedder);
  RetrievalConfig cfg;
  cfg.k_triplets = 1;
  cfg.top_n = 3;
  const auto ctx = retrieve_context(query("q", "refund order refund_id pays out"), g, store, embedder, cfg);
  ASSERT_EQ(ctx.seeds.size(), 2u);
  double mass = 0.0;
  for (const auto& [id, m] : ctx.seeds) {
    mass += m;
    EXPECT_EQ(g.find(id)->kind, NodeKind::Tool);
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
  EXPECT_EQ(ctx.subgraph, g);
  EXPECT_TRUE(ctx.ppr_converged);
}

TEST(GenerateArtifacts, StubRunStoresValidArtifacts) {
  auto gw = stub_gateway();
  const Embedder embedder(*gw);
  const auto g = order_graph();
  VectorStore store;
  index_graph(store, g, embedder);
  const std::vector<QueryRecord> qs = {query("q1", "cancel the order"), query("q2", "refund the order")};
  const auto run = generate_artifacts(qs, g, store, order_catalog(), *gw, embedder, {});
  ASSERT_EQ(run.artifacts.size(), 2u);
  EXPECT_TRUE(run.failures.empty());
  for (const auto& a : run.artifacts) EXPECT_TRUE(validate_plan(a, order_catalog(), &g).empty());
  EXPECT_EQ(run.artifacts[0].artifact_id, "artifact-000001");
  EXPECT_EQ(run.artifacts[1].artifact_id, "artifact-000002");
  EXPECT_EQ(store.count(EntryKind::Artifact), 2u);
}
