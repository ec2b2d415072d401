#include <gtest/gtest.h>

#include "support.hpp"

using namespace tw_test;

namespace {

const std::filesystem::path kData = TOOLWEAVE_DATA_DIR;

PipelineConfig synthetic_config(const std::filesystem::path& out) {
  PipelineConfig cfg;
  cfg.tools = kData / "synthetic50" / "tools.jsonl";
  cfg.docs = kData / "synthetic50" / "docs.jsonl";
  cfg.queries = kData / "synthetic50" / "queries.jsonl";
  cfg.gold_dependencies = kData / "synthetic50" / "gold_dependencies.jsonl";
  cfg.out_dir = out;
  return cfg;
}

std::string config_error(const PipelineConfig& cfg) {
  try {
    check_pipeline_paths(cfg);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "expected ConfigError";
  return "";
}

}  // namespace

TEST(Pipeline, BundledDataMatchesGenerator) {
  TempDir dir("regen");
  const auto files = write_corpus(generate_corpus(CorpusSpec{}), dir.path());
  EXPECT_EQ(read_file(files.tools), read_file(kData / "synthetic50" / "tools.jsonl"));
  EXPECT_EQ(read_file(files.docs), read_file(kData / "synthetic50" / "docs.jsonl"));
  EXPECT_EQ(read_file(files.queries), read_file(kData / "synthetic50" / "queries.jsonl"));
  EXPECT_EQ(read_file(files.gold_dependencies), read_file(kData / "synthetic50" / "gold_dependencies.jsonl"));
}

TEST(Pipeline, StubRunIsByteIdentical) {
  TempDir a("run_a");
  TempDir b("run_b");
  auto gw_a = stub_gateway();
  auto gw_b = stub_gateway();
  const auto sa = run_pipeline(synthetic_config(a.path()), *gw_a);
  const auto sb = run_pipeline(synthetic_config(b.path()), *gw_b);
  using O = PipelineOutputs;
  for (const char* name : {O::kTools, O::kDeps, O::kAudit, O::kToolGraph, O::kDocGraph, O::kGraph, O::kStore,
                           O::kArtifacts, O::kFailures, O::kReport}) {
    EXPECT_EQ(read_file(a.path() / name), read_file(b.path() / name)) << name;
  }
  EXPECT_EQ(sa.artifacts, sb.artifacts);
  ASSERT_TRUE(sa.dependencies.has_value());
  EXPECT_EQ(sa.dependencies->precision, 1.0);
  EXPECT_EQ(sa.dependencies->recall, 1.0);
  EXPECT_EQ(sa.queries, 18u);
}

TEST(Pipeline, PersistedFilesLoadBack) {
  TempDir dir("persist");
  auto gw = stub_gateway();
  run_pipeline(synthetic_config(dir.path()), *gw);
  using O = PipelineOutputs;
  const auto graph = load_graph(dir.path() / O::kGraph);
  EXPECT_EQ(serialize_graph(graph), read_file(dir.path() / O::kGraph));
  const auto store = VectorStore::load(dir.path() / O::kStore);
  EXPECT_EQ(store.serialize(), read_file(dir.path() / O::kStore));
  const auto catalog = load_tool_corpus(dir.path() / O::kTools);
  for (const auto& a : load_artifacts(dir.path() / O::kArtifacts)) {
    EXPECT_TRUE(validate_plan(a, catalog, &graph).empty()) << a.artifact_id;
    EXPECT_NE(store.find(a.artifact_id), nullptr);
  }
}

TEST(Pipeline, MissingFieldsNameTheConfigKey) {
  TempDir dir("cfg");
  auto cfg = synthetic_config(dir.path());
  cfg.tools.clear();
  EXPECT_NE(config_error(cfg).find("paths.tools"), std::string::npos);
  cfg = synthetic_config(dir.path());
  cfg.queries = dir.path() / "nope.jsonl";
  EXPECT_NE(config_error(cfg).find("paths.queries"), std::string::npos);
  cfg = synthetic_config(dir.path());
  cfg.out_dir.clear();
  EXPECT_NE(config_error(cfg).find("paths.out"), std::string::npos);
  cfg = synthetic_config(dir.path());
  cfg.generation.retrieval.ppr.damping = 1.0;
  EXPECT_NE(config_error(cfg).find("ppr.damping"), std::string::npos);
}

TEST(Pipeline, ReplayWithoutFixturesFailsAsGatewayError) {
  TempDir dir("replay");
  auto gw = replay_gateway({});
  try {
    run_pipeline(synthetic_config(dir.path()), *gw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFixture);
    EXPECT_TRUE(is_gateway_or_io(e.code()));
  }
}
