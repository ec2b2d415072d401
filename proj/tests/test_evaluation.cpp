#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace tw_test;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::GatewayError;
}

// Rounds tp/den to one-decimal percent using integers only: round(1000*tp/den)/10.
long permille(std::size_t tp, std::size_t den) { return static_cast<long>((2000 * tp + den) / (2 * den)); }

QueryRecord gold_query(const std::string& id, const PlanArtifact& gold_source) {
  QueryRecord q;
  q.query_id = id;
  q.text = "query " + id;
  q.gold_plan = gold_from(gold_source);
  return q;
}

PlanEvalReport report_with(std::size_t n, std::size_t matches, const std::string& prefix = "q") {
  PlanEvalReport r;
  r.n_queries = n;
  for (std::size_t i = 0; i < n; ++i) {
    QueryEval e;
    e.query_id = prefix + std::to_string(i);
    e.has_artifact = true;
    e.binary_match = i < matches;
    e.judge_score = e.binary_match ? 2 : 0;
    r.per_query.push_back(e);
  }
  r.binary_match_accuracy = static_cast<double>(matches) / static_cast<double>(n);
  r.mean_judge_score = 2.0 * r.binary_match_accuracy;
  return r;
}

}  // namespace

TEST(DependencyReport, TableOneRow) {
  const auto r = dependency_report(1332, 1500, 1208);
  EXPECT_DOUBLE_EQ(percent_1dp(r.precision), 90.7);
  EXPECT_DOUBLE_EQ(percent_1dp(r.recall), 80.5);
}

TEST(DependencyReport, TableOneTruePositivesAreUnique) {
  std::vector<std::size_t> consistent;
  for (std::size_t tp = 0; tp <= 1332; ++tp)
    if (permille(tp, 1332) == 907 && permille(tp, 1500) == 805) consistent.push_back(tp);
  EXPECT_EQ(consistent, std::vector<std::size_t>{1208});
}

TEST(DependencyReport, PerfectAndEmpty) {
  const std::set<ToolPair> gold = {{"a", "b"}, {"b", "c"}, {"c", "d"}};
  const auto perfect = score_dependencies(gold, gold);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.recall, 1.0);
  const auto none = score_dependencies({}, gold);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.predicted_count, 0u);
  EXPECT_EQ(code_of([] { dependency_report(3, 5, 4); }), ErrorCode::InvalidConfig);
}

TEST(DependencyReport, MatchesCountingOracle) {
  std::mt19937_64 rng(12);
  for (int round = 0; round < 100; ++round) {
    std::set<ToolPair> predicted, gold;
    for (int i = 0; i < 30; ++i) {
      const ToolPair p{"t" + std::to_string(uniform_below(rng, 6)), "t" + std::to_string(uniform_below(rng, 6))};
      (uniform_below(rng, 2) ? predicted : gold).insert(p);
    }
    std::size_t tp = 0;
    for (const auto& p : predicted) tp += std::find(gold.begin(), gold.end(), p) != gold.end() ? 1 : 0;
    const auto r = score_dependencies(predicted, gold);
    EXPECT_EQ(r.true_positive_count, tp);
    EXPECT_GE(r.precision, 0.0);
    EXPECT_LE(r.precision, 1.0);
    EXPECT_LE(r.recall, 1.0);
  }
}

TEST(BinaryMatch, Cases) {
  const auto a = artifact_from(two_step_plan_json());
  const auto gold = gold_from(a);
  EXPECT_TRUE(binary_match(a, gold));

  Json swapped = two_step_plan_json();
  swapped["steps"][0]["tool"] = "refund_order";
  EXPECT_FALSE(binary_match(artifact_from(swapped), gold));

  Json unwired = two_step_plan_json();
  unwired["steps"][1]["arguments"]["order_id"] = "o-1";
  unwired["steps"][1]["depends_on"] = Json::array();
  EXPECT_FALSE(binary_match(artifact_from(unwired), gold));

  Json extra = two_step_plan_json();
  extra["steps"].push_back({{"step", 3}, {"tool", "refund_order"}, {"arguments", Json::object()}});
  EXPECT_FALSE(binary_match(artifact_from(extra), gold));
}

TEST(BinaryMatch, LiteralValuesDoNotMatter) {
  Json other = two_step_plan_json();
  other["steps"][0]["arguments"]["customer_id"] = "c-999";
  EXPECT_TRUE(binary_match(artifact_from(other), gold_from(artifact_from(two_step_plan_json()))));
}

TEST(StubJudge, RubricScores) {
  auto gw = stub_gateway();
  const auto a = artifact_from(two_step_plan_json());
  const auto gold = gold_from(a);
  EXPECT_EQ(judge_plan(a, gold, *gw), 2);

  Json half = two_step_plan_json();
  half["steps"][1]["tool"] = "refund_order";
  half["steps"][1]["arguments"] = Json::object();
  EXPECT_EQ(judge_plan(artifact_from(half), gold, *gw), 1);

  Json none = {{"steps", {{{"tool", "refund_order"}, {"arguments", Json::object()}}}}};
  EXPECT_EQ(judge_plan(artifact_from(none), gold, *gw), 0);
}

TEST(StubJudge, AgreesWithBinaryMatchOnRandomPlans) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> tools = {"get_order", "cancel_order", "refund_order"};
  auto gw = stub_gateway();
  const auto gold = gold_from(artifact_from(two_step_plan_json()));
  for (int i = 0; i < 200; ++i) {
    Json steps = Json::array();
    const std::size_t n = 1 + uniform_below(rng, 3);
    for (std::size_t s = 0; s < n; ++s) {
      Json step = {{"step", s + 1}, {"tool", tools[uniform_below(rng, 3)]}, {"arguments", Json::object()}};
      if (s > 0 && uniform_below(rng, 2)) step["depends_on"] = {uniform_below(rng, s) + 1};
      steps.push_back(step);
    }
    const auto a = artifact_from(Json{{"steps", steps}});
    const int score = judge_plan(a, gold, *gw);
    EXPECT_GE(score, 0);
    EXPECT_LE(score, 2);
    if (binary_match(a, gold)) {
      EXPECT_EQ(score, 2);
    }
    EXPECT_EQ(score, stub_plan_score(a, gold));
  }
}

TEST(PlanJudge, ProtocolErrors) {
  const auto a = artifact_from(two_step_plan_json());
  const auto gold = gold_from(a);
  for (const char* bad : {"3", "-1", "two", "1.5", R"({"score":7})", "[2]"}) {
    FixtureFile f;
    put_fixture(f, Role::PlanJudge, plan_judge_payload(a, gold), bad);
    auto gw = replay_gateway(f);
    EXPECT_EQ(code_of([&] { judge_plan(a, gold, *gw); }), ErrorCode::JudgeProtocolError) << bad;
  }
  for (const auto& [ok, expected] : std::vector<std::pair<std::string, int>>{{"2", 2}, {"0", 0}, {R"({"score":1})", 1}}) {
    FixtureFile f;
    put_fixture(f, Role::PlanJudge, plan_judge_payload(a, gold), ok);
    auto gw = replay_gateway(f);
    EXPECT_EQ(judge_plan(a, gold, *gw), expected) << ok;
  }
}

TEST(EvaluatePlans, MissingArtifactIsMiss) {
  auto gw = stub_gateway();
  const auto a = artifact_from(two_step_plan_json(), "q1");
  const std::vector<QueryRecord> qs = {gold_query("q1", a), gold_query("q2", a)};
  const auto r = evaluate_plans({a}, qs, *gw);
  EXPECT_EQ(r.n_queries, 2u);
  EXPECT_DOUBLE_EQ(r.binary_match_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_judge_score, 1.0);
  EXPECT_FALSE(r.per_query[1].has_artifact);
}

TEST(EvaluatePlans, PermutationInvariant) {
  std::mt19937_64 rng(21);
  auto gw = stub_gateway();
  const auto good = artifact_from(two_step_plan_json());
  std::vector<QueryRecord> qs;
  std::vector<PlanArtifact> arts;
  for (int i = 0; i < 12; ++i) {
    const std::string id = "q" + std::to_string(i);
    qs.push_back(gold_query(id, good));
    Json plan = two_step_plan_json();
    if (i % 3 == 0) plan["steps"][1]["tool"] = "refund_order";
    arts.push_back(artifact_from(plan, id));
  }
  const auto base = evaluate_plans(arts, qs, *gw);
  for (int round = 0; round < 10; ++round) {
    std::shuffle(arts.begin(), arts.end(), rng);
    std::shuffle(qs.begin(), qs.end(), rng);
    const auto r = evaluate_plans(arts, qs, *gw);
    EXPECT_DOUBLE_EQ(r.binary_match_accuracy, base.binary_match_accuracy);
    EXPECT_DOUBLE_EQ(r.mean_judge_score, base.mean_judge_score);
  }
  EXPECT_DOUBLE_EQ(base.binary_match_accuracy, 8.0 / 12.0);
}

TEST(CompareArms, NineVersusSeven) {
  const auto r = compare_arms(report_with(10, 9), report_with(10, 7));
  EXPECT_NEAR(r.accuracy_delta, 0.20, 1e-12);
  EXPECT_EQ(r.won_by_ppr, (std::vector<std::string>{"q7", "q8"}));
  EXPECT_TRUE(r.lost_by_ppr.empty());
}

TEST(CompareArms, IdenticalArms) {
  const auto r = compare_arms(report_with(10, 6), report_with(10, 6));
  EXPECT_EQ(r.accuracy_delta, 0.0);
  EXPECT_EQ(r.judge_delta, 0.0);
  EXPECT_TRUE(r.won_by_ppr.empty());
}

TEST(Reports, SerializeIsStable) {
  const auto r = compare_arms(report_with(3, 2), report_with(3, 1));
  const std::string text = serialize_ablation(r);
  EXPECT_EQ(text, serialize_ablation(r));
  std::size_t lines = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    EXPECT_TRUE(Json::parse(line).is_object());
    ++lines;
  }
  EXPECT_EQ(lines, 1u + 2u * (1u + 3u));
  const Json dep = Json::parse(serialize_dependency_report(dependency_report(1332, 1500, 1208)));
  EXPECT_EQ(dep.at("true_positives"), 1208);
}
