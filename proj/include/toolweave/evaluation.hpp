#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/io.hpp"
#include "toolweave/plan.hpp"
#include "toolweave/schema.hpp"

namespace toolweave {

// ---------------------------------------------------------------------------
// Dependency checking
// ---------------------------------------------------------------------------

struct DependencyEvalReport {
  std::size_t predicted_count = 0;
  std::size_t gold_count = 0;
  std::size_t true_positive_count = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Report from raw counts: precision = tp/predicted, recall = tp/gold, 0 on
/// an empty denominator.
inline DependencyEvalReport dependency_report(std::size_t predicted, std::size_t gold, std::size_t tp) {
  if (tp > std::min(predicted, gold)) {
    fail(ErrorCode::InvalidConfig, "true positives exceed predicted or gold count");
  }
  DependencyEvalReport r;
  r.predicted_count = predicted;
  r.gold_count = gold;
  r.true_positive_count = tp;
  r.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
  r.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
  return r;
}

/// Pair-level matching on (source tool, target tool).
inline DependencyEvalReport score_dependencies(const std::set<ToolPair>& predicted, const std::set<ToolPair>& gold) {
  std::size_t tp = 0;
  for (const auto& p : predicted) tp += gold.count(p);
  return dependency_report(predicted.size(), gold.size(), tp);
}

/// Percentage rounded half away from zero to one decimal.
inline double percent_1dp(double rate) { return std::round(rate * 1000.0) / 10.0; }

// ---------------------------------------------------------------------------
// Plan checking
// ---------------------------------------------------------------------------

/// (producer tool, consumer tool) pairs wired by the artifact's step dependencies.
inline std::set<ToolPair> artifact_wiring(const PlanArtifact& artifact) {
  std::set<ToolPair> out;
  for (const auto& step : artifact.steps) {
    for (std::size_t dep : effective_dependencies(step)) {
      if (dep == 0 || dep > artifact.steps.size()) continue;
      out.emplace(artifact.steps[dep - 1].tool_id, step.tool_id);
    }
  }
  return out;
}

/// Tool multisets agree and every gold dependency appears in the wiring.
inline bool binary_match(const PlanArtifact& artifact, const GoldPlan& gold) {
  std::multiset<std::string> produced;
  for (const auto& s : artifact.steps) produced.insert(s.tool_id);
  std::multiset<std::string> expected;
  for (const auto& s : gold.steps) expected.insert(s.tool_id);
  if (produced != expected) return false;
  const auto wiring = artifact_wiring(artifact);
  return std::all_of(gold.gold_dependencies.begin(), gold.gold_dependencies.end(),
                     [&](const ToolPair& p) { return wiring.count(p) > 0; });
}

/// Offline rubric: 2 on binary match, 1 when at least half of the distinct
/// gold tools appear, else 0.
inline int stub_plan_score(const PlanArtifact& artifact, const GoldPlan& gold) {
  if (binary_match(artifact, gold)) return 2;
  std::set<std::string> gold_tools;
  for (const auto& s : gold.steps) gold_tools.insert(s.tool_id);
  if (gold_tools.empty()) return 0;
  std::set<std::string> present;
  for (const auto& s : artifact.steps)
    if (gold_tools.count(s.tool_id)) present.insert(s.tool_id);
  return 2 * present.size() >= gold_tools.size() ? 1 : 0;
}

inline std::string plan_judge_payload(const PlanArtifact& artifact, const GoldPlan& gold) {
  Json a = to_json(artifact);
  // Only plan content is judged, so recorded and replayed runs share fingerprints.
  a.erase("artifact_id");
  a.erase("provenance");
  return Json{{"artifact", std::move(a)}, {"gold", to_json(gold)}}.dump();
}

/// Coverage score in {0, 1, 2}. Accepts a bare integer, a JSON number, or
/// `{"score": n}`; anything else raises JudgeProtocolError.
inline int judge_plan(const PlanArtifact& artifact, const GoldPlan& gold, Gateway& gateway) {
  const std::string response = gateway.complete(Role::PlanJudge, plan_judge_payload(artifact, gold));
  Json j;
  try {
    j = Json::parse(response);
  } catch (const Json::parse_error&) {
    fail(ErrorCode::JudgeProtocolError, "plan judge returned non-numeric output '" + response + "'");
  }
  if (j.is_object() && j.contains("score")) j = j.at("score");
  if (!j.is_number_integer() && !(j.is_number_float() && std::floor(j.get<double>()) == j.get<double>())) {
    fail(ErrorCode::JudgeProtocolError, "plan judge returned '" + response + "'");
  }
  const double score = j.get<double>();
  if (score < 0 || score > 2) {
    fail(ErrorCode::JudgeProtocolError, "plan judge score " + response + " is outside {0, 1, 2}");
  }
  return static_cast<int>(score);
}

struct QueryEval {
  std::string query_id;
  bool has_artifact = false;
  bool binary_match = false;
  int judge_score = 0;
  friend bool operator==(const QueryEval&, const QueryEval&) = default;
};

struct PlanEvalReport {
  std::size_t n_queries = 0;
  double binary_match_accuracy = 0.0;
  double mean_judge_score = 0.0;
  std::vector<QueryEval> per_query;
};

/// Scores every query that carries a gold plan. Queries without an artifact
/// count as misses with score 0.
inline PlanEvalReport evaluate_plans(const std::vector<PlanArtifact>& artifacts,
                                     const std::vector<QueryRecord>& queries, Gateway& judge) {
  std::map<std::string, const PlanArtifact*> by_query;
  for (const auto& a : artifacts) by_query[a.query_id] = &a;

  PlanEvalReport report;
  std::size_t matches = 0;
  long total_score = 0;
  for (const auto& q : queries) {
    if (!q.gold_plan) continue;
    QueryEval e;
    e.query_id = q.query_id;
    auto it = by_query.find(q.query_id);
    if (it != by_query.end()) {
      e.has_artifact = true;
      e.binary_match = binary_match(*it->second, *q.gold_plan);
      e.judge_score = judge_plan(*it->second, *q.gold_plan, judge);
    }
    matches += e.binary_match ? 1 : 0;
    total_score += e.judge_score;
    report.per_query.push_back(std::move(e));
  }
  report.n_queries = report.per_query.size();
  if (report.n_queries > 0) {
    report.binary_match_accuracy = static_cast<double>(matches) / static_cast<double>(report.n_queries);
    report.mean_judge_score = static_cast<double>(total_score) / static_cast<double>(report.n_queries);
  }
  return report;
}

inline std::string serialize_report(const PlanEvalReport& r, const std::string& label = "") {
  Json summary = {{"record", "summary"},
                  {"n_queries", r.n_queries},
                  {"binary_match_accuracy", r.binary_match_accuracy},
                  {"mean_judge_score", r.mean_judge_score}};
  if (!label.empty()) summary["label"] = label;
  std::string out = summary.dump() + "\n";
  for (const auto& q : r.per_query) {
    Json j = {{"record", "query"},
              {"query_id", q.query_id},
              {"has_artifact", q.has_artifact},
              {"binary_match", q.binary_match},
              {"judge_score", q.judge_score}};
    if (!label.empty()) j["label"] = label;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string serialize_dependency_report(const DependencyEvalReport& r) {
  return Json{{"record", "dependency_summary"},
              {"predicted", r.predicted_count},
              {"gold", r.gold_count},
              {"true_positives", r.true_positive_count},
              {"precision", r.precision},
              {"recall", r.recall}}
             .dump() +
         "\n";
}

// ---------------------------------------------------------------------------
// PPR ablation
// ---------------------------------------------------------------------------

struct AblationResult {
  PlanEvalReport with_ppr;
  PlanEvalReport without_ppr;
  double accuracy_delta = 0.0;  // with - without
  double judge_delta = 0.0;
  std::vector<std::string> won_by_ppr;   // matched only with PPR
  std::vector<std::string> lost_by_ppr;  // matched only without PPR
};

inline AblationResult compare_arms(PlanEvalReport with_ppr, PlanEvalReport without_ppr) {
  AblationResult r;
  r.accuracy_delta = with_ppr.binary_match_accuracy - without_ppr.binary_match_accuracy;
  r.judge_delta = with_ppr.mean_judge_score - without_ppr.mean_judge_score;
  std::map<std::string, bool> without_match;
  for (const auto& q : without_ppr.per_query) without_match[q.query_id] = q.binary_match;
  for (const auto& q : with_ppr.per_query) {
    const bool other = without_match.count(q.query_id) ? without_match[q.query_id] : false;
    if (q.binary_match && !other) r.won_by_ppr.push_back(q.query_id);
    if (!q.binary_match && other) r.lost_by_ppr.push_back(q.query_id);
  }
  r.with_ppr = std::move(with_ppr);
  r.without_ppr = std::move(without_ppr);
  return r;
}

inline std::string serialize_ablation(const AblationResult& r) {
  std::string out = Json{{"record", "ablation"},
                         {"with_ppr_accuracy", r.with_ppr.binary_match_accuracy},
                         {"without_ppr_accuracy", r.without_ppr.binary_match_accuracy},
                         {"accuracy_delta", r.accuracy_delta},
                         {"with_ppr_judge", r.with_ppr.mean_judge_score},
                         {"without_ppr_judge", r.without_ppr.mean_judge_score},
                         {"judge_delta", r.judge_delta},
                         {"won_by_ppr", r.won_by_ppr},
                         {"lost_by_ppr", r.lost_by_ppr}}
                        .dump() +
                    "\n";
  out += serialize_report(r.with_ppr, "with_ppr");
  out += serialize_report(r.without_ppr, "without_ppr");
  return out;
}

/// Runs generation and evaluation twice over the same inputs, once per
/// retrieval config. Each arm stores artifacts into its own copy of `store`.
inline AblationResult run_ablation(const std::vector<QueryRecord>& queries, const FusedGraph& graph,
                                   const VectorStore& store, const ToolCatalog& catalog, Gateway& gateway,
                                   const Embedder& embedder, const GenerationConfig& with_ppr,
                                   const GenerationConfig& without_ppr) {
  auto arm = [&](const GenerationConfig& cfg) {
    VectorStore local = store;
    const GenerationRun run = generate_artifacts(queries, graph, local, catalog, gateway, embedder, cfg);
    return evaluate_plans(run.artifacts, queries, gateway);
  };
  PlanEvalReport a = arm(with_ppr);
  PlanEvalReport b = arm(without_ppr);
  return compare_arms(std::move(a), std::move(b));
}

}  // namespace toolweave
