#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "toolweave/dependency.hpp"
#include "toolweave/evaluation.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/graph.hpp"
#include "toolweave/io.hpp"
#include "toolweave/plan.hpp"
#include "toolweave/retrieval.hpp"
#include "toolweave/schema.hpp"

// Rule-based answers for every gateway role, so the whole pipeline runs
// offline. Each rule reads only the request payload.

namespace toolweave {

namespace stub {

inline ToolSchema schema_from_payload(const Json& j) {
  ToolSchema s = parse_tool_schema(j);
  if (j.contains("tool_id") && j.at("tool_id").is_string()) s.tool_id = j.at("tool_id").get<std::string>();
  return s;
}

inline std::string propose(const Json& req) {
  const ToolSchema source = schema_from_payload(req.at("source"));
  const ToolSchema target = schema_from_payload(req.at("target"));
  Json deps = Json::array();
  for (const auto& c : heuristic_match_oracle(source, target)) deps.push_back(to_json(c));
  return Json{{"dependencies", std::move(deps)}}.dump();
}

inline std::string judge(const Json& req) {
  const ToolSchema source = schema_from_payload(req.at("source"));
  const ToolSchema target = schema_from_payload(req.at("target"));
  const Json& c = req.at("candidate");
  DependencyCandidate cand{source.tool_id, target.tool_id, c.value("output_field", ""),
                           c.value("input_argument", ""), "", 0.0};
  const bool ok = heuristic_accepts(cand, source, target);
  return Json{{"verdict", ok ? "accept" : "reject"},
              {"rationale", ok ? "exact name and compatible type" : "no exact name and type match"}}
      .dump();
}

inline std::string extract_entities(const Json& req) {
  const PassageExtraction x = heuristic_entity_extractor(req.at("text").get<std::string>());
  Json triples = Json::array();
  for (const auto& t : x.triples) triples.push_back({t.subject, t.predicate, t.object});
  return Json{{"entities", x.entities}, {"triples", std::move(triples)}}.dump();
}

inline Json step_json(std::size_t index, const ToolSchema& tool, const std::map<std::string, Json>& refs,
                      const std::vector<std::size_t>& depends_on) {
  Json args = Json::object();
  for (const auto& a : tool.arguments) {
    auto it = refs.find(a.name);
    if (it != refs.end()) {
      args[a.name] = it->second;
    } else if (a.required) {
      args[a.name] = "<" + a.name + ">";
    }
  }
  return {{"step", index}, {"tool", tool.tool_id}, {"arguments", std::move(args)}, {"depends_on", depends_on}};
}

/// Two-step plan from the triplet sharing the most tokens with the query
/// (earlier bundle position wins ties), wired through the fields the
/// heuristic oracle matches. Falls back to a single step on the first tool,
/// or an empty plan when the bundle names no tools.
inline std::string plan(const Json& req) {
  std::map<std::string, ToolSchema> tools;
  for (const auto& t : req.value("tools", Json::array())) {
    ToolSchema s = schema_from_payload(t);
    tools.emplace(s.tool_id, std::move(s));
  }
  const auto query_tokens = tokenize(req.value("query", ""));
  const std::set<std::string> query_set(query_tokens.begin(), query_tokens.end());

  const ToolSchema* best_src = nullptr;
  const ToolSchema* best_dst = nullptr;
  std::size_t best_overlap = 0;
  for (const auto& t : req.value("triplets", Json::array())) {
    auto src = tools.find(t.value("source", ""));
    auto dst = tools.find(t.value("target", ""));
    if (src == tools.end() || dst == tools.end() || src == dst) continue;
    std::set<std::string> seen;
    for (const auto& tok : tokenize(src->first + " " + dst->first))
      if (query_set.count(tok)) seen.insert(tok);
    if (best_src == nullptr || seen.size() > best_overlap) {
      best_src = &src->second;
      best_dst = &dst->second;
      best_overlap = seen.size();
    }
  }

  Json steps = Json::array();
  if (best_src != nullptr) {
    std::map<std::string, Json> refs;
    for (const auto& c : heuristic_match_oracle(*best_src, *best_dst))
      refs.emplace(c.input_argument, Json{{"from_step", 1}, {"field", c.output_field}});
    steps.push_back(step_json(1, *best_src, {}, {}));
    steps.push_back(step_json(2, *best_dst, refs, {1}));
  } else if (!tools.empty()) {
    steps.push_back(step_json(1, tools.begin()->second, {}, {}));
  }
  return Json{{"steps", std::move(steps)}}.dump();
}

inline std::string plan_judge(const Json& req) {
  const PlanArtifact artifact = parse_artifact(req.at("artifact"));
  const GoldPlan gold = parse_gold_plan(req.at("gold"), 0);
  return std::to_string(stub_plan_score(artifact, gold));
}

}  // namespace stub

/// Stub responder covering all roles. Plugs into Gateway::set_stub.
inline StubResponder make_stub_responder() {
  return [](const GatewayRequest& request) -> std::string {
    if (request.role == Role::Embed) return stub_embed_response(request.payload);
    const Json req = Json::parse(request.payload);
    switch (request.role) {
      case Role::Propose: return stub::propose(req);
      case Role::Judge: return stub::judge(req);
      case Role::Generate:
        if (req.value("task", "") == "extract_entities") return stub::extract_entities(req);
        return stub::plan(req);
      case Role::PlanJudge: return stub::plan_judge(req);
      case Role::Embed: break;
    }
    fail(ErrorCode::GatewayError, "stub has no rule for role " + std::string(to_string(request.role)));
  };
}

/// Stub-mode gateway with the full rule set installed.
inline std::unique_ptr<Gateway> make_stub_gateway() {
  GatewayOptions opts;
  opts.mode = GatewayMode::Stub;
  auto g = std::make_unique<Gateway>(opts);
  g->set_stub(make_stub_responder());
  return g;
}

}  // namespace toolweave
