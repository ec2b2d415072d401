#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/gateway.hpp"
#include "toolweave/io.hpp"
#include "toolweave/schema.hpp"
#include "toolweave/text.hpp"

namespace toolweave {

struct DependencyCandidate {
  std::string source_tool;
  std::string target_tool;
  std::string output_field;
  std::string input_argument;
  std::string rationale;
  double confidence = 0.0;

  auto key() const { return std::tie(source_tool, target_tool, output_field, input_argument); }
  friend bool operator==(const DependencyCandidate&, const DependencyCandidate&) = default;
};

enum class Verdict { Accepted, Rejected };
enum class Provenance { Llm, Heuristic, Fixture };

inline std::string_view to_string(Verdict v) { return v == Verdict::Accepted ? "accepted" : "rejected"; }

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Llm: return "llm";
    case Provenance::Heuristic: return "heuristic";
    case Provenance::Fixture: return "fixture";
  }
  return "llm";
}

inline Provenance provenance_for(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::Live: return Provenance::Llm;
    case GatewayMode::Replay: return Provenance::Fixture;
    case GatewayMode::Stub: return Provenance::Heuristic;
  }
  return Provenance::Llm;
}

struct ToolDependency {
  DependencyCandidate candidate;
  Verdict verdict = Verdict::Rejected;
  std::string judge_rationale;
  Provenance provenance = Provenance::Heuristic;

  bool accepted() const { return verdict == Verdict::Accepted; }
  friend bool operator==(const ToolDependency&, const ToolDependency&) = default;
};

enum class PairBlocking { AllPairs, FieldOverlap };

struct ExtractionConfig {
  /// Unset picks field_overlap above 200 tools and all_pairs otherwise.
  std::optional<PairBlocking> pair_blocking;
  std::size_t max_in_flight = 4;
  bool judge_enabled = true;
};

using ToolIdPair = std::pair<std::string, std::string>;

// ---------------------------------------------------------------------------
// Pair enumeration
// ---------------------------------------------------------------------------

namespace detail {

inline std::set<std::string> token_set(const std::vector<std::string>& texts) {
  std::set<std::string> out;
  for (const auto& t : texts)
    for (auto& tok : tokenize(t)) out.insert(std::move(tok));
  return out;
}

inline bool fields_overlap(const ToolSchema& source, const ToolSchema& target) {
  std::vector<std::string> payload_names;
  for (const auto& f : source.output_payload) payload_names.push_back(f.name);
  std::vector<std::string> target_texts;
  for (const auto& a : target.arguments) {
    target_texts.push_back(a.name);
    target_texts.push_back(a.description);
  }
  const auto lhs = token_set(payload_names);
  const auto rhs = token_set(target_texts);
  return std::any_of(lhs.begin(), lhs.end(), [&](const std::string& t) { return rhs.count(t) > 0; });
}

}  // namespace detail

inline PairBlocking effective_blocking(const ExtractionConfig& config, std::size_t n_tools) {
  if (config.pair_blocking) return *config.pair_blocking;
  return n_tools > 200 ? PairBlocking::FieldOverlap : PairBlocking::AllPairs;
}

/// Ordered (source, target) pairs, sorted lexicographically.
inline std::vector<ToolIdPair> enumerate_candidate_pairs(const std::vector<ToolSchema>& tools,
                                                         const ExtractionConfig& config) {
  if (tools.size() < 2) {
    fail(ErrorCode::TooFewTools, "pair enumeration needs at least 2 tools, got " + std::to_string(tools.size()));
  }
  std::vector<const ToolSchema*> sorted;
  for (const auto& t : tools) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const ToolSchema* a, const ToolSchema* b) { return a->tool_id < b->tool_id; });

  const PairBlocking blocking = effective_blocking(config, tools.size());
  std::vector<ToolIdPair> pairs;
  for (const ToolSchema* a : sorted) {
    for (const ToolSchema* b : sorted) {
      if (a->tool_id == b->tool_id) continue;
      if (blocking == PairBlocking::FieldOverlap && !detail::fields_overlap(*a, *b)) continue;
      pairs.emplace_back(a->tool_id, b->tool_id);
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Heuristic oracle (stub provider)
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<std::string> try_normalize(std::string_view s) {
  try {
    return normalize_tool_id(s);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// One candidate per (payload field, argument) whose normalized names are
/// equal and whose type tags are compatible.
inline std::vector<DependencyCandidate> heuristic_match_oracle(const ToolSchema& source,
                                                               const ToolSchema& target) {
  std::vector<DependencyCandidate> out;
  if (source.tool_id == target.tool_id) return out;
  for (const auto& field : source.output_payload) {
    const auto fname = detail::try_normalize(field.name);
    if (!fname) continue;
    for (const auto& arg : target.arguments) {
      const auto aname = detail::try_normalize(arg.name);
      if (!aname || *aname != *fname) continue;
      if (!types_compatible(field.type_tag, arg.type_tag)) continue;
      out.push_back({source.tool_id, target.tool_id, field.name, arg.name,
                     "exact name match " + field.name + " -> " + arg.name + " (" +
                         std::string(to_string(field.type_tag)) + ")",
                     1.0});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  return out;
}

/// The stub judge rule: accept exact normalized-name matches with compatible types.
inline bool heuristic_accepts(const DependencyCandidate& c, const ToolSchema& source, const ToolSchema& target) {
  const PayloadField* f = source.find_payload(c.output_field);
  const ArgumentSpec* a = target.find_argument(c.input_argument);
  if (f == nullptr || a == nullptr) return false;
  const auto fn = detail::try_normalize(f->name);
  const auto an = detail::try_normalize(a->name);
  return fn && an && *fn == *an && types_compatible(f->type_tag, a->type_tag);
}

// ---------------------------------------------------------------------------
// Gateway payloads
// ---------------------------------------------------------------------------

inline Json schema_payload(const ToolSchema& t) {
  Json j = to_json(t);
  j["tool_id"] = t.tool_id;
  return j;
}

inline Json to_json(const DependencyCandidate& c) {
  return {{"source_tool", c.source_tool},
          {"target_tool", c.target_tool},
          {"output_field", c.output_field},
          {"input_argument", c.input_argument},
          {"rationale", c.rationale},
          {"confidence", c.confidence}};
}

inline std::string propose_payload(const ToolSchema& source, const ToolSchema& target) {
  return Json{{"source", schema_payload(source)}, {"target", schema_payload(target)}}.dump();
}

inline std::string judge_payload(const DependencyCandidate& c, const ToolSchema& source, const ToolSchema& target) {
  return Json{{"candidate", to_json(c)}, {"source", schema_payload(source)}, {"target", schema_payload(target)}}
      .dump();
}

struct ProposalResult {
  std::vector<DependencyCandidate> candidates;
  std::size_t discarded = 0;  // named a field or argument missing from the schemas
  bool malformed = false;
};

/// Asks the gateway for dependencies of one ordered pair. Proposals naming
/// nonexistent fields are dropped and counted; unparseable output yields
/// zero candidates with `malformed` set.
inline ProposalResult propose_dependencies(const ToolSchema& source, const ToolSchema& target, Gateway& gateway) {
  ProposalResult result;
  std::string response;
  try {
    response = gateway.complete(Role::Propose, propose_payload(source, target));
  } catch (const Error& e) {
    throw Error(e.code(), "propose " + source.tool_id + " -> " + target.tool_id + ": " + e.message());
  }

  Json parsed;
  try {
    parsed = Json::parse(response);
  } catch (const Json::parse_error&) {
    result.malformed = true;
    return result;
  }
  const Json* list = nullptr;
  if (parsed.is_array()) {
    list = &parsed;
  } else if (parsed.is_object() && parsed.contains("dependencies") && parsed.at("dependencies").is_array()) {
    list = &parsed.at("dependencies");
  } else {
    result.malformed = true;
    return result;
  }

  for (const auto& item : *list) {
    if (!item.is_object() || !item.contains("output_field") || !item.contains("input_argument") ||
        !item.at("output_field").is_string() || !item.at("input_argument").is_string()) {
      ++result.discarded;
      continue;
    }
    DependencyCandidate c;
    c.source_tool = source.tool_id;
    c.target_tool = target.tool_id;
    c.output_field = item.at("output_field").get<std::string>();
    c.input_argument = item.at("input_argument").get<std::string>();
    c.rationale = item.value("rationale", std::string{});
    c.confidence = item.contains("confidence") && item.at("confidence").is_number()
                       ? std::clamp(item.at("confidence").get<double>(), 0.0, 1.0)
                       : 1.0;
    if (source.find_payload(c.output_field) == nullptr || target.find_argument(c.input_argument) == nullptr) {
      ++result.discarded;
      continue;
    }
    result.candidates.push_back(std::move(c));
  }
  std::sort(result.candidates.begin(), result.candidates.end(),
            [](const auto& a, const auto& b) { return a.key() < b.key(); });
  result.candidates.erase(std::unique(result.candidates.begin(), result.candidates.end(),
                                      [](const auto& a, const auto& b) { return a.key() == b.key(); }),
                          result.candidates.end());
  return result;
}

struct JudgeResult {
  ToolDependency dependency;
  bool malformed = false;
};

/// Accepts `{"verdict": "accept"|"reject", "rationale": ...}` or a bare
/// accept/reject word. Anything else is a malformed verdict and rejects.
inline JudgeResult judge_dependency(const DependencyCandidate& candidate, const ToolSchema& source,
                                    const ToolSchema& target, Gateway& gateway) {
  JudgeResult result;
  result.dependency.candidate = candidate;
  result.dependency.provenance = provenance_for(gateway.mode());

  std::string response;
  try {
    response = gateway.complete(Role::Judge, judge_payload(candidate, source, target));
  } catch (const Error& e) {
    throw Error(e.code(), "judge " + source.tool_id + " -> " + target.tool_id + ": " + e.message());
  }

  std::string verdict;
  std::string rationale;
  try {
    const Json j = Json::parse(response);
    if (j.is_object() && j.contains("verdict") && j.at("verdict").is_string()) {
      verdict = j.at("verdict").get<std::string>();
      rationale = j.value("rationale", std::string{});
    } else if (j.is_string()) {
      verdict = j.get<std::string>();
    }
  } catch (const Json::parse_error&) {
    verdict = response;
  }
  verdict = to_lower(trim(verdict));
  if (verdict.rfind("accept", 0) == 0) {
    result.dependency.verdict = Verdict::Accepted;
  } else if (verdict.rfind("reject", 0) == 0) {
    result.dependency.verdict = Verdict::Rejected;
  } else {
    result.dependency.verdict = Verdict::Rejected;
    result.malformed = true;
    rationale = "malformed verdict";
  }
  result.dependency.judge_rationale = rationale;
  return result;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct ExtractionStats {
  std::size_t pairs_examined = 0;
  std::size_t proposals = 0;
  std::size_t discarded_proposals = 0;
  std::size_t malformed_proposals = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t malformed_verdicts = 0;
  std::size_t failed_pairs = 0;
};

struct PairError {
  std::string source_tool;
  std::string target_tool;
  ErrorCode code = ErrorCode::GatewayError;
  std::string message;
};

struct ExtractionResult {
  std::vector<ToolDependency> audit;  // accepted and rejected, canonical order
  ExtractionStats stats;
  std::vector<PairError> errors;

  std::vector<ToolDependency> accepted() const {
    std::vector<ToolDependency> out;
    for (const auto& d : audit)
      if (d.accepted()) out.push_back(d);
    return out;
  }
};

/// Runs propose-then-judge over every enumerated pair with up to
/// `max_in_flight` pairs in flight. Results merge in canonical order, so the
/// output does not depend on scheduling or on the input tool order.
inline ExtractionResult run_extraction(const ToolCatalog& catalog, const ExtractionConfig& config, Gateway& gateway) {
  if (config.max_in_flight < 1) fail(ErrorCode::InvalidConfig, "max_in_flight must be >= 1");
  const auto tools = catalog.list();
  const auto pairs = enumerate_candidate_pairs(tools, config);

  struct PairOutcome {
    std::vector<ToolDependency> deps;
    ExtractionStats stats;
    std::optional<std::string> error;
    ErrorCode error_code = ErrorCode::GatewayError;
  };
  std::vector<PairOutcome> outcomes(pairs.size());

  auto process = [&](std::size_t i) {
    const ToolSchema& src = *catalog.find(pairs[i].first);
    const ToolSchema& dst = *catalog.find(pairs[i].second);
    PairOutcome& out = outcomes[i];
    try {
      ProposalResult proposal = propose_dependencies(src, dst, gateway);
      out.stats.proposals = proposal.candidates.size();
      out.stats.discarded_proposals = proposal.discarded;
      out.stats.malformed_proposals = proposal.malformed ? 1 : 0;
      for (const auto& c : proposal.candidates) {
        if (config.judge_enabled) {
          JudgeResult judged = judge_dependency(c, src, dst, gateway);
          if (judged.malformed) ++out.stats.malformed_verdicts;
          out.deps.push_back(std::move(judged.dependency));
        } else {
          out.deps.push_back({c, Verdict::Accepted, "judge disabled", provenance_for(gateway.mode())});
        }
      }
    } catch (const Error& e) {
      out.deps.clear();
      out.error = e.message();
      out.error_code = e.code();
    }
  };

  const std::size_t workers = std::min(config.max_in_flight, std::max<std::size_t>(pairs.size(), 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) process(i);
      });
    }
  }

  ExtractionResult result;
  result.stats.pairs_examined = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& o = outcomes[i];
    if (o.error) {
      ++result.stats.failed_pairs;
      result.errors.push_back({pairs[i].first, pairs[i].second, o.error_code, *o.error});
      continue;
    }
    result.stats.proposals += o.stats.proposals;
    result.stats.discarded_proposals += o.stats.discarded_proposals;
    result.stats.malformed_proposals += o.stats.malformed_proposals;
    result.stats.malformed_verdicts += o.stats.malformed_verdicts;
    for (auto& d : o.deps) {
      (d.accepted() ? result.stats.accepted : result.stats.rejected)++;
      result.audit.push_back(std::move(d));
    }
  }
  std::sort(result.audit.begin(), result.audit.end(),
            [](const auto& a, const auto& b) { return a.candidate.key() < b.candidate.key(); });
  return result;
}

// ---------------------------------------------------------------------------
// Dependency files
// ---------------------------------------------------------------------------

inline Json to_json(const ToolDependency& d) {
  Json j = to_json(d.candidate);
  j["verdict"] = std::string(to_string(d.verdict));
  j["judge_rationale"] = d.judge_rationale;
  j["provenance"] = std::string(to_string(d.provenance));
  return j;
}

inline ToolDependency parse_dependency(const Json& j, std::size_t line_no) {
  ToolDependency d;
  d.candidate.source_tool = require_field(j, "source_tool", line_no).get<std::string>();
  d.candidate.target_tool = require_field(j, "target_tool", line_no).get<std::string>();
  d.candidate.output_field = require_field(j, "output_field", line_no).get<std::string>();
  d.candidate.input_argument = require_field(j, "input_argument", line_no).get<std::string>();
  d.candidate.rationale = string_field(j, "rationale", line_no);
  d.candidate.confidence = j.value("confidence", 1.0);
  const std::string verdict = string_field(j, "verdict", line_no, "accepted");
  d.verdict = verdict == "accepted" ? Verdict::Accepted : Verdict::Rejected;
  d.judge_rationale = string_field(j, "judge_rationale", line_no);
  const std::string prov = string_field(j, "provenance", line_no, "llm");
  d.provenance = prov == "heuristic" ? Provenance::Heuristic
                 : prov == "fixture" ? Provenance::Fixture
                                     : Provenance::Llm;
  return d;
}

inline std::string serialize_dependencies(std::vector<ToolDependency> deps) {
  std::sort(deps.begin(), deps.end(), [](const auto& a, const auto& b) { return a.candidate.key() < b.candidate.key(); });
  std::string out;
  for (const auto& d : deps) {
    out += to_json(d).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ToolDependency> parse_dependency_file(const std::string& text, const std::string& source = "") {
  std::vector<ToolDependency> deps;
  for_each_jsonl(text, source, [&](const Json& j, std::size_t line_no) { deps.push_back(parse_dependency(j, line_no)); });
  return deps;
}

inline std::vector<ToolDependency> load_dependencies(const std::filesystem::path& path) {
  return parse_dependency_file(read_file(path), path.string());
}

/// Pair-level projection used for scoring.
inline std::set<ToolIdPair> dependency_pairs(const std::vector<ToolDependency>& deps, bool accepted_only = true) {
  std::set<ToolIdPair> out;
  for (const auto& d : deps)
    if (!accepted_only || d.accepted()) out.emplace(d.candidate.source_tool, d.candidate.target_tool);
  return out;
}

}  // namespace toolweave
