#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/io.hpp"
#include "toolweave/text.hpp"

namespace toolweave {

// ---------------------------------------------------------------------------
// Tool schemas
// ---------------------------------------------------------------------------

enum class TypeTag { String, Integer, Number, Boolean, List, Object, Unknown };

inline std::string_view to_string(TypeTag tag) {
  switch (tag) {
    case TypeTag::String: return "string";
    case TypeTag::Integer: return "integer";
    case TypeTag::Number: return "number";
    case TypeTag::Boolean: return "boolean";
    case TypeTag::List: return "list";
    case TypeTag::Object: return "object";
    case TypeTag::Unknown: return "unknown";
  }
  return "unknown";
}

/// Maps a source type annotation onto the fixed 7-value vocabulary. Richer
/// scalar types (date, email, uuid, ...) collapse to string.
inline TypeTag parse_type_tag(std::string_view raw) {
  const std::string t = to_lower(trim(raw));
  if (t.empty() || t == "unknown" || t == "any") return TypeTag::Unknown;
  if (t == "string" || t == "str" || t == "text") return TypeTag::String;
  if (t == "integer" || t == "int" || t == "long" || t == "int32" || t == "int64")
    return TypeTag::Integer;
  if (t == "number" || t == "float" || t == "double" || t == "decimal") return TypeTag::Number;
  if (t == "boolean" || t == "bool") return TypeTag::Boolean;
  if (t == "list" || t == "array") return TypeTag::List;
  if (t == "object" || t == "dict" || t == "map") return TypeTag::Object;
  return TypeTag::String;
}

/// Compatible when equal or when either side is untyped.
inline bool types_compatible(TypeTag a, TypeTag b) {
  return a == b || a == TypeTag::Unknown || b == TypeTag::Unknown;
}

struct ArgumentSpec {
  std::string name;
  TypeTag type_tag = TypeTag::Unknown;
  bool required = false;
  std::string description;

  friend bool operator==(const ArgumentSpec&, const ArgumentSpec&) = default;
};

struct PayloadField {
  std::string name;
  TypeTag type_tag = TypeTag::Unknown;
  std::string description;

  friend bool operator==(const PayloadField&, const PayloadField&) = default;
};

struct ToolSchema {
  std::string tool_id;
  std::string name;
  std::string description;
  std::vector<ArgumentSpec> arguments;
  std::vector<PayloadField> output_payload;

  const ArgumentSpec* find_argument(std::string_view arg) const {
    for (const auto& a : arguments)
      if (a.name == arg) return &a;
    return nullptr;
  }
  const PayloadField* find_payload(std::string_view field) const {
    for (const auto& f : output_payload)
      if (f.name == field) return &f;
    return nullptr;
  }

  friend bool operator==(const ToolSchema&, const ToolSchema&) = default;
};

namespace detail {

inline TypeTag type_field(const Json& rec) {
  if (!rec.contains("type") || rec.at("type").is_null()) return TypeTag::Unknown;
  const Json& t = rec.at("type");
  if (!t.is_string()) return TypeTag::Unknown;
  return parse_type_tag(t.get<std::string>());
}

inline const Json* array_field(const Json& rec, const char* key, std::size_t line_no) {
  if (!rec.contains(key) || rec.at(key).is_null()) return nullptr;
  const Json& v = rec.at(key);
  if (!v.is_array()) {
    fail(ErrorCode::MalformedRecord,
         "line " + std::to_string(line_no) + ": field '" + key + "' is not an array");
  }
  return &v;
}

// ToolBench API records carry `api_name`, `required_parameters`,
// `optional_parameters` and an optional `template_response` object.
inline ToolSchema parse_toolbench_api(const Json& rec, std::size_t line_no) {
  ToolSchema schema;
  std::string tool = string_field(rec, "tool_name", line_no);
  std::string api = string_field(rec, "api_name", line_no);
  schema.name = tool.empty() ? api : tool + " " + api;
  schema.description = string_field(rec, "api_description", line_no);
  auto add_params = [&](const char* key, bool required) {
    if (const Json* arr = array_field(rec, key, line_no)) {
      for (const auto& p : *arr) {
        ArgumentSpec a;
        a.name = string_field(p, "name", line_no);
        a.type_tag = type_field(p);
        a.required = required;
        a.description = string_field(p, "description", line_no);
        schema.arguments.push_back(std::move(a));
      }
    }
  };
  add_params("required_parameters", true);
  add_params("optional_parameters", false);
  if (rec.contains("template_response") && rec.at("template_response").is_object()) {
    for (const auto& [key, value] : rec.at("template_response").items()) {
      PayloadField f;
      f.name = key;
      f.type_tag = value.is_string() ? parse_type_tag(value.get<std::string>()) : TypeTag::Unknown;
      schema.output_payload.push_back(std::move(f));
    }
  }
  return schema;
}

inline void validate_schema(ToolSchema& schema, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no);
  if (trim(schema.name).empty()) fail(ErrorCode::EmptyToolName, where + ": tool name is empty");
  try {
    schema.tool_id = normalize_tool_id(schema.name);
  } catch (const Error&) {
    fail(ErrorCode::EmptyToolName, where + ": tool name '" + schema.name + "' has no id characters");
  }
  std::set<std::string> seen;
  for (const auto& a : schema.arguments) {
    if (a.name.empty()) fail(ErrorCode::MalformedRecord, where + ": argument with empty name");
    if (!seen.insert(a.name).second) {
      fail(ErrorCode::DuplicateArgumentName,
           where + ": argument '" + a.name + "' repeated on " + schema.tool_id);
    }
  }
  seen.clear();
  for (const auto& f : schema.output_payload) {
    if (f.name.empty()) fail(ErrorCode::MalformedRecord, where + ": payload field with empty name");
    if (!seen.insert(f.name).second) {
      fail(ErrorCode::DuplicatePayloadField,
           where + ": payload field '" + f.name + "' repeated on " + schema.tool_id);
    }
  }
}

}  // namespace detail

/// Parses one tool record (native or ToolBench layout).
inline ToolSchema parse_tool_schema(const Json& rec, std::size_t line_no = 0) {
  if (!rec.is_object()) {
    fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": record is not an object");
  }
  ToolSchema schema;
  if (rec.contains("api_name")) {
    schema = detail::parse_toolbench_api(rec, line_no);
  } else {
    if (!rec.contains("name")) {
      fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": missing field 'name'");
    }
    schema.name = string_field(rec, "name", line_no);
    schema.description = string_field(rec, "description", line_no);
    if (const Json* args = detail::array_field(rec, "arguments", line_no)) {
      for (const auto& a : *args) {
        if (!a.is_object()) {
          fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": argument is not an object");
        }
        ArgumentSpec spec;
        spec.name = string_field(a, "name", line_no);
        spec.type_tag = detail::type_field(a);
        spec.required = a.value("required", false);
        spec.description = string_field(a, "description", line_no);
        schema.arguments.push_back(std::move(spec));
      }
    }
    if (const Json* payload = detail::array_field(rec, "output_payload", line_no)) {
      for (const auto& f : *payload) {
        if (!f.is_object()) {
          fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": payload field is not an object");
        }
        PayloadField field;
        field.name = string_field(f, "name", line_no);
        field.type_tag = detail::type_field(f);
        field.description = string_field(f, "description", line_no);
        schema.output_payload.push_back(std::move(field));
      }
    }
  }
  detail::validate_schema(schema, line_no);
  return schema;
}

inline ToolSchema parse_tool_schema(const std::string& line) {
  return parse_tool_schema(parse_json_line(line, 1), 1);
}

inline ToolSchema parse_tool_schema(const char* line) { return parse_tool_schema(std::string(line)); }

inline Json to_json(const ToolSchema& schema) {
  Json args = Json::array();
  for (const auto& a : schema.arguments) {
    args.push_back({{"name", a.name},
                    {"type", std::string(to_string(a.type_tag))},
                    {"required", a.required},
                    {"description", a.description}});
  }
  Json payload = Json::array();
  for (const auto& f : schema.output_payload) {
    payload.push_back({{"name", f.name},
                       {"type", std::string(to_string(f.type_tag))},
                       {"description", f.description}});
  }
  return {{"name", schema.name},
          {"description", schema.description},
          {"arguments", std::move(args)},
          {"output_payload", std::move(payload)}};
}

/// Tool schemas keyed by canonical tool id.
class ToolCatalog {
 public:
  ToolCatalog() = default;

  explicit ToolCatalog(std::vector<ToolSchema> tools) {
    for (auto& t : tools) add(std::move(t));
  }

  void add(ToolSchema schema) {
    const std::string id = schema.tool_id;
    if (!tools_.emplace(id, std::move(schema)).second) {
      fail(ErrorCode::DuplicateToolId, "tool id '" + id + "' appears more than once");
    }
  }

  const ToolSchema* find(std::string_view tool_id) const {
    auto it = tools_.find(std::string(tool_id));
    return it == tools_.end() ? nullptr : &it->second;
  }
  bool contains(std::string_view tool_id) const { return find(tool_id) != nullptr; }
  std::size_t size() const { return tools_.size(); }
  bool empty() const { return tools_.empty(); }

  /// Schemas in canonical (tool_id) order.
  std::vector<ToolSchema> list() const {
    std::vector<ToolSchema> out;
    out.reserve(tools_.size());
    for (const auto& [_, t] : tools_) out.push_back(t);
    return out;
  }

  auto begin() const { return tools_.begin(); }
  auto end() const { return tools_.end(); }

 private:
  std::map<std::string, ToolSchema> tools_;
};

inline ToolCatalog parse_tool_corpus(const std::string& text, const std::string& source = "") {
  ToolCatalog catalog;
  for_each_jsonl(text, source, [&](const Json& rec, std::size_t line_no) {
    ToolSchema schema = parse_tool_schema(rec, line_no);
    if (catalog.contains(schema.tool_id)) {
      fail(ErrorCode::DuplicateToolId,
           source + " line " + std::to_string(line_no) + ": duplicate tool id '" + schema.tool_id + "'");
    }
    catalog.add(std::move(schema));
  });
  return catalog;
}

inline ToolCatalog load_tool_corpus(const std::filesystem::path& path) {
  return parse_tool_corpus(read_file(path), path.string());
}

inline std::string serialize_tool_corpus(const ToolCatalog& catalog) {
  std::string out;
  for (const auto& [_, t] : catalog) {
    out += to_json(t).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Argument bindings (shared by gold plans and generated artifacts)
// ---------------------------------------------------------------------------

/// Reference to a payload field produced by an earlier step (1-based index).
struct StepRef {
  std::size_t step = 0;
  std::string field;
  friend bool operator==(const StepRef&, const StepRef&) = default;
};

/// Either a literal JSON value or a reference to a prior step's output.
struct Binding {
  std::variant<Json, StepRef> value;

  static Binding literal(Json v) { return Binding{std::move(v)}; }
  static Binding ref(std::size_t step, std::string field) {
    return Binding{StepRef{step, std::move(field)}};
  }
  bool is_ref() const { return std::holds_alternative<StepRef>(value); }
  const StepRef& as_ref() const { return std::get<StepRef>(value); }

  friend bool operator==(const Binding& a, const Binding& b) { return a.value == b.value; }
};

/// `{"from_step": N, "field": "..."}` is a reference; anything else is a literal.
inline Binding parse_binding(const Json& v) {
  if (v.is_object() && v.size() == 2 && v.contains("from_step") && v.contains("field") &&
      v.at("from_step").is_number_integer() && v.at("field").is_string()) {
    const auto step = v.at("from_step").get<std::int64_t>();
    if (step < 0) fail(ErrorCode::MalformedRecord, "negative step reference");
    return Binding::ref(static_cast<std::size_t>(step), v.at("field").get<std::string>());
  }
  return Binding::literal(v);
}

inline Json to_json(const Binding& b) {
  if (b.is_ref()) return {{"from_step", b.as_ref().step}, {"field", b.as_ref().field}};
  return std::get<Json>(b.value);
}

// ---------------------------------------------------------------------------
// Queries, gold plans and documents
// ---------------------------------------------------------------------------

enum class Level { G1, G2, G3 };

inline std::string_view to_string(Level level) {
  switch (level) {
    case Level::G1: return "G1";
    case Level::G2: return "G2";
    case Level::G3: return "G3";
  }
  return "G1";
}

inline Level parse_level(std::string_view raw) {
  const std::string s = trim(raw);
  if (s == "G1" || s == "g1") return Level::G1;
  if (s == "G2" || s == "g2") return Level::G2;
  if (s == "G3" || s == "g3") return Level::G3;
  fail(ErrorCode::UnknownLevel, "level '" + std::string(raw) + "' is not one of G1, G2, G3");
}

struct GoldStep {
  std::string tool_id;
  std::map<std::string, Binding> arguments;
  friend bool operator==(const GoldStep&, const GoldStep&) = default;
};

using ToolPair = std::pair<std::string, std::string>;

struct GoldPlan {
  std::vector<GoldStep> steps;
  std::vector<ToolPair> gold_dependencies;
  friend bool operator==(const GoldPlan&, const GoldPlan&) = default;
};

struct QueryRecord {
  std::string query_id;
  std::string text;
  Level level = Level::G1;
  std::optional<GoldPlan> gold_plan;
  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string body;
  std::vector<std::string> referenced_tools;
  friend bool operator==(const DocumentRecord&, const DocumentRecord&) = default;
};

inline GoldPlan parse_gold_plan(const Json& rec, std::size_t line_no) {
  GoldPlan plan;
  if (const Json* steps = detail::array_field(rec, "steps", line_no)) {
    for (const auto& s : *steps) {
      GoldStep step;
      step.tool_id = normalize_tool_id(string_field(s, "tool", line_no));
      if (s.contains("arguments") && s.at("arguments").is_object()) {
        for (const auto& [k, v] : s.at("arguments").items()) step.arguments.emplace(k, parse_binding(v));
      }
      plan.steps.push_back(std::move(step));
    }
  }
  if (const Json* deps = detail::array_field(rec, "dependencies", line_no)) {
    for (const auto& d : *deps) {
      plan.gold_dependencies.emplace_back(normalize_tool_id(string_field(d, "source", line_no)),
                                          normalize_tool_id(string_field(d, "target", line_no)));
    }
  }
  return plan;
}

inline Json to_json(const GoldPlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps) {
    Json args = Json::object();
    for (const auto& [k, v] : s.arguments) args[k] = to_json(v);
    steps.push_back({{"tool", s.tool_id}, {"arguments", std::move(args)}});
  }
  Json deps = Json::array();
  for (const auto& [src, dst] : plan.gold_dependencies) deps.push_back({{"source", src}, {"target", dst}});
  return {{"steps", std::move(steps)}, {"dependencies", std::move(deps)}};
}

inline QueryRecord parse_query_record(const Json& rec, std::size_t line_no) {
  QueryRecord q;
  q.query_id = require_field(rec, "query_id", line_no).get<std::string>();
  q.text = string_field(rec, "text", line_no);
  q.level = parse_level(string_field(rec, "level", line_no));
  if (rec.contains("gold_plan") && !rec.at("gold_plan").is_null()) {
    q.gold_plan = parse_gold_plan(rec.at("gold_plan"), line_no);
  }
  return q;
}

inline Json to_json(const QueryRecord& q) {
  Json out = {{"query_id", q.query_id}, {"text", q.text}, {"level", std::string(to_string(q.level))}};
  if (q.gold_plan) out["gold_plan"] = to_json(*q.gold_plan);
  return out;
}

/// Gold-plan filter: unresolvable tool, empty plan, or self-dependency.
inline bool gold_plan_is_valid(const GoldPlan& plan, const ToolCatalog& catalog) {
  if (plan.steps.empty()) return false;
  for (const auto& s : plan.steps)
    if (!catalog.contains(s.tool_id)) return false;
  for (const auto& [src, dst] : plan.gold_dependencies) {
    if (src == dst) return false;
    if (!catalog.contains(src) || !catalog.contains(dst)) return false;
  }
  return true;
}

struct QueryLoadResult {
  std::vector<QueryRecord> records;
  std::size_t dropped_invalid = 0;
};

inline std::vector<QueryRecord> parse_query_file(const std::string& text, const std::string& source = "") {
  std::vector<QueryRecord> out;
  for_each_jsonl(text, source, [&](const Json& rec, std::size_t line_no) {
    out.push_back(parse_query_record(rec, line_no));
  });
  return out;
}

/// Deterministic sample of `sample_n` queries of one level. With a catalog,
/// records whose gold plan fails the validity filter are dropped first.
inline QueryLoadResult load_query_set(const std::filesystem::path& path, Level level,
                                      std::size_t sample_n, std::uint64_t rng_seed,
                                      const ToolCatalog* catalog = nullptr) {
  QueryLoadResult result;
  std::vector<QueryRecord> pool;
  for (auto& q : parse_query_file(read_file(path), path.string())) {
    if (q.level != level) continue;
    if (catalog != nullptr && q.gold_plan && !gold_plan_is_valid(*q.gold_plan, *catalog)) {
      ++result.dropped_invalid;
      continue;
    }
    pool.push_back(std::move(q));
  }
  if (sample_n > pool.size()) {
    fail(ErrorCode::NotEnoughRecords, "requested " + std::to_string(sample_n) + " " +
                                          std::string(to_string(level)) + " queries but only " +
                                          std::to_string(pool.size()) + " available");
  }
  for (std::size_t i : sample_indices(pool.size(), sample_n, rng_seed)) result.records.push_back(pool[i]);
  return result;
}

inline DocumentRecord parse_document_record(const Json& rec, std::size_t line_no) {
  DocumentRecord d;
  d.doc_id = require_field(rec, "doc_id", line_no).get<std::string>();
  if (d.doc_id.empty()) fail(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": empty doc_id");
  d.title = string_field(rec, "title", line_no);
  d.body = string_field(rec, "body", line_no);
  if (const Json* refs = detail::array_field(rec, "referenced_tools", line_no)) {
    for (const auto& r : *refs) d.referenced_tools.push_back(normalize_tool_id(r.get<std::string>()));
  }
  return d;
}

inline Json to_json(const DocumentRecord& d) {
  Json out = {{"doc_id", d.doc_id}, {"title", d.title}, {"body", d.body}};
  if (!d.referenced_tools.empty()) out["referenced_tools"] = d.referenced_tools;
  return out;
}

inline std::vector<DocumentRecord> parse_document_corpus(const std::string& text, const std::string& source = "") {
  std::vector<DocumentRecord> docs;
  std::set<std::string> ids;
  for_each_jsonl(text, source, [&](const Json& rec, std::size_t line_no) {
    DocumentRecord d = parse_document_record(rec, line_no);
    if (!ids.insert(d.doc_id).second) {
      fail(ErrorCode::DuplicateDocId, "line " + std::to_string(line_no) + ": doc_id '" + d.doc_id + "' repeated");
    }
    docs.push_back(std::move(d));
  });
  return docs;
}

inline std::vector<DocumentRecord> load_document_corpus(const std::filesystem::path& path) {
  return parse_document_corpus(read_file(path), path.string());
}

}  // namespace toolweave
