#include <gtest/gtest.h>

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

std::string random_name(std::mt19937_64& rng) {
  static const std::string alphabet = "abcXYZ019 _-!.?\t";
  std::string s;
  const auto len = uniform_below(rng, 14);
  for (std::uint64_t i = 0; i < len; ++i) s.push_back(alphabet[uniform_below(rng, alphabet.size())]);
  return s;
}

}  // namespace

TEST(NormalizeToolId, CollapsesWhitespaceAndLowercases) {
  EXPECT_EQ(normalize_tool_id("  Backlog Check "), "backlog_check");
  EXPECT_EQ(normalize_tool_id("backlog_check"), "backlog_check");
  EXPECT_EQ(normalize_tool_id("Get   Order"), "get_order");
  EXPECT_EQ(normalize_tool_id("...Refund Order!"), "refund_order");
}

TEST(NormalizeToolId, PunctuationOnlyIsEmpty) {
  EXPECT_EQ(code_of([] { normalize_tool_id("!!!"); }), ErrorCode::EmptyAfterNormalization);
  EXPECT_EQ(code_of([] { normalize_tool_id("   "); }), ErrorCode::EmptyAfterNormalization);
}

TEST(NormalizeToolId, IdempotentOnRandomStrings) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const std::string raw = random_name(rng);
    std::string once;
    try {
      once = normalize_tool_id(raw);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::EmptyAfterNormalization);
      continue;
    }
    ++checked;
    EXPECT_EQ(normalize_tool_id(once), once) << "raw='" << raw << "'";
    for (char c : once) {
      EXPECT_FALSE(std::isspace(static_cast<unsigned char>(c)));
      EXPECT_FALSE(std::isupper(static_cast<unsigned char>(c)));
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(ParseToolSchema, MapsFieldsDirectly) {
  const ToolSchema s = parse_tool_schema(
      R"({"name":"GetOrder","description":"d","arguments":[{"name":"order_id","type":"string","required":true}],)"
      R"("output_payload":[{"name":"status","type":"string"}]})");
  EXPECT_EQ(s.tool_id, "getorder");
  EXPECT_EQ(s.name, "GetOrder");
  ASSERT_EQ(s.arguments.size(), 1u);
  EXPECT_EQ(s.arguments[0].name, "order_id");
  EXPECT_EQ(s.arguments[0].type_tag, TypeTag::String);
  EXPECT_TRUE(s.arguments[0].required);
  ASSERT_EQ(s.output_payload.size(), 1u);
  EXPECT_EQ(s.output_payload[0].name, "status");
}

TEST(ParseToolSchema, DuplicateArgumentNames) {
  EXPECT_EQ(code_of([] {
              parse_tool_schema(R"({"name":"T","arguments":[{"name":"id","type":"string"},{"name":"id","type":"integer"}]})");
            }),
            ErrorCode::DuplicateArgumentName);
  EXPECT_EQ(code_of([] {
              parse_tool_schema(R"({"name":"T","output_payload":[{"name":"x"},{"name":"x"}]})");
            }),
            ErrorCode::DuplicatePayloadField);
}

TEST(ParseToolSchema, MissingTypeIsUnknown) {
  TempDir dir("schema");
  write_file(dir.path() / "tools.jsonl",
             "{\"name\":\"Ship Parcel\",\"arguments\":[{\"name\":\"weight\"}],\"output_payload\":[{\"name\":\"label\"}]}\n");
  const ToolCatalog c = load_tool_corpus(dir.path() / "tools.jsonl");
  const ToolSchema* s = c.find("ship_parcel");
  ASSERT_NE(s, nullptr);
  EXPECT_EQ(s->arguments[0].type_tag, TypeTag::Unknown);
  EXPECT_EQ(s->output_payload[0].type_tag, TypeTag::Unknown);
}

TEST(ParseToolSchema, EmptyNameAndMalformedLine) {
  EXPECT_EQ(code_of([] { parse_tool_schema(R"({"name":"  "})"); }), ErrorCode::EmptyToolName);
  EXPECT_EQ(code_of([] { parse_tool_schema(R"({"name":"?!"})"); }), ErrorCode::EmptyToolName);
  EXPECT_EQ(code_of([] { parse_tool_schema(std::string("{not json")); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code_of([] { parse_tool_schema(R"({"description":"no name"})"); }), ErrorCode::MalformedRecord);
}

TEST(ParseToolSchema, ToolbenchLayout) {
  const Json rec = {{"tool_name", "Orders"},
                    {"api_name", "Get Order"},
                    {"api_description", "fetch"},
                    {"required_parameters", {{{"name", "id"}, {"type", "STRING"}}}},
                    {"optional_parameters", {{{"name", "verbose"}, {"type", "BOOLEAN"}}}},
                    {"template_response", {{"status", "str"}}}};
  const ToolSchema s = parse_tool_schema(rec);
  EXPECT_EQ(s.tool_id, "orders_get_order");
  ASSERT_EQ(s.arguments.size(), 2u);
  EXPECT_TRUE(s.arguments[0].required);
  EXPECT_FALSE(s.arguments[1].required);
  EXPECT_EQ(s.arguments[1].type_tag, TypeTag::Boolean);
  ASSERT_EQ(s.output_payload.size(), 1u);
}

TEST(ToolCorpus, DuplicateToolIdsAcrossSpellings) {
  EXPECT_EQ(code_of([] { parse_tool_corpus("{\"name\":\"Get Order\"}\n{\"name\":\"get_order\"}\n"); }),
            ErrorCode::DuplicateToolId);
}

TEST(ToolCorpus, SerializeRoundTripOnRandomSchemas) {
  std::mt19937_64 rng(3);
  static const char* kTypes[] = {"string", "integer", "number", "boolean", "list", "object", "mystery"};
  for (int round = 0; round < 50; ++round) {
    ToolCatalog catalog;
    const auto n = 1 + uniform_below(rng, 6);
    for (std::uint64_t t = 0; t < n; ++t) {
      std::vector<FieldDef> args;
      std::vector<FieldDef> payload;
      for (std::uint64_t a = 0; a < uniform_below(rng, 4); ++a)
        args.push_back({"arg" + std::to_string(a), kTypes[uniform_below(rng, 7)], uniform_unit(rng) < 0.5});
      for (std::uint64_t f = 0; f < uniform_below(rng, 4); ++f)
        payload.push_back({"field" + std::to_string(f), kTypes[uniform_below(rng, 7)]});
      catalog.add(make_schema("Tool " + std::to_string(t), args, payload));
    }
    const std::string text = serialize_tool_corpus(catalog);
    const ToolCatalog back = parse_tool_corpus(text);
    EXPECT_EQ(back.list(), catalog.list());
    EXPECT_EQ(serialize_tool_corpus(back), text);
  }
}

namespace {

std::filesystem::path write_queries(const TempDir& dir, std::size_t n_g1, std::size_t n_g2) {
  std::string text;
  for (std::size_t i = 0; i < n_g1; ++i)
    text += Json{{"query_id", "g1-" + std::to_string(i)}, {"text", "query"}, {"level", "G1"}}.dump() + "\n";
  for (std::size_t i = 0; i < n_g2; ++i)
    text += Json{{"query_id", "g2-" + std::to_string(i)}, {"text", "query"}, {"level", "G2"}}.dump() + "\n";
  const auto path = dir.path() / "queries.jsonl";
  write_file(path, text);
  return path;
}

std::vector<std::string> ids(const QueryLoadResult& r) {
  std::vector<std::string> out;
  for (const auto& q : r.records) out.push_back(q.query_id);
  return out;
}

}  // namespace

TEST(LoadQuerySet, SampleOfWholePopulation) {
  TempDir dir("queries");
  const auto path = write_queries(dir, 10, 4);
  auto r = load_query_set(path, Level::G1, 10, 1);
  auto got = ids(r);
  std::sort(got.begin(), got.end());
  ASSERT_EQ(got.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NE(std::find(got.begin(), got.end(), "g1-" + std::to_string(i)), got.end());
  EXPECT_EQ(ids(load_query_set(path, Level::G1, 10, 1)), ids(load_query_set(path, Level::G1, 10, 1)));
}

TEST(LoadQuerySet, SeededSampleIsStable) {
  TempDir dir("queries");
  const auto path = write_queries(dir, 10, 4);
  const auto a = ids(load_query_set(path, Level::G1, 3, 42));
  const auto b = ids(load_query_set(path, Level::G1, 3, 42));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  for (const auto& q : load_query_set(path, Level::G2, 4, 42).records) EXPECT_EQ(q.level, Level::G2);
}

TEST(LoadQuerySet, NotEnoughRecords) {
  TempDir dir("queries");
  const auto path = write_queries(dir, 2, 0);
  EXPECT_EQ(code_of([&] { load_query_set(path, Level::G1, 5, 0); }), ErrorCode::NotEnoughRecords);
}

TEST(LoadQuerySet, UnknownLevel) {
  EXPECT_EQ(code_of([] { parse_level("G4"); }), ErrorCode::UnknownLevel);
}

TEST(LoadQuerySet, InvalidGoldPlansAreDropped) {
  TempDir dir("queries");
  const ToolCatalog catalog = order_catalog();
  const Json good = {{"steps", {{{"tool", "Get Order"}}, {{"tool", "cancel_order"}}}},
                     {"dependencies", {{{"source", "get_order"}, {"target", "cancel_order"}}}}};
  const Json unknown = {{"steps", {{{"tool", "launch_rocket"}}}}};
  const Json self = {{"steps", {{{"tool", "get_order"}}}}, {"dependencies", {{{"source", "get_order"}, {"target", "get_order"}}}}};
  std::string text;
  text += Json{{"query_id", "a"}, {"text", "t"}, {"level", "G1"}, {"gold_plan", good}}.dump() + "\n";
  text += Json{{"query_id", "b"}, {"text", "t"}, {"level", "G1"}, {"gold_plan", unknown}}.dump() + "\n";
  text += Json{{"query_id", "c"}, {"text", "t"}, {"level", "G1"}, {"gold_plan", self}}.dump() + "\n";
  write_file(dir.path() / "q.jsonl", text);
  const auto r = load_query_set(dir.path() / "q.jsonl", Level::G1, 1, 0, &catalog);
  EXPECT_EQ(r.dropped_invalid, 2u);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].query_id, "a");
  EXPECT_EQ(r.records[0].gold_plan->steps[0].tool_id, "get_order");
}

TEST(QueryRecord, RoundTripWithBindings) {
  QueryRecord q;
  q.query_id = "q7";
  q.text = "cancel my order";
  q.level = Level::G2;
  GoldPlan plan;
  plan.steps.push_back({"get_order", {{"customer_id", Binding::literal("c-9")}}});
  plan.steps.push_back({"cancel_order", {{"order_id", Binding::ref(1, "order_id")}}});
  plan.gold_dependencies.emplace_back("get_order", "cancel_order");
  q.gold_plan = plan;
  const auto back = parse_query_file(to_json(q).dump() + "\n");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], q);
}

TEST(Documents, DuplicateDocIdRejected) {
  EXPECT_EQ(code_of([] {
              parse_document_corpus("{\"doc_id\":\"d1\",\"title\":\"a\",\"body\":\"x\"}\n"
                                    "{\"doc_id\":\"d1\",\"title\":\"b\",\"body\":\"y\"}\n");
            }),
            ErrorCode::DuplicateDocId);
}

TEST(Documents, ReferencedToolsAreNormalized) {
  const auto docs =
      parse_document_corpus("{\"doc_id\":\"d1\",\"title\":\"SOP\",\"body\":\"x\",\"referenced_tools\":[\"Backlog Check\"]}\n");
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].referenced_tools, std::vector<std::string>{"backlog_check"});
  EXPECT_EQ(parse_document_corpus(to_json(docs[0]).dump()), docs);
}

TEST(Jsonl, ErrorsCarryLineNumbers) {
  try {
    parse_tool_corpus("{\"name\":\"a\"}\n\n{oops\n", "tools.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}
