#pragma once

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "toolweave.hpp"

namespace tw_test {

using namespace toolweave;

struct FieldDef {
  std::string name;
  std::string type;
  bool required = true;
};

inline ToolSchema make_schema(const std::string& name, const std::vector<FieldDef>& args,
                              const std::vector<FieldDef>& payload, const std::string& description = "") {
  Json j = {{"name", name}, {"description", description.empty() ? name + " tool" : description}};
  j["arguments"] = Json::array();
  for (const auto& a : args) j["arguments"].push_back({{"name", a.name}, {"type", a.type}, {"required", a.required}});
  j["output_payload"] = Json::array();
  for (const auto& f : payload) j["output_payload"].push_back({{"name", f.name}, {"type", f.type}});
  return parse_tool_schema(j);
}

/// get_order -> cancel_order via order_id, cancel_order -> refund_order via refund_id.
inline ToolCatalog order_catalog() {
  ToolCatalog c;
  c.add(make_schema("Get Order", {{"customer_id", "string"}}, {{"order_id", "string"}, {"status", "string"}},
                    "Looks up an order for a customer"));
  c.add(make_schema("Cancel Order", {{"order_id", "string"}, {"reason", "string", false}}, {{"refund_id", "string"}},
                    "Cancels an order and opens a refund"));
  c.add(make_schema("Refund Order", {{"refund_id", "string"}}, {{"amount", "number"}},
                    "Pays out a pending refund"));
  return c;
}

inline ToolDependency accepted_dep(const std::string& src, const std::string& dst, const std::string& field,
                                   const std::string& arg = "") {
  ToolDependency d;
  d.candidate = {src, dst, field, arg.empty() ? field : arg, "", 1.0};
  d.verdict = Verdict::Accepted;
  d.provenance = Provenance::Heuristic;
  return d;
}

inline std::unique_ptr<Gateway> stub_gateway() { return make_stub_gateway(); }

/// Replay gateway over an in-memory fixture set.
inline std::unique_ptr<Gateway> replay_gateway(FixtureFile fixtures) {
  GatewayOptions o;
  o.mode = GatewayMode::Replay;
  auto g = std::make_unique<Gateway>(o);
  g->set_fixtures(std::move(fixtures));
  return g;
}

inline void put_fixture(FixtureFile& f, Role role, const std::string& payload, const std::string& response) {
  f.put(FixtureRecord{request_fingerprint(role, payload), role, response, "fixture", ""});
}

/// Transport driven by a function, counting calls.
class FakeTransport : public Transport {
 public:
  explicit FakeTransport(std::function<std::string(const GatewayRequest&)> fn) : fn_(std::move(fn)) {}
  std::string send(const GatewayRequest& request) override {
    ++calls;
    return fn_(request);
  }
  std::atomic<std::size_t> calls{0};

 private:
  std::function<std::string(const GatewayRequest&)> fn_;
};

/// Live gateway with an injected transport and a recording no-op sleeper.
struct LiveRig {
  std::unique_ptr<Gateway> gateway;
  std::shared_ptr<FakeTransport> transport;
  std::vector<std::chrono::milliseconds> sleeps;
};

inline std::unique_ptr<LiveRig> live_rig(std::function<std::string(const GatewayRequest&)> fn, bool record = true) {
  auto rig = std::make_unique<LiveRig>();
  GatewayOptions o;
  o.mode = GatewayMode::Live;
  o.record = record;
  o.model = "fake-model";
  rig->gateway = std::make_unique<Gateway>(o);
  rig->transport = std::make_shared<FakeTransport>(std::move(fn));
  rig->gateway->set_transport(rig->transport);
  auto* sleeps = &rig->sleeps;
  rig->gateway->set_sleeper([sleeps](std::chrono::milliseconds d) { sleeps->push_back(d); });
  return rig;
}

// ---------------------------------------------------------------------------
// Random generators
// ---------------------------------------------------------------------------

/// Graph over tool nodes t0..t{n-1} with random positive weights.
inline FusedGraph random_graph(std::mt19937_64& rng, std::size_t n, double edge_prob) {
  GraphBuilder b;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string label = "t" + std::to_string(i);
    b.add_node(Node{NodeId::tool(label), NodeKind::Tool, label, "", std::nullopt});
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && uniform_unit(rng) < edge_prob)
        b.add_edge(Edge{NodeId::tool("t" + std::to_string(i)), NodeId::tool("t" + std::to_string(j)),
                        Relation::CanUseToolOutput, "", 0.1 + 4.9 * uniform_unit(rng)});
  return b.build();
}

/// Random distribution over a random non-empty subset of the graph's nodes.
inline SeedMap random_seeds(std::mt19937_64& rng, const FusedGraph& g) {
  std::map<NodeId, double> raw;
  double total = 0.0;
  for (const auto& n : g.nodes()) {
    if (uniform_unit(rng) < 0.4) {
      const double w = 0.05 + uniform_unit(rng);
      raw[n.id] = w;
      total += w;
    }
  }
  if (raw.empty()) {
    raw[g.node(uniform_below(rng, g.node_count())).id] = 1.0;
    total = 1.0;
  }
  SeedMap seeds;
  double sum = 0.0;
  for (const auto& [id, w] : raw) {
    seeds[id] = w / total;
    sum += w / total;
  }
  for (auto& [_, m] : seeds) m /= sum;
  return seeds;
}

// ---------------------------------------------------------------------------
// Dense PPR oracle: solve (I - d M) p = (1 - d) s by Gaussian elimination,
// M column-stochastic with dangling columns equal to s.
// ---------------------------------------------------------------------------

inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

inline std::map<NodeId, double> dense_ppr(const FusedGraph& g, const SeedMap& seeds, double d, bool symmetrize) {
  const std::size_t n = g.node_count();
  std::vector<double> s(n, 0.0);
  for (const auto& [id, m] : seeds) s[*g.index_of(id)] += m;

  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));  // w[u][v]
  for (const auto& e : g.edges()) {
    const std::size_t u = *g.index_of(e.src);
    const std::size_t v = *g.index_of(e.dst);
    w[u][v] += e.weight;
    if (symmetrize) w[v][u] += e.weight;
  }
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));  // m[v][u]
  for (std::size_t u = 0; u < n; ++u) {
    double out = 0.0;
    for (double x : w[u]) out += x;
    for (std::size_t v = 0; v < n; ++v) m[v][u] = out > 0.0 ? w[u][v] / out : s[v];
  }
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a[i][j] = (i == j ? 1.0 : 0.0) - d * m[i][j];
    rhs[i] = (1.0 - d) * s[i];
  }
  const auto p = solve_dense(std::move(a), std::move(rhs));
  std::map<NodeId, double> out;
  for (std::size_t i = 0; i < n; ++i) out[g.node(i).id] = p[i];
  return out;
}

inline double linf(const std::map<NodeId, double>& a, const std::map<NodeId, double>& b) {
  double worst = 0.0;
  for (const auto& [id, x] : a) worst = std::max(worst, std::abs(x - b.at(id)));
  return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("toolweave-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Plan helpers
// ---------------------------------------------------------------------------

/// get_order then cancel_order wired through order_id.
inline Json two_step_plan_json() {
  return Json{{"steps",
               {{{"step", 1}, {"tool", "get_order"}, {"arguments", {{"customer_id", "c-1"}}}, {"depends_on", Json::array()}},
                {{"step", 2},
                 {"tool", "cancel_order"},
                 {"arguments", {{"order_id", {{"from_step", 1}, {"field", "order_id"}}}}},
                 {"depends_on", {1}}}}}};
}

inline PlanArtifact artifact_from(const Json& plan, const std::string& query_id = "q1") {
  PlanArtifact a;
  a.query_id = query_id;
  a.steps = parse_steps(plan.at("steps"));
  a.provenance = "replay";
  return a;
}

/// Projects an artifact onto the gold-plan shape.
inline GoldPlan gold_from(const PlanArtifact& a) {
  GoldPlan g;
  for (const auto& s : a.steps) {
    GoldStep gs;
    gs.tool_id = s.tool_id;
    gs.arguments = s.argument_bindings;
    g.steps.push_back(std::move(gs));
  }
  for (const auto& [src, dst] : artifact_wiring(a)) g.gold_dependencies.emplace_back(src, dst);
  return g;
}

/// Gold plan converted to the JSON plan shape a generator would return.
inline Json plan_json_from_gold(const GoldPlan& gold) {
  Json steps = Json::array();
  for (std::size_t i = 0; i < gold.steps.size(); ++i) {
    Json args = Json::object();
    std::set<std::size_t> deps;
    for (const auto& [k, b] : gold.steps[i].arguments) {
      args[k] = to_json(b);
      if (b.is_ref()) deps.insert(b.as_ref().step);
    }
    steps.push_back({{"step", i + 1}, {"tool", gold.steps[i].tool_id}, {"arguments", args}, {"depends_on", deps}});
  }
  return {{"steps", steps}};
}

}  // namespace tw_test
