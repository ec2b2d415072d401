#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "toolweave/error.hpp"
#include "toolweave/graph.hpp"

namespace toolweave {

enum class DanglingPolicy { ToSeeds };
enum class EdgeDirection { AsIs, Symmetrize };

struct PprConfig {
  double damping = 0.85;
  double tolerance = 1e-8;  // L1 change between iterates
  std::size_t max_iterations = 100;
  DanglingPolicy dangling_policy = DanglingPolicy::ToSeeds;
  EdgeDirection edge_direction = EdgeDirection::Symmetrize;
};

using SeedMap = std::map<NodeId, double>;

struct PprResult {
  std::map<NodeId, double> scores;
  std::size_t iterations = 0;
  bool converged = false;  // false: scores hold the last iterate
  double last_delta = 0.0;
};

/// Row-normalized transition lists in canonical node order. Nodes with no
/// outgoing weight are left empty (dangling).
struct TransitionMatrix {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
};

inline TransitionMatrix transition_matrix(const FusedGraph& graph, EdgeDirection direction) {
  const std::size_t n = graph.node_count();
  std::vector<std::map<std::size_t, double>> acc(n);
  for (const auto& e : graph.edges()) {
    const std::size_t s = *graph.index_of(e.src);
    const std::size_t d = *graph.index_of(e.dst);
    acc[s][d] += e.weight;
    if (direction == EdgeDirection::Symmetrize) acc[d][s] += e.weight;
  }
  TransitionMatrix m;
  m.rows.resize(n);
  for (std::size_t u = 0; u < n; ++u) {
    double total = 0.0;
    for (const auto& [_, w] : acc[u]) total += w;
    if (total <= 0.0) continue;
    m.rows[u].reserve(acc[u].size());
    for (const auto& [v, w] : acc[u]) m.rows[u].emplace_back(v, w / total);
  }
  return m;
}

/// Power iteration for p <- (1-d) s + d (W^T p + dangling(p) s).
inline PprResult personalized_pagerank(const FusedGraph& graph, const SeedMap& seeds, const PprConfig& config = {}) {
  if (seeds.empty()) fail(ErrorCode::EmptySeeds, "personalized pagerank needs at least one seed");
  if (!(config.damping > 0.0 && config.damping < 1.0)) {
    fail(ErrorCode::InvalidConfig, "damping must lie in (0, 1)");
  }
  if (!(config.tolerance > 0.0)) fail(ErrorCode::InvalidConfig, "tolerance must be positive");

  const std::size_t n = graph.node_count();
  std::vector<double> s(n, 0.0);
  double mass = 0.0;
  for (const auto& [id, m] : seeds) {
    auto i = graph.index_of(id);
    if (!i) fail(ErrorCode::UnknownSeedNode, "seed '" + id.value + "' is not in the graph");
    if (!(m >= 0.0) || !std::isfinite(m)) fail(ErrorCode::InvalidSeeds, "seed mass must be finite and >= 0");
    s[*i] += m;
    mass += m;
  }
  if (std::abs(mass - 1.0) > 1e-12) {
    fail(ErrorCode::InvalidSeeds, "seed masses sum to " + std::to_string(mass) + ", expected 1");
  }

  const TransitionMatrix m = transition_matrix(graph, config.edge_direction);
  const double d = config.damping;
  std::vector<double> p = s;
  std::vector<double> next(n);

  PprResult result;
  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      if (m.rows[u].empty()) dangling += p[u];
    for (std::size_t v = 0; v < n; ++v) next[v] = (1.0 - d + d * dangling) * s[v];
    for (std::size_t u = 0; u < n; ++u) {
      const double pu = d * p[u];
      if (pu == 0.0) continue;
      for (const auto& [v, w] : m.rows[u]) next[v] += pu * w;
    }
    double delta = 0.0;
    for (std::size_t v = 0; v < n; ++v) delta += std::abs(next[v] - p[v]);
    p.swap(next);
    result.iterations = it;
    result.last_delta = delta;
    if (delta <= config.tolerance) {
      result.converged = true;
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) result.scores.emplace(graph.node(i).id, p[i]);
  return result;
}

/// Node ids ranked by descending score, ties by canonical id.
inline std::vector<NodeId> rank_nodes(const FusedGraph& graph, const std::map<NodeId, double>& scores) {
  std::vector<std::pair<double, const NodeId*>> ranked;
  ranked.reserve(graph.node_count());
  for (const auto& n : graph.nodes()) {
    auto it = scores.find(n.id);
    ranked.emplace_back(it == scores.end() ? 0.0 : it->second, &n.id);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<NodeId> out;
  out.reserve(ranked.size());
  for (const auto& [_, id] : ranked) out.push_back(*id);
  return out;
}

/// Induced subgraph on the `top_n` highest-scoring nodes plus every seed.
inline FusedGraph extract_subgraph(const FusedGraph& graph, const std::map<NodeId, double>& scores,
                                   std::size_t top_n, const SeedMap& seeds = {}) {
  if (top_n < 1) fail(ErrorCode::InvalidConfig, "top_n must be >= 1");
  std::set<NodeId> keep;
  const auto ranked = rank_nodes(graph, scores);
  for (std::size_t i = 0; i < ranked.size() && i < top_n; ++i) keep.insert(ranked[i]);
  for (const auto& [id, _] : seeds)
    if (graph.contains(id)) keep.insert(id);

  GraphBuilder builder;
  for (const auto& id : keep) builder.add_node(*graph.find(id));
  for (const auto& e : graph.edges())
    if (keep.count(e.src) && keep.count(e.dst)) builder.add_edge(e);
  return builder.build();
}

}  // namespace toolweave
