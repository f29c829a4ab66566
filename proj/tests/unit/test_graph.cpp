#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <queue>
#include <set>

#include "parex/graph.hpp"
#include "parex/rng.hpp"
#include "parex/synthetic.hpp"

using namespace parex;

namespace {

Graph fig2_graph() {
  // Three nodes, edges 0->1 and 0->2 (node 0 feeds both others).
  GraphBuilder b(3);
  b.add_edge(0, 1);
  b.add_edge(0, 2);
  Matrix f(3, 2);
  f(0, 0) = 1.0;
  f(1, 1) = 1.0;
  f(2, 0) = 0.5;
  b.set_features(std::move(f));
  return b.build(false);
}

// Independent oracle: plain BFS over reversed edges collected from scratch.
std::set<NodeId> bfs_reversed_oracle(const Graph& g, NodeId target, int k) {
  std::vector<std::vector<NodeId>> reversed(g.node_count);
  for (NodeId u = 0; u < g.node_count; ++u)
    for (NodeId v : g.out_neighbors(u)) reversed[v].push_back(u);
  std::set<NodeId> seen{target};
  std::queue<std::pair<NodeId, int>> q;
  q.push({target, 0});
  while (!q.empty()) {
    auto [v, d] = q.front();
    q.pop();
    if (d == k) continue;
    for (NodeId u : reversed[v])
      if (seen.insert(u).second) q.push({u, d + 1});
  }
  return seen;
}

}  // namespace

TEST_CASE("builder dedupes, strips self loops and symmetrizes") {
  GraphBuilder b(4);
  b.add_edge(0, 1);
  b.add_edge(0, 1);  // duplicate
  b.add_edge(2, 2);  // self loop
  b.add_edge(1, 2);
  BuildStats stats;
  Graph g = b.build(false, &stats);
  CHECK(g.node_count == 4);
  CHECK(g.edge_count == 2);
  CHECK(stats.duplicates_removed == 1);
  CHECK(stats.self_loops_removed == 1);

  GraphBuilder b2(3);
  b2.add_edge(0, 1);
  b2.add_edge(1, 0);  // reverse already present
  b2.add_edge(1, 2);
  Graph s = b2.build(true);
  CHECK(s.edge_count == 4);  // {0-1 both ways, 1-2 both ways}
  CHECK(s.transpose_consistent());
}

TEST_CASE("transpose consistency holds on random graphs") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    CommunityParams params;
    params.communities = 3;
    params.p_intra = 0.2;
    params.p_inter = 0.05;
    const Graph g = generate_community(40, params, seed);
    CHECK(g.transpose_consistent());
    CHECK(g.norm_degree.size() == static_cast<std::size_t>(g.node_count));
    for (NodeId v = 0; v < g.node_count; ++v)
      CHECK(g.norm_degree[v] == 1.0 + static_cast<double>(g.in_degree(v)));
  }
}

TEST_CASE("khop in-neighborhood matches the forward/backward example") {
  const Graph g = fig2_graph();
  const KHopSet hop = khop_in_neighborhood(g, 1, 1);
  CHECK(hop.members == std::vector<NodeId>{0, 1});
  const KHopSet hop2 = khop_in_neighborhood(g, 2, 1);
  CHECK(hop2.members == std::vector<NodeId>{0, 2});
  // Node 0 has no in-edges at all.
  CHECK(khop_in_neighborhood(g, 0, 3).members == std::vector<NodeId>{0});
}

TEST_CASE("khop k=0 is the target alone") {
  const Graph g = fig2_graph();
  for (NodeId t = 0; t < 3; ++t)
    CHECK(khop_in_neighborhood(g, t, 0).members == std::vector<NodeId>{t});
}

TEST_CASE("khop equals BFS-over-reversed-edges oracle on random graphs") {
  CommunityParams params;
  params.communities = 4;
  params.p_intra = 0.15;
  params.p_inter = 0.03;
  const Graph g = generate_community(50, params, 11);
  for (NodeId t = 0; t < g.node_count; t += 7) {
    for (int k : {0, 1, 2, 3}) {
      const auto oracle = bfs_reversed_oracle(g, t, k);
      const auto got = khop_in_neighborhood(g, t, k).members;
      CHECK(std::set<NodeId>(got.begin(), got.end()) == oracle);
    }
  }
}

TEST_CASE("khop is monotone in k") {
  const Graph g = generate_community(60, {}, 5);
  for (NodeId t = 0; t < g.node_count; t += 9) {
    std::size_t previous = 0;
    for (int k = 0; k <= 4; ++k) {
      const auto members = khop_in_neighborhood(g, t, k).members;
      CHECK(members.size() >= previous);
      previous = members.size();
    }
  }
}

TEST_CASE("khop rejects unknown node ids") {
  const Graph g = fig2_graph();
  CHECK_THROWS_AS(khop_in_neighborhood(g, 17, 1), std::out_of_range);
  CHECK_THROWS_AS(khop_in_neighborhood(g, -1, 1), std::out_of_range);
}

TEST_CASE("khop subgraph extraction is canonical") {
  const Graph g = generate_community(45, {}, 3);
  const KHopSubgraph sub = extract_khop_subgraph(g, 7, 2);
  CHECK(std::is_sorted(sub.origin.begin(), sub.origin.end()));
  CHECK(sub.origin[sub.local_target] == 7);
  CHECK(sub.graph.transpose_consistent());
  // Norm degrees are carried over from the host, not recomputed.
  for (NodeId i = 0; i < sub.graph.node_count; ++i)
    CHECK(sub.graph.norm_degree[i] == g.norm_degree[sub.origin[i]]);
  // Members equal the khop set.
  const auto khop = khop_in_neighborhood(g, 7, 2).members;
  CHECK(sub.origin == khop);
}
