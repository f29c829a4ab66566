#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "parex/schedule.hpp"
#include "parex/synthetic.hpp"

using namespace parex;

namespace {

Graph nine_node_graph() {
  GraphBuilder b(9);
  b.add_edge(1, 0);
  b.add_edge(0, 2);
  b.add_edge(3, 2);
  b.add_edge(2, 4);
  b.add_edge(4, 5);
  b.add_edge(6, 5);
  b.add_edge(7, 6);
  b.add_edge(8, 7);
  Matrix f(9, 1);
  b.set_features(std::move(f));
  return b.build(false);
}

}  // namespace

TEST_CASE("cluster sizes 4-2-3 need four batches instead of nine iterations") {
  const Graph g = nine_node_graph();
  const Partition p = Partition::from_assignment(g, {0, 0, 0, 0, 1, 1, 2, 2, 2}, 3);
  const ReconstructedGraph recon = full_reconstruct(g, p, 1);
  const BatchSchedule schedule = build_batches(recon, p);
  CHECK(schedule.batch_count == 4);  // max cluster size
  CHECK(schedule.covered == 9);      // the sequential approach needs 9 rounds
  CHECK(schedule.batches[0].size() == 3);
  CHECK(schedule.batches[1].size() == 3);
  CHECK(schedule.batches[2].size() == 2);
  CHECK(schedule.batches[3].size() == 1);
}

TEST_CASE("singleton clusters give a single batch") {
  const Graph g = nine_node_graph();
  std::vector<std::int32_t> assignment(9);
  for (int i = 0; i < 9; ++i) assignment[i] = i;
  const Partition p = Partition::from_assignment(g, assignment, 9);
  const ReconstructedGraph recon = full_reconstruct(g, p, 1);
  const BatchSchedule schedule = build_batches(recon, p);
  CHECK(schedule.batch_count == 1);
  CHECK(schedule.batches[0].size() == 9);
}

TEST_CASE("batch count equals the max cluster size on random inputs") {
  auto rng = make_engine(77, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const NodeId n = 20 + static_cast<NodeId>(rng() % 60);
    CommunityParams params;
    params.communities = 2 + static_cast<int>(rng() % 3);
    const Graph g = generate_community(n, params, rng());
    const std::int32_t c = 2 + static_cast<std::int32_t>(rng() % 6);
    const Partition p = partition(g, std::min<std::int32_t>(c, n), PartitionStrategy::random,
                                  rng());
    const ReconstructedGraph recon = full_reconstruct(g, p, 2);
    const BatchSchedule schedule = build_batches(recon, p);
    // Independent count of the largest cluster.
    std::int64_t largest = 0;
    std::vector<std::int64_t> sizes(p.cluster_count, 0);
    for (NodeId v = 0; v < g.node_count; ++v)
      largest = std::max(largest, ++sizes[p.cluster_of[v]]);
    CHECK(schedule.batch_count == largest);

    // Coverage: each original node exactly once.
    std::multiset<NodeId> scheduled;
    for (const auto& batch : schedule.batches)
      for (std::int64_t id : batch) {
        CHECK_FALSE(recon.is_replica[id]);
        scheduled.insert(recon.origin_of[id]);
      }
    CHECK(scheduled.size() == static_cast<std::size_t>(n));
    CHECK(std::set<NodeId>(scheduled.begin(), scheduled.end()).size() ==
          static_cast<std::size_t>(n));

    // One node per cluster per batch.
    for (const auto& batch : schedule.batches) {
      std::set<std::int32_t> clusters;
      for (std::int64_t id : batch) CHECK(clusters.insert(recon.cluster_of_new[id]).second);
    }
  }
}

TEST_CASE("schedules from build_batches verify as independent") {
  const Graph g = generate_community(60, {}, 3);
  const Partition p = partition(g, 4, PartitionStrategy::multilevel, 1);
  const ReconstructedGraph recon = full_reconstruct(g, p, 2);
  const BatchSchedule schedule = build_batches(recon, p);
  const IndependenceReport report = verify_independence(schedule, recon, 2);
  CHECK(report.ok());
  CHECK(report.pairs_checked > 0);
}

TEST_CASE("a bad batch with two nodes from one cluster is flagged") {
  const Graph g = nine_node_graph();
  const Partition p = Partition::from_assignment(g, {0, 0, 0, 0, 1, 1, 2, 2, 2}, 3);
  const ReconstructedGraph recon = full_reconstruct(g, p, 1);
  // Nodes 4 and 5 live in cluster 1 and share in-neighbors there.
  BatchSchedule bad;
  bad.batches = {{recon.union_node_of(1, 4), recon.union_node_of(1, 5)}};
  bad.batch_count = 1;
  bad.covered = 2;
  const IndependenceReport report = verify_independence(bad, recon, 1);
  CHECK_FALSE(report.ok());
  REQUIRE(report.violations.size() == 1);
}

TEST_CASE("independence report matches a brute-force pairwise oracle") {
  const Graph g = generate_community(30, {}, 6);
  const Partition p = partition(g, 3, PartitionStrategy::random, 2);
  const ReconstructedGraph recon = full_reconstruct(g, p, 2);
  auto rng = make_engine(3, 1);
  for (int trial = 0; trial < 10; ++trial) {
    // Random (possibly invalid) batches of union originals.
    BatchSchedule random_schedule;
    std::vector<std::int64_t> originals;
    for (std::int64_t i = 0; i < recon.union_graph.node_count; ++i)
      if (!recon.is_replica[i]) originals.push_back(i);
    std::shuffle(originals.begin(), originals.end(), rng);
    random_schedule.batches.emplace_back(originals.begin(), originals.begin() + 6);
    const IndependenceReport report = verify_independence(random_schedule, recon, 2);

    std::int64_t brute_violations = 0;
    const auto& batch = random_schedule.batches[0];
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t j = i + 1; j < batch.size(); ++j) {
        const auto a =
            khop_in_neighborhood(recon.union_graph, static_cast<NodeId>(batch[i]), 2).members;
        const auto b =
            khop_in_neighborhood(recon.union_graph, static_cast<NodeId>(batch[j]), 2).members;
        std::vector<NodeId> shared;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                              std::back_inserter(shared));
        if (!shared.empty()) ++brute_violations;
      }
    CHECK(static_cast<std::int64_t>(report.violations.size()) == brute_violations);
  }
}

TEST_CASE("target filter schedules only the requested nodes") {
  const Graph g = generate_community(40, {}, 4);
  const Partition p = partition(g, 4, PartitionStrategy::multilevel, 1);
  const ReconstructedGraph recon = full_reconstruct(g, p, 2);
  const std::vector<NodeId> targets{1, 5, 9, 13, 17};
  const BatchSchedule schedule = build_batches(recon, p, targets);
  CHECK(schedule.covered == 5);
  std::vector<NodeId> seen;
  std::int64_t largest_filtered = 0;
  std::vector<std::int64_t> counts(p.cluster_count, 0);
  for (NodeId t : targets) largest_filtered = std::max(largest_filtered, ++counts[p.cluster_of[t]]);
  CHECK(schedule.batch_count == largest_filtered);
  for (const auto& batch : schedule.batches)
    for (std::int64_t id : batch) seen.push_back(recon.origin_of[id]);
  std::sort(seen.begin(), seen.end());
  CHECK(seen == targets);
}
