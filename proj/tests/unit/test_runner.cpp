#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "parex/runner.hpp"

using namespace parex;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.dataset.kind = DatasetSpec::Kind::community;
  cfg.dataset.name = "community-60";
  cfg.dataset.nodes = 60;
  cfg.dataset.seed = 3;
  cfg.dataset.community.communities = 4;
  cfg.model.hidden = 8;
  cfg.model.train_epochs = 40;
  cfg.model.learning_rate = 0.1;
  cfg.pipeline.clusters = {1};
  cfg.pipeline.dropout_rates = {0.0};
  cfg.pipeline.repeats = 1;
  return cfg;
}

nlohmann::json strip_timing(nlohmann::json j) {
  j.erase("sequential_seconds");
  for (auto& row : j["rows"]) {
    row.erase("exec_time_s");
    row.erase("setup_time_s");
  }
  return j;
}

}  // namespace

TEST_CASE("config round-trips through json") {
  const nlohmann::json j = {
      {"dataset",
       {{"kind", "community"}, {"nodes", 80}, {"communities", 5}, {"seed", 11}}},
      {"model", {{"hidden", 12}, {"train_epochs", 30}}},
      {"pipeline",
       {{"clusters", {1, 4}},
        {"dropout_rates", {0.0, 0.5}},
        {"strategy", "random"},
        {"method", "deconvnet"},
        {"repeats", 2}}},
  };
  const RunConfig cfg = RunConfig::from_json(j);
  CHECK(cfg.dataset.nodes == 80);
  CHECK(cfg.dataset.community.communities == 5);
  CHECK(cfg.model.hidden == 12);
  CHECK(cfg.pipeline.clusters == std::vector<std::int32_t>{1, 4});
  CHECK(cfg.pipeline.dropout_rates == std::vector<double>{0.0, 0.5});
  CHECK(cfg.pipeline.strategy == PartitionStrategy::random);
  CHECK(cfg.pipeline.method == ExplainMethod::deconvnet);

  nlohmann::json bad = j;
  bad["pipeline"]["repeats"] = 0;
  CHECK_THROWS_AS(RunConfig::from_json(bad), std::invalid_argument);
  bad = j;
  bad["pipeline"]["dropout_rates"] = {1.5};
  CHECK_THROWS_AS(RunConfig::from_json(bad), std::invalid_argument);
}

TEST_CASE("a 1x0 grid produces a single all-zero fidelity row") {
  const BenchResult result = run_benchmark(small_config());
  REQUIRE(result.rows.size() == 1);
  const FidelityReport& row = result.rows[0];
  CHECK(row.clusters == 1);
  CHECK(row.dropout_rate == 0.0);
  CHECK(row.delta_nodes_pct == 0.0);
  CHECK(row.delta_edges_pct == 0.0);
  for (double v : row.affected_explanations_pct) CHECK(v == 0.0);
  for (double v : row.affected_nodes_pct) CHECK(v == 0.0);
  CHECK(result.sequential_invocations == 60);
}

TEST_CASE("the grid expands to one row per (clusters, dropout) cell") {
  RunConfig cfg = small_config();
  cfg.pipeline.clusters = {4, 8};
  cfg.pipeline.dropout_rates = {0.0, 0.5};
  cfg.pipeline.repeats = 3;
  const BenchResult result = run_benchmark(cfg);
  REQUIRE(result.rows.size() == 4);
  CHECK(result.rows[0].clusters == 4);
  CHECK(result.rows[0].dropout_rate == 0.0);
  CHECK(result.rows[3].clusters == 8);
  CHECK(result.rows[3].dropout_rate == 0.5);
  // Deterministic methods at dropout 0 match the baseline exactly.
  for (const auto& row : result.rows) {
    if (row.dropout_rate == 0.0)
      for (double v : row.affected_nodes_pct) CHECK(v == 0.0);
  }
}

TEST_CASE("non-timing fields reproduce byte for byte") {
  RunConfig cfg = small_config();
  cfg.pipeline.clusters = {4};
  cfg.pipeline.dropout_rates = {0.0, 0.7};
  const std::string a = strip_timing(run_benchmark(cfg).to_json()).dump();
  const std::string b = strip_timing(run_benchmark(cfg).to_json()).dump();
  CHECK(a == b);
}

TEST_CASE("memory-capped cells are skipped while the sweep continues") {
  RunConfig cfg = small_config();
  cfg.pipeline.clusters = {1, 6};
  // Cap between the two footprints: fits c=1, never the c=6 union.
  const Graph g = cfg.dataset.load();
  const std::int64_t c1 =
      full_reconstruct(g, partition(g, 1, cfg.pipeline.strategy, cfg.pipeline.seed), 2)
          .approx_memory_bytes();
  const std::int64_t c6 =
      full_reconstruct(g, partition(g, 6, cfg.pipeline.strategy, cfg.pipeline.seed), 2)
          .approx_memory_bytes();
  REQUIRE(c6 > c1);
  cfg.pipeline.memory_cap_bytes = (c1 + c6) / 2;
  const BenchResult result = run_benchmark(cfg);
  CHECK(result.rows.size() == 1);
  CHECK(result.rows[0].clusters == 1);
  REQUIRE_FALSE(result.skipped.empty());
  CHECK(result.skipped[0].find("skipped: memory") != std::string::npos);
}

TEST_CASE("benchmark writes the requested table files") {
  RunConfig cfg = small_config();
  const auto dir = std::filesystem::temp_directory_path();
  cfg.output.table_csv = (dir / "parex_table.csv").string();
  cfg.output.report_json = (dir / "parex_report.json").string();
  run_benchmark(cfg);
  std::ifstream csv(cfg.output.table_csv);
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("clusters,dropout_rate") == 0);
  std::ifstream report(cfg.output.report_json);
  REQUIRE(report.good());
  nlohmann::json j;
  report >> j;
  CHECK(j["rows"].size() == 1);
  std::remove(cfg.output.table_csv.c_str());
  std::remove(cfg.output.report_json.c_str());
}

TEST_CASE("verify passes on a healthy configuration") {
  const VerifyReport report = verify(small_config());
  for (const auto& check : report.checks) {
    INFO(check.name << ": " << check.detail);
    CHECK(check.passed);
  }
  CHECK(report.all_passed());
}

TEST_CASE("verify fails when a restored edge is dropped") {
  const VerifyReport report = verify(small_config(), FaultInjection::drop_restored_edge);
  bool equivalence_failed = false;
  for (const auto& check : report.checks)
    if (check.name == "equivalence" && !check.passed) equivalence_failed = true;
  CHECK(equivalence_failed);
  CHECK_FALSE(report.all_passed());
}

TEST_CASE("verify fails on a corrupted weights file") {
  RunConfig cfg = small_config();
  const auto path = (std::filesystem::temp_directory_path() / "broken.json").string();
  {
    std::ofstream out(path);
    out << "{ broken";
  }
  cfg.model.weights_path = path;
  const VerifyReport report = verify(cfg);
  CHECK_FALSE(report.all_passed());
  CHECK_FALSE(report.checks[0].passed);  // setup fails to load the weights
  std::remove(path.c_str());
}
