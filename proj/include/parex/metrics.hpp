#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parex/explain.hpp"

namespace parex {

// Universe of (target, neighbor) pairs in the denominator of the affected
// metrics. Pairs scored by the baseline is the default; a neighbor present
// on only one side is compared against 0 either way.
enum class PairUniverse { baseline, union_of_pairs };

namespace detail {

struct AffectedCounts {
  std::int64_t affected_pairs = 0;
  std::int64_t baseline_pairs = 0;
  std::int64_t union_pairs = 0;
  std::int64_t affected_targets = 0;
  std::int64_t targets = 0;
};

inline AffectedCounts affected_counts(std::span<const Explanation> base,
                                      std::span<const Explanation> test, double threshold) {
  if (base.size() != test.size())
    throw std::invalid_argument("explanation lists differ in length");
  AffectedCounts counts;
  counts.targets = static_cast<std::int64_t>(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Explanation& b = base[i];
    const Explanation& t = test[i];
    if (b.target != t.target) throw std::invalid_argument("target sets differ");
    counts.baseline_pairs += static_cast<std::int64_t>(b.nodes.size());
    bool any = false;
    std::size_t bi = 0, ti = 0;
    while (bi < b.nodes.size() || ti < t.nodes.size()) {
      double bv = 0.0, tv = 0.0;
      if (ti >= t.nodes.size() || (bi < b.nodes.size() && b.nodes[bi] < t.nodes[ti])) {
        bv = b.normalized[bi++];
      } else if (bi >= b.nodes.size() || t.nodes[ti] < b.nodes[bi]) {
        tv = t.normalized[ti++];
      } else {
        bv = b.normalized[bi++];
        tv = t.normalized[ti++];
      }
      ++counts.union_pairs;
      if (std::abs(bv - tv) > threshold) {
        ++counts.affected_pairs;
        any = true;
      }
    }
    if (any) ++counts.affected_targets;
  }
  return counts;
}

}  // namespace detail

// Percentage of (target, neighbor) scores moved by more than the threshold.
inline double affected_nodes(std::span<const Explanation> base,
                             std::span<const Explanation> test, double threshold,
                             PairUniverse universe = PairUniverse::baseline) {
  const auto counts = detail::affected_counts(base, test, threshold);
  const std::int64_t denom = universe == PairUniverse::baseline ? counts.baseline_pairs
                                                                : counts.union_pairs;
  return denom == 0 ? 0.0
                    : 100.0 * static_cast<double>(counts.affected_pairs) /
                          static_cast<double>(denom);
}

// Percentage of explanations containing at least one affected node.
inline double affected_explanations(std::span<const Explanation> base,
                                    std::span<const Explanation> test, double threshold) {
  const auto counts = detail::affected_counts(base, test, threshold);
  return counts.targets == 0 ? 0.0
                             : 100.0 * static_cast<double>(counts.affected_targets) /
                                   static_cast<double>(counts.targets);
}

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> thresholds{0.2, 0.5, 0.7};
  return thresholds;
}

// One benchmark cell: a (clusters, dropout rate) configuration with its
// fidelity metrics against the full-reconstruction baseline.
struct FidelityReport {
  std::int32_t clusters = 1;
  double dropout_rate = 0.0;
  double exec_time_s = 0.0;
  double setup_time_s = 0.0;  // partition + reconstruction, reported apart
  double delta_nodes_pct = 0.0;
  double delta_edges_pct = 0.0;
  std::vector<double> thresholds = default_thresholds();
  std::vector<double> affected_explanations_pct;  // per threshold
  std::vector<double> affected_nodes_pct;         // per threshold

  std::string method;
  std::string strategy;
  std::string dataset;
  std::string model;

  nlohmann::json to_json() const {
    return {{"clusters", clusters},
            {"dropout_rate", dropout_rate},
            {"exec_time_s", exec_time_s},
            {"setup_time_s", setup_time_s},
            {"delta_nodes_pct", delta_nodes_pct},
            {"delta_edges_pct", delta_edges_pct},
            {"thresholds", thresholds},
            {"affected_explanations_pct", affected_explanations_pct},
            {"affected_nodes_pct", affected_nodes_pct},
            {"method", method},
            {"strategy", strategy},
            {"dataset", dataset},
            {"model", model}};
  }
};

enum class TableFormat { csv, json, markdown };

inline TableFormat table_format_from_string(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  if (s == "markdown") return TableFormat::markdown;
  throw std::invalid_argument("unknown table format: " + s);
}

// Rows sorted by (clusters, dropout rate); 11 columns in the order: clusters,
// dropout rate, execution time, delta nodes, delta edges, affected
// explanations at {0.2, 0.5, 0.7}, affected nodes at {0.2, 0.5, 0.7}.
inline std::string emit_table(std::vector<FidelityReport> reports, TableFormat format) {
  if (reports.empty()) throw std::invalid_argument("no reports to emit");
  std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return std::pair(a.clusters, a.dropout_rate) < std::pair(b.clusters, b.dropout_rate);
  });

  const auto fmt = [](double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << x;
    return os.str();
  };
  const auto row_values = [&](const FidelityReport& r) {
    std::vector<std::string> values{std::to_string(r.clusters), fmt(r.dropout_rate),
                                    fmt(r.exec_time_s), fmt(r.delta_nodes_pct),
                                    fmt(r.delta_edges_pct)};
    for (std::size_t i = 0; i < 3; ++i)
      values.push_back(fmt(i < r.affected_explanations_pct.size()
                               ? r.affected_explanations_pct[i]
                               : 0.0));
    for (std::size_t i = 0; i < 3; ++i)
      values.push_back(fmt(i < r.affected_nodes_pct.size() ? r.affected_nodes_pct[i] : 0.0));
    return values;
  };
  static const std::vector<std::string> header{
      "clusters",          "dropout_rate",      "exec_time_s",
      "delta_nodes_pct",   "delta_edges_pct",   "affected_expl_0.2",
      "affected_expl_0.5", "affected_expl_0.7", "affected_nodes_0.2",
      "affected_nodes_0.5", "affected_nodes_0.7"};

  std::ostringstream out;
  switch (format) {
    case TableFormat::csv: {
      for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
      out << '\n';
      for (const auto& r : reports) {
        const auto values = row_values(r);
        for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i];
        out << '\n';
      }
      break;
    }
    case TableFormat::markdown: {
      out << '|';
      for (const auto& h : header) out << ' ' << h << " |";
      out << "\n|";
      for (std::size_t i = 0; i < header.size(); ++i) out << " ---: |";
      out << '\n';
      for (const auto& r : reports) {
        out << '|';
        for (const auto& v : row_values(r)) out << ' ' << v << " |";
        out << '\n';
      }
      break;
    }
    case TableFormat::json: {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : reports) rows.push_back(r.to_json());
      out << rows.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

}  // namespace parex
