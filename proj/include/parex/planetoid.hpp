#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "parex/graph.hpp"
#include "json.hpp"

namespace parex {

// Raw citation-network text format:
//   content file: <paper id> <F feature values> <class label>
//   cites file:   <cited id> <citing id>        (citing -> cited edge)
// Ids may be arbitrary tokens; they are re-indexed densely in file order.

struct LoadReport {
  std::int64_t nodes = 0;
  std::int64_t feature_dim = 0;
  std::int64_t classes = 0;
  std::int64_t cite_rows = 0;
  std::int64_t edges_dropped_unknown = 0;
  std::int64_t duplicates_removed = 0;
  std::int64_t self_loops_removed = 0;
  std::int64_t directed_edges = 0;  // final, after preprocessing
  bool symmetrized = true;

  nlohmann::json to_json() const {
    return {{"nodes", nodes},
            {"feature_dim", feature_dim},
            {"classes", classes},
            {"cite_rows", cite_rows},
            {"edges_dropped_unknown", edges_dropped_unknown},
            {"duplicates_removed", duplicates_removed},
            {"self_loops_removed", self_loops_removed},
            {"directed_edges", directed_edges},
            {"symmetrized", symmetrized}};
  }
};

struct PlanetoidData {
  Graph graph;
  LoadReport report;
  std::vector<std::string> node_ids;     // dense index -> original id
  std::vector<std::string> class_names;  // class index -> label string
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  return tokens;
}

inline double parse_value(const std::string& tok, const char* file, std::int64_t line_no) {
  double value = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw std::runtime_error(std::string(file) + ":" + std::to_string(line_no) +
                             ": not a numeric feature value: '" + tok + "'");
  return value;
}

}  // namespace detail

inline PlanetoidData load_planetoid(const std::string& content_path,
                                    const std::string& cites_path, bool symmetrize = true) {
  std::ifstream content(content_path);
  if (!content) throw std::runtime_error("cannot open content file: " + content_path);

  std::vector<std::vector<double>> feature_rows;
  std::vector<std::string> row_labels;
  PlanetoidData data;
  std::unordered_map<std::string, NodeId> index_of;

  std::string line;
  std::int64_t line_no = 0;
  std::int64_t feature_dim = -1;
  while (std::getline(content, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 3)
      throw std::runtime_error("content:" + std::to_string(line_no) +
                               ": expected <id> <features...> <label>");
    const std::int64_t f = static_cast<std::int64_t>(tokens.size()) - 2;
    if (feature_dim < 0) feature_dim = f;
    if (f != feature_dim)
      throw std::runtime_error("content:" + std::to_string(line_no) + ": expected " +
                               std::to_string(feature_dim) + " feature values, got " +
                               std::to_string(f));
    if (!index_of.emplace(tokens.front(), static_cast<NodeId>(feature_rows.size())).second)
      throw std::runtime_error("content:" + std::to_string(line_no) + ": duplicate node id '" +
                               tokens.front() + "'");
    data.node_ids.push_back(tokens.front());
    std::vector<double> row(feature_dim);
    for (std::int64_t j = 0; j < feature_dim; ++j)
      row[j] = detail::parse_value(tokens[j + 1], "content", line_no);
    feature_rows.push_back(std::move(row));
    row_labels.push_back(tokens.back());
  }
  if (feature_rows.empty()) throw std::runtime_error("content file has no rows: " + content_path);

  const NodeId n = static_cast<NodeId>(feature_rows.size());

  // Class labels sorted for a stable index assignment.
  std::map<std::string, std::int32_t> class_index;
  for (const auto& label : row_labels) class_index.emplace(label, 0);
  for (auto& [name, idx] : class_index) {
    idx = static_cast<std::int32_t>(data.class_names.size());
    data.class_names.push_back(name);
  }
  std::vector<std::int32_t> labels(n);
  for (NodeId i = 0; i < n; ++i) labels[i] = class_index.at(row_labels[i]);

  GraphBuilder builder(n);
  Matrix features(n, feature_dim);
  for (NodeId i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < feature_dim; ++j) features(i, j) = feature_rows[i][j];
  builder.set_features(std::move(features));
  builder.set_labels(std::move(labels));

  std::ifstream cites(cites_path);
  if (!cites) throw std::runtime_error("cannot open cites file: " + cites_path);
  line_no = 0;
  LoadReport& report = data.report;
  while (std::getline(cites, line)) {
    ++line_no;
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 2)
      throw std::runtime_error("cites:" + std::to_string(line_no) +
                               ": expected <cited id> <citing id>");
    ++report.cite_rows;
    const auto cited = index_of.find(tokens[0]);
    const auto citing = index_of.find(tokens[1]);
    if (cited == index_of.end() || citing == index_of.end()) {
      ++report.edges_dropped_unknown;
      continue;
    }
    builder.add_edge(citing->second, cited->second);
  }

  BuildStats stats;
  data.graph = builder.build(symmetrize, &stats);
  report.nodes = n;
  report.feature_dim = feature_dim;
  report.classes = static_cast<std::int64_t>(data.class_names.size());
  report.duplicates_removed = stats.duplicates_removed;
  report.self_loops_removed = stats.self_loops_removed;
  report.directed_edges = data.graph.edge_count;
  report.symmetrized = symmetrize;
  return data;
}

// Writes a graph back to the raw text format. Reloading with
// symmetrize=false reproduces the graph under the stored id map.
inline void save_planetoid(const Graph& g, const std::vector<std::string>& node_ids,
                           const std::vector<std::string>& class_names,
                           const std::string& content_path, const std::string& cites_path) {
  if (static_cast<NodeId>(node_ids.size()) != g.node_count)
    throw std::invalid_argument("node id map size mismatch");
  std::ofstream content(content_path);
  if (!content) throw std::runtime_error("cannot write content file: " + content_path);
  for (NodeId i = 0; i < g.node_count; ++i) {
    content << node_ids[i];
    for (std::int64_t j = 0; j < g.feature_dim(); ++j) content << ' ' << g.features(i, j);
    const std::int32_t label = g.has_labels() ? g.labels[i] : 0;
    content << ' ' << (label >= 0 && label < static_cast<std::int32_t>(class_names.size())
                           ? class_names[label]
                           : std::string("unlabeled"))
            << '\n';
  }
  std::ofstream cites(cites_path);
  if (!cites) throw std::runtime_error("cannot write cites file: " + cites_path);
  for (NodeId u = 0; u < g.node_count; ++u)
    for (NodeId v : g.out_neighbors(u)) cites << node_ids[v] << ' ' << node_ids[u] << '\n';
}

}  // namespace parex
