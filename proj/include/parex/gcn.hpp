#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parex/graph.hpp"
#include "parex/matrix.hpp"
#include "parex/rng.hpp"

namespace parex {

// ReLU backward variants. Only the mask differs: standard keeps entries
// where the forward pre-activation was positive, deconv keeps positive
// upstream gradients, guided applies both masks.
enum class BackwardRule { standard, deconv, guided };

inline BackwardRule backward_rule_from_string(const std::string& s) {
  if (s == "standard" || s == "saliency") return BackwardRule::standard;
  if (s == "deconv" || s == "deconvnet") return BackwardRule::deconv;
  if (s == "guided") return BackwardRule::guided;
  throw std::invalid_argument("unknown backward rule: " + s);
}

// Symmetric normalization with one implicit self-loop per node:
//   w(u->v) = 1/sqrt(d(u) d(v)),  self(v) = 1/d(v),  d = norm_degree.
// Accumulation order is fixed (in-sources ascending, self term last) so the
// same neighborhood produces bit-identical rows in any host graph.
inline Matrix propagate(const Graph& g, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const std::int64_t cols = m.cols();
  std::vector<double> inv_sqrt(g.node_count);
  for (NodeId v = 0; v < g.node_count; ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.norm_degree[v]);
  for (NodeId v = 0; v < g.node_count; ++v) {
    double* dst = out.row(v);
    for (NodeId u : g.in_neighbors(v)) {
      const double w = inv_sqrt[u] * inv_sqrt[v];
      const double* src = m.row(u);
      for (std::int64_t j = 0; j < cols; ++j) dst[j] += w * src[j];
    }
    const double self = 1.0 / g.norm_degree[v];
    const double* src = m.row(v);
    for (std::int64_t j = 0; j < cols; ++j) dst[j] += self * src[j];
  }
  return out;
}

// Transposed propagation (gradient direction): out-targets ascending, self
// term last, mirroring propagate().
inline Matrix propagate_transpose(const Graph& g, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const std::int64_t cols = m.cols();
  std::vector<double> inv_sqrt(g.node_count);
  for (NodeId v = 0; v < g.node_count; ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.norm_degree[v]);
  for (NodeId u = 0; u < g.node_count; ++u) {
    double* dst = out.row(u);
    for (NodeId v : g.out_neighbors(u)) {
      const double w = inv_sqrt[u] * inv_sqrt[v];
      const double* src = m.row(v);
      for (std::int64_t j = 0; j < cols; ++j) dst[j] += w * src[j];
    }
    const double self = 1.0 / g.norm_degree[u];
    const double* src = m.row(u);
    for (std::int64_t j = 0; j < cols; ++j) dst[j] += self * src[j];
  }
  return out;
}

// L-layer graph convolution; ReLU between layers, none after the last.
struct GcnModel {
  int layer_count = 2;
  std::vector<Matrix> weights;  // weights[l]: F_in x F_out
  double train_dropout = 0.0;

  std::int64_t input_dim() const { return weights.front().rows(); }
  std::int64_t class_count() const { return weights.back().cols(); }

  static GcnModel init(std::int64_t feature_dim, std::int64_t hidden, std::int64_t classes,
                       int layers, std::uint64_t seed) {
    if (layers < 1) throw std::invalid_argument("layer_count must be >= 1");
    GcnModel model;
    model.layer_count = layers;
    auto rng = make_engine(seed, 0x6763ULL);
    for (int l = 0; l < layers; ++l) {
      const std::int64_t fan_in = l == 0 ? feature_dim : hidden;
      const std::int64_t fan_out = l == layers - 1 ? classes : hidden;
      Matrix w(fan_in, fan_out);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& value : w.data()) value = dist(rng);
      model.weights.push_back(std::move(w));
    }
    return model;
  }

  void check_compatible(const Graph& g) const {
    if (g.feature_dim() != input_dim())
      throw std::invalid_argument("feature dim " + std::to_string(g.feature_dim()) +
                                  " does not match model input " + std::to_string(input_dim()));
  }

  nlohmann::json to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const Matrix& w : weights)
      layers.push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"data", w.data()}});
    return {{"layer_count", layer_count}, {"train_dropout", train_dropout},
            {"weights", layers}};
  }

  static GcnModel from_json(const nlohmann::json& j) {
    GcnModel model;
    model.layer_count = j.at("layer_count").get<int>();
    model.train_dropout = j.value("train_dropout", 0.0);
    for (const auto& layer : j.at("weights")) {
      Matrix w(layer.at("rows").get<std::int64_t>(), layer.at("cols").get<std::int64_t>());
      const auto& data = layer.at("data");
      if (data.size() != w.data().size())
        throw std::runtime_error("weight tensor size does not match its shape header");
      for (std::size_t i = 0; i < w.data().size(); ++i) w.data()[i] = data[i].get<double>();
      model.weights.push_back(std::move(w));
    }
    if (static_cast<int>(model.weights.size()) != model.layer_count)
      throw std::runtime_error("layer_count does not match stored weights");
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write weights file: " + path);
    out << to_json().dump(2) << '\n';
  }

  static GcnModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open weights file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("corrupted weights file " + path + ": " + e.what());
    }
    return from_json(j);
  }
};

struct ForwardTrace {
  std::vector<Matrix> propagated;      // P_l, input to the weight multiply
  std::vector<Matrix> pre_activation;  // Z_l = P_l W_l
  Matrix logits;
};

inline ForwardTrace forward_trace(const GcnModel& model, const Graph& g) {
  model.check_compatible(g);
  ForwardTrace trace;
  Matrix h = g.features;
  for (int l = 0; l < model.layer_count; ++l) {
    trace.propagated.push_back(propagate(g, h));
    trace.pre_activation.push_back(matmul(trace.propagated.back(), model.weights[l]));
    h = l + 1 < model.layer_count ? relu(trace.pre_activation.back())
                                  : trace.pre_activation.back();
  }
  trace.logits = h;
  return trace;
}

inline Matrix forward(const GcnModel& model, const Graph& g) {
  return forward_trace(model, g).logits;
}

inline Matrix relu_backward(const Matrix& upstream, const Matrix& pre_activation,
                            BackwardRule rule) {
  Matrix out(upstream.rows(), upstream.cols());
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const double u = upstream.data()[i];
    const double z = pre_activation.data()[i];
    bool keep = true;
    if (rule != BackwardRule::deconv) keep &= z > 0.0;   // forward mask
    if (rule != BackwardRule::standard) keep &= u > 0.0;  // upstream mask
    out.data()[i] = keep ? u : 0.0;
  }
  return out;
}

struct TargetClass {
  NodeId target = 0;
  std::int32_t cls = 0;
};

// d(sum_t logits[t, cls_t]) / dX in one reverse sweep over the trace.
inline Matrix input_gradient_multi(const GcnModel& model, const Graph& g,
                                   const ForwardTrace& trace,
                                   std::span<const TargetClass> targets, BackwardRule rule) {
  Matrix g_z(g.node_count, model.class_count());
  for (const auto& tc : targets) {
    g.check_node(tc.target);
    if (tc.cls < 0 || tc.cls >= model.class_count())
      throw std::out_of_range("class index out of range");
    g_z(tc.target, tc.cls) += 1.0;
  }
  Matrix g_h;
  for (int l = model.layer_count - 1; l >= 0; --l) {
    const Matrix g_p = matmul_transposed(g_z, model.weights[l]);
    g_h = propagate_transpose(g, g_p);
    if (l > 0) g_z = relu_backward(g_h, trace.pre_activation[l - 1], rule);
  }
  return g_h;  // n x F
}

inline Matrix input_gradient(const GcnModel& model, const Graph& g, NodeId target,
                             std::int32_t cls, BackwardRule rule) {
  const ForwardTrace trace = forward_trace(model, g);
  const TargetClass tc{target, cls};
  return input_gradient_multi(model, g, trace, {&tc, 1}, rule);
}

inline std::int32_t argmax_class(const Matrix& logits, NodeId row) {
  std::int32_t best = 0;
  for (std::int64_t j = 1; j < logits.cols(); ++j)
    if (logits(row, j) > logits(row, best)) best = static_cast<std::int32_t>(j);
  return best;
}

// Demonstration of why naive batching corrupts attributions: one backward
// pass for several targets yields, on shared neighbors, the sum of the
// per-target gradients rather than any individual one.
struct MixedGradientReport {
  double linearity_max_abs_dev = 0.0;  // |single pass - sum of per-target|
  std::vector<NodeId> shared_rows;     // rows inside >= 2 receptive fields
  std::vector<NodeId> mixed_rows;      // shared rows differing from every per-target row
  bool vacuous = false;                // no shared neighbors, nothing to show
};

inline MixedGradientReport mixed_gradient_demo(const GcnModel& model, const Graph& g,
                                               std::span<const NodeId> targets) {
  if (targets.size() < 2)
    throw std::invalid_argument("gradient mixing needs at least two targets");
  const ForwardTrace trace = forward_trace(model, g);

  std::vector<TargetClass> tcs;
  tcs.reserve(targets.size());
  for (NodeId t : targets) tcs.push_back({t, argmax_class(trace.logits, t)});

  std::vector<Matrix> separate;
  separate.reserve(targets.size());
  for (const TargetClass& tc : tcs)
    separate.push_back(input_gradient_multi(model, g, trace, {&tc, 1}, BackwardRule::standard));
  const Matrix mixed =
      input_gradient_multi(model, g, trace, tcs, BackwardRule::standard);

  Matrix sum(g.node_count, g.feature_dim());
  for (const Matrix& m : separate)
    for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += m.data()[i];

  MixedGradientReport report;
  report.linearity_max_abs_dev = max_abs_diff(mixed, sum);

  std::vector<int> membership(g.node_count, 0);
  for (NodeId t : targets)
    for (NodeId v : khop_in_neighborhood(g, t, model.layer_count).members) ++membership[v];
  for (NodeId v = 0; v < g.node_count; ++v) {
    if (membership[v] < 2) continue;
    report.shared_rows.push_back(v);
    bool differs_from_all = true;
    for (const Matrix& m : separate) {
      double diff = 0.0;
      for (std::int64_t j = 0; j < g.feature_dim(); ++j)
        diff = std::max(diff, std::abs(mixed(v, j) - m(v, j)));
      differs_from_all &= diff > 1e-12;
    }
    if (differs_from_all) report.mixed_rows.push_back(v);
  }
  report.vacuous = report.shared_rows.empty();
  return report;
}

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

struct TrainStats {
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  std::int64_t labeled_nodes = 0;
};

inline double train_accuracy(const GcnModel& model, const Graph& g) {
  const Matrix logits = forward(model, g);
  std::int64_t correct = 0, labeled = 0;
  for (NodeId v = 0; v < g.node_count; ++v) {
    if (!g.has_labels() || g.labels[v] < 0) continue;
    ++labeled;
    if (argmax_class(logits, v) == g.labels[v]) ++correct;
  }
  return labeled ? static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;
}

// Full-batch gradient descent on the cross-entropy of labeled nodes. Only a
// sanity trainer: explanations need a non-degenerate model, nothing more.
inline GcnModel train_minimal(GcnModel model, const Graph& g, const TrainConfig& cfg,
                              TrainStats* stats = nullptr) {
  model.check_compatible(g);
  if (!g.has_labels()) throw std::invalid_argument("training needs labels");
  std::vector<NodeId> labeled;
  for (NodeId v = 0; v < g.node_count; ++v)
    if (g.labels[v] >= 0) labeled.push_back(v);
  if (labeled.empty()) throw std::invalid_argument("training needs at least one labeled node");
  const double inv_labeled = 1.0 / static_cast<double>(labeled.size());
  const int layers = model.layer_count;

  double loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Forward with inverted dropout on hidden activations.
    std::vector<Matrix> propagated(layers), pre_activation(layers), mask(layers);
    Matrix h = g.features;
    for (int l = 0; l < layers; ++l) {
      propagated[l] = propagate(g, h);
      pre_activation[l] = matmul(propagated[l], model.weights[l]);
      if (l + 1 < layers) {
        h = relu(pre_activation[l]);
        if (model.train_dropout > 0.0) {
          mask[l] = Matrix(h.rows(), h.cols());
          const double scale = 1.0 / (1.0 - model.train_dropout);
          for (std::size_t i = 0; i < h.data().size(); ++i) {
            const bool keep = unit_draw(cfg.seed, 0xd0ULL, static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(l),
                                        static_cast<std::uint64_t>(i)) >= model.train_dropout;
            mask[l].data()[i] = keep ? scale : 0.0;
            h.data()[i] *= mask[l].data()[i];
          }
        }
      }
    }
    const Matrix& logits = pre_activation[layers - 1];

    // Softmax cross-entropy gradient on labeled rows.
    Matrix g_z(g.node_count, model.class_count());
    loss = 0.0;
    for (NodeId v : labeled) {
      double max_logit = logits(v, 0);
      for (std::int64_t j = 1; j < logits.cols(); ++j)
        max_logit = std::max(max_logit, logits(v, j));
      double denom = 0.0;
      for (std::int64_t j = 0; j < logits.cols(); ++j)
        denom += std::exp(logits(v, j) - max_logit);
      for (std::int64_t j = 0; j < logits.cols(); ++j) {
        const double p = std::exp(logits(v, j) - max_logit) / denom;
        g_z(v, j) = (p - (j == g.labels[v] ? 1.0 : 0.0)) * inv_labeled;
        if (j == g.labels[v]) loss -= std::log(std::max(p, 1e-300)) * inv_labeled;
      }
    }

    for (int l = layers - 1; l >= 0; --l) {
      const Matrix g_w = transposed_matmul(propagated[l], g_z);
      if (l > 0) {
        Matrix g_h = propagate_transpose(g, matmul_transposed(g_z, model.weights[l]));
        if (model.train_dropout > 0.0)
          for (std::size_t i = 0; i < g_h.data().size(); ++i)
            g_h.data()[i] *= mask[l - 1].data()[i];
        g_z = relu_backward(g_h, pre_activation[l - 1], BackwardRule::standard);
      }
      for (std::size_t i = 0; i < model.weights[l].data().size(); ++i)
        model.weights[l].data()[i] -= cfg.learning_rate * g_w.data()[i];
    }
  }

  if (stats) {
    stats->final_loss = loss;
    stats->train_accuracy = train_accuracy(model, g);
    stats->labeled_nodes = static_cast<std::int64_t>(labeled.size());
  }
  return model;
}

}  // namespace parex
