#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "handdi/autodiff.hpp"
#include "handdi/errors.hpp"
#include "handdi/hin.hpp"
#include "handdi/io.hpp"
#include "handdi/metapath.hpp"
#include "handdi/random.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

/// How per-node semantic scores are pooled into one meta-path score.
enum class SemanticReduce { Mean, Sum };

struct ModelConfig {
  std::size_t input_dim = 0;      // d0
  std::size_t hidden = 8;         // F, per head
  std::size_t heads = 8;          // K
  std::size_t semantic_dim = 128; // rows of W, length of b and q
  double leaky_slope = 0.2;
  double dropout = 0.6;
  UnaryKind activation = UnaryKind::Relu;
  SemanticReduce reduce = SemanticReduce::Mean;
  std::uint64_t seed = 0;
  std::vector<std::string> metapaths = {"DID-1", "DID-2", "DID-3", "DID-4"};

  std::size_t embedding_dim() const { return heads * hidden; }

  void validate() const {
    if (input_dim < 1 || hidden < 1 || heads < 1 || semantic_dim < 1) {
      throw ParameterError("model dimensions must all be at least 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
    if (metapaths.empty()) throw ParameterError("at least one meta-path is required");
  }

  /// key=value lines; parse_model_config() reads them back.
  std::string echo() const {
    std::ostringstream os;
    os << "input_dim=" << input_dim << '\n'
       << "hidden=" << hidden << '\n'
       << "heads=" << heads << '\n'
       << "semantic_dim=" << semantic_dim << '\n'
       << "leaky_slope=" << io::format_number(leaky_slope) << '\n'
       << "dropout=" << io::format_number(dropout) << '\n'
       << "activation=" << unary_name(activation) << '\n'
       << "reduce=" << (reduce == SemanticReduce::Mean ? "mean" : "sum") << '\n'
       << "seed=" << seed << '\n'
       << "metapaths=";
    for (std::size_t i = 0; i < metapaths.size(); ++i) os << (i ? "," : "") << metapaths[i];
    os << '\n';
    return os.str();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline UnaryKind parse_activation(std::string_view name) {
  for (auto k : {UnaryKind::Relu, UnaryKind::LeakyRelu, UnaryKind::Tanh, UnaryKind::Sigmoid, UnaryKind::Exp})
    if (name == unary_name(k)) return k;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

inline ModelConfig parse_model_config(std::string_view text) {
  ModelConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  auto as_size = [](std::string_view key, std::string_view v) {
    std::size_t out = 0;
    if (!io::parse_number(v, out)) throw ParseError("model config: bad value for " + std::string(key), 0);
    return out;
  };
  auto as_double = [](std::string_view key, std::string_view v) {
    double out = 0;
    if (!io::parse_number(v, out)) throw ParseError("model config: bad value for " + std::string(key), 0);
    return out;
  };
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string_view value = std::string_view(line).substr(eq + 1);
    if (key == "input_dim") c.input_dim = as_size(key, value);
    else if (key == "hidden") c.hidden = as_size(key, value);
    else if (key == "heads") c.heads = as_size(key, value);
    else if (key == "semantic_dim") c.semantic_dim = as_size(key, value);
    else if (key == "leaky_slope") c.leaky_slope = as_double(key, value);
    else if (key == "dropout") c.dropout = as_double(key, value);
    else if (key == "activation") c.activation = parse_activation(value);
    else if (key == "reduce") c.reduce = value == "sum" ? SemanticReduce::Sum : SemanticReduce::Mean;
    else if (key == "seed") c.seed = as_size(key, value);
    else if (key == "metapaths") {
      c.metapaths.clear();
      for (auto part : io::split(value, ','))
        if (!part.empty()) c.metapaths.emplace_back(part);
    }
  }
  return c;
}

/// All trainable tensors, in a fixed order: projection per head, attention
/// vector per (meta-path, head), then W, b, q of the meta-path attention.
template <std::floating_point T>
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;
  std::size_t heads = 0;
  std::size_t metapaths = 0;

  std::size_t projection_index(std::size_t head) const { return head; }
  std::size_t attention_index(std::size_t path, std::size_t head) const { return heads + path * heads + head; }
  std::size_t w_index() const { return heads + metapaths * heads; }
  std::size_t b_index() const { return w_index() + 1; }
  std::size_t q_index() const { return w_index() + 2; }

  const Tensor<T>& projection(std::size_t head) const { return tensors[projection_index(head)]; }
  const Tensor<T>& attention(std::size_t path, std::size_t head) const { return tensors[attention_index(path, head)]; }
  const Tensor<T>& w() const { return tensors[w_index()]; }
  const Tensor<T>& b() const { return tensors[b_index()]; }
  const Tensor<T>& q() const { return tensors[q_index()]; }

  /// Report group of tensor t: projection, attention, W, b or q.
  std::string group(std::size_t t) const {
    if (t < heads) return "projection";
    if (t < w_index()) return "attention";
    if (t == w_index()) return "W";
    if (t == b_index()) return "b";
    return "q";
  }

  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (std::size_t t = 0; t < tensors.size(); ++t) out.push_back(group(t));
    return out;
  }

  template <std::floating_point U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.names = names;
    out.heads = heads;
    out.metapaths = metapaths;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

template <std::floating_point T>
Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> out(rows, cols);
  for (auto& v : out.data()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
  return out;
}

/// Glorot-uniform matrices and zero bias, drawn from the init stream of
/// config.seed.
template <std::floating_point T>
ModelParams<T> init_params(const ModelConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, Stream::Init);
  ModelParams<T> p;
  p.heads = config.heads;
  p.metapaths = config.metapaths.size();
  const std::size_t f = config.hidden;
  for (std::size_t k = 0; k < config.heads; ++k) {
    p.names.push_back("projection." + std::to_string(k));
    p.tensors.push_back(glorot_uniform<T>(config.input_dim, f, config.input_dim, f, rng));
  }
  for (std::size_t v = 0; v < config.metapaths.size(); ++v) {
    for (std::size_t k = 0; k < config.heads; ++k) {
      p.names.push_back("attention." + config.metapaths[v] + "." + std::to_string(k));
      p.tensors.push_back(glorot_uniform<T>(2 * f, 1, 2 * f, 1, rng));
    }
  }
  const std::size_t d = config.embedding_dim();
  p.names.push_back("semantic.W");
  p.tensors.push_back(glorot_uniform<T>(config.semantic_dim, d, d, config.semantic_dim, rng));
  p.names.push_back("semantic.b");
  p.tensors.emplace_back(config.semantic_dim, 1);
  p.names.push_back("semantic.q");
  p.tensors.push_back(glorot_uniform<T>(config.semantic_dim, 1, config.semantic_dim, 1, rng));
  return p;
}

// ---------------------------------------------------------------------------
// Encoder and decoder building blocks (all recorded on the inputs' tape).

/// h' = h M for one head.
template <std::floating_point T>
Var<T> project(Var<T> features, Var<T> projection) {
  if (features.cols() != projection.rows()) {
    throw DimensionError("project: features have " + std::to_string(features.cols()) + " columns, projection expects " +
                         std::to_string(projection.rows()));
  }
  return matmul(features, projection);
}

/// alpha = masked softmax of leaky_relu(a_src . h'_i + a_dst . h'_j) over the
/// meta-path neighborhood of each row.
template <std::floating_point T>
Var<T> node_level_attention(Var<T> projected, const NeighborGraph& graph, Var<T> attention, double slope) {
  if (graph.size() != projected.rows()) {
    throw DimensionError("node_level_attention: graph '" + graph.name + "' has " + std::to_string(graph.size()) +
                         " nodes, features have " + std::to_string(projected.rows()));
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (!graph.adjacency(i, i)) throw ContractError("node_level_attention: drug " + std::to_string(i) + " lacks a self-loop");
  }
  auto logits = apply_unary(Unary::leaky_relu(slope), pair_scores(projected, attention));
  return masked_row_softmax(logits, graph.adjacency);
}

/// One head: activation(alpha h').
template <std::floating_point T>
Var<T> aggregate_head(Var<T> alpha, Var<T> projected, UnaryKind activation) {
  return apply_unary(Unary{activation, 0.0}, matmul(alpha, projected));
}

/// Heads aggregated independently and concatenated in head order.
template <std::floating_point T>
Var<T> aggregate_multihead(const std::vector<Var<T>>& alphas, const std::vector<Var<T>>& projected, UnaryKind activation) {
  if (alphas.size() != projected.size() || alphas.empty()) {
    throw DimensionError("aggregate_multihead: " + std::to_string(alphas.size()) + " attention maps vs " +
                         std::to_string(projected.size()) + " projections");
  }
  std::vector<Var<T>> heads;
  heads.reserve(alphas.size());
  for (std::size_t k = 0; k < alphas.size(); ++k) heads.push_back(aggregate_head(alphas[k], projected[k], activation));
  return concat_cols(heads);
}

template <std::floating_point T>
struct MetapathWeights {
  Var<T> scores;  // 1 x T, w
  Var<T> beta;    // 1 x T, softmax(w)
};

/// w[v] = pool_i q . tanh(W z_v[i] + b); beta = softmax(w).
template <std::floating_point T>
MetapathWeights<T> metapath_attention(const std::vector<Var<T>>& embeddings, Var<T> w, Var<T> b, Var<T> q,
                                      SemanticReduce reduce) {
  if (embeddings.empty()) throw DimensionError("metapath_attention: no meta-path embeddings");
  const std::size_t width = embeddings.front().cols();
  if (w.cols() != width || b.value().size() != w.rows() || q.value().size() != w.rows()) {
    throw DimensionError("metapath_attention: W " + shape_string(w.shape()) + ", b " + shape_string(b.shape()) +
                         ", q " + shape_string(q.shape()) + " vs embedding width " + std::to_string(width));
  }
  auto wt = transpose(w);
  std::vector<Var<T>> scores;
  for (const auto& z : embeddings) {
    if (z.cols() != width || z.rows() != embeddings.front().rows()) {
      throw DimensionError("metapath_attention: inconsistent embedding shapes");
    }
    auto hidden = apply_unary(Unary::tanh(), add_row_broadcast(matmul(z, wt), b));
    auto per_node = matmul(hidden, q);
    scores.push_back(reduce == SemanticReduce::Mean ? mean_all(per_node) : sum_all(per_node));
  }
  auto row = concat_cols(scores);
  auto beta = masked_row_softmax(row, Mask(1, embeddings.size(), true));
  return {row, beta};
}

/// Z = sum_v beta[v] z_v.
template <std::floating_point T>
Var<T> fuse(const std::vector<Var<T>>& embeddings, Var<T> beta) {
  if (embeddings.empty() || beta.value().size() != embeddings.size()) {
    throw DimensionError("fuse: " + std::to_string(embeddings.size()) + " embeddings vs beta " + shape_string(beta.shape()));
  }
  Var<T> out = scale(embeddings[0], pick(beta, 0, 0));
  for (std::size_t v = 1; v < embeddings.size(); ++v) out = add(out, scale(embeddings[v], pick(beta, 0, v)));
  return out;
}

/// Z[i] . Z[j] for every pair, as a column.
template <std::floating_point T>
Var<T> decode_logits(Var<T> embedding, std::span<const DrugPair> pairs) {
  std::vector<std::size_t> left, right;
  left.reserve(pairs.size());
  right.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    left.push_back(i);
    right.push_back(j);
  }
  return row_dot(gather_rows(embedding, std::move(left)), gather_rows(embedding, std::move(right)));
}

/// sigmoid(Z[i] . Z[j]) for every pair, as a column.
template <std::floating_point T>
Var<T> decode_pairs(Var<T> embedding, std::span<const DrugPair> pairs) {
  return apply_unary(Unary::sigmoid(), decode_logits(embedding, pairs));
}

/// Off-tape decoder for a single pair.
template <std::floating_point T>
T decode_pair(const Tensor<T>& embedding, std::size_t i, std::size_t j) {
  if (i >= embedding.rows() || j >= embedding.rows()) {
    throw DimensionError("decode_pair: index out of range for " + std::to_string(embedding.rows()) + " drugs");
  }
  T acc{0};
  for (std::size_t c = 0; c < embedding.cols(); ++c) acc += embedding(i, c) * embedding(j, c);
  return stable_sigmoid(acc);
}

/// Summed binary cross-entropy of the decoder output, the training
/// objective. Takes the pre-sigmoid pair logits.
template <std::floating_point T>
Var<T> bce_loss(Var<T> logits, std::span<const T> labels) {
  return bce_logits_sum(logits, labels);
}

/// Mean per-example BCE computed off-tape, for logging and model selection.
template <std::floating_point T>
double mean_bce(std::span<const T> predictions, std::span<const T> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("mean_bce: length mismatch");
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(static_cast<double>(predictions[i]), kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(predictions.size());
}

// ---------------------------------------------------------------------------

/// Full model, or one of the two ablations: node attention replaced by a
/// fixed random row-stochastic matrix, or meta-path weights fixed to 1/T.
enum class Variant { Full, FixedNodeAttention, UniformMetapath };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::FixedNodeAttention: return "MP";
    case Variant::UniformMetapath: return "N";
  }
  return "?";
}

template <std::floating_point T>
struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  Variant variant = Variant::Full;
  const std::vector<Tensor<T>>* fixed_attention = nullptr;  // per meta-path, FixedNodeAttention only
};

/// Everything produced by one forward pass. The tape is heap-pinned so the
/// Vars stay valid when the result moves.
template <std::floating_point T>
struct ForwardPass {
  std::unique_ptr<Tape<T>> tape = std::make_unique<Tape<T>>();
  std::vector<Var<T>> params;                  // aligned with ModelParams::tensors
  std::vector<std::vector<Var<T>>> attention;  // [meta-path][head], before dropout
  std::vector<Var<T>> metapath_embeddings;     // z_v
  Var<T> beta;
  Var<T> embedding;                            // Z
  Var<T> logits;                               // only when pairs were given
  Var<T> scores;                               // sigmoid(logits)
  bool has_scores = false;
};

/// Seeded row-stochastic matrices supported on each neighbor mask.
template <std::floating_point T>
std::vector<Tensor<T>> make_fixed_attention(const std::vector<NeighborGraph>& graphs, std::uint64_t seed) {
  std::vector<Tensor<T>> out;
  for (std::size_t v = 0; v < graphs.size(); ++v) {
    Rng rng = make_rng(seed, Stream::FixedAttention, v);
    const auto& mask = graphs[v].adjacency;
    Tensor<T> alpha(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.rows(); ++i) {
      double total = 0.0;
      std::vector<double> w(mask.cols(), 0.0);
      for (std::size_t j = 0; j < mask.cols(); ++j) {
        if (!mask(i, j)) continue;
        w[j] = 0.05 + uniform01(rng);
        total += w[j];
      }
      for (std::size_t j = 0; j < mask.cols(); ++j) alpha(i, j) = static_cast<T>(w[j] / total);
    }
    out.push_back(std::move(alpha));
  }
  return out;
}

/// Encoder over all drugs followed by the decoder on `pairs` (skipped when
/// empty). Graphs must follow config.metapaths order.
template <std::floating_point T>
ForwardPass<T> forward(const ModelConfig& config, const ModelParams<T>& params, const Tensor<T>& features,
                       const std::vector<NeighborGraph>& graphs, std::span<const DrugPair> pairs,
                       const ForwardOptions<T>& options = {}) {
  if (graphs.size() != config.metapaths.size() || params.metapaths != graphs.size() || params.heads != config.heads) {
    throw DimensionError("forward: " + std::to_string(graphs.size()) + " neighbor graphs for " +
                         std::to_string(config.metapaths.size()) + " configured meta-paths");
  }
  if (features.cols() != config.input_dim) {
    throw DimensionError("forward: features have " + std::to_string(features.cols()) + " columns, model expects " +
                         std::to_string(config.input_dim));
  }
  if (options.variant == Variant::FixedNodeAttention &&
      (!options.fixed_attention || options.fixed_attention->size() != graphs.size())) {
    throw ContractError("forward: fixed-attention variant needs one fixed matrix per meta-path");
  }

  ForwardPass<T> pass;
  auto& tape = *pass.tape;
  for (const auto& t : params.tensors) pass.params.push_back(tape.parameter(t));
  Rng drop_rng = make_rng(options.dropout_seed, Stream::Dropout);

  auto h = dropout(tape.constant(features), config.dropout, drop_rng, options.training);
  std::vector<Var<T>> projected;
  for (std::size_t k = 0; k < config.heads; ++k) projected.push_back(project(h, pass.params[params.projection_index(k)]));

  pass.attention.resize(graphs.size());
  for (std::size_t v = 0; v < graphs.size(); ++v) {
    std::vector<Var<T>> dropped;
    for (std::size_t k = 0; k < config.heads; ++k) {
      Var<T> alpha;
      if (options.variant == Variant::FixedNodeAttention) {
        alpha = tape.constant((*options.fixed_attention)[v]);
      } else {
        alpha = node_level_attention(projected[k], graphs[v], pass.params[params.attention_index(v, k)], config.leaky_slope);
      }
      pass.attention[v].push_back(alpha);
      dropped.push_back(dropout(alpha, config.dropout, drop_rng, options.training));
    }
    pass.metapath_embeddings.push_back(aggregate_multihead(dropped, projected, config.activation));
  }

  if (options.variant == Variant::UniformMetapath) {
    const std::size_t n = graphs.size();
    pass.beta = tape.constant(Tensor<T>(1, n, static_cast<T>(1.0 / static_cast<double>(n))));
  } else {
    pass.beta = metapath_attention(pass.metapath_embeddings, pass.params[params.w_index()], pass.params[params.b_index()],
                                   pass.params[params.q_index()], config.reduce)
                    .beta;
  }
  pass.embedding = fuse(pass.metapath_embeddings, pass.beta);
  if (!pairs.empty()) {
    pass.logits = decode_logits(pass.embedding, pairs);
    pass.scores = apply_unary(Unary::sigmoid(), pass.logits);
    pass.has_scores = true;
  }
  return pass;
}

}  // namespace handdi
