#include "gcahng/gcl.hpp"

#include "gcahng/error.hpp"

#include <cmath>
#include <string>

namespace gcahng {

void GraphNetConfig::validate(Index dim) const {
  if (steps < 1) throw ConfigError("graph propagation steps K must be >= 1, got " + std::to_string(steps));
  if (heads < 1) throw ConfigError("attention heads H must be >= 1");
  if (dim % heads != 0) {
    throw ConfigError("embedding dim " + std::to_string(dim) + " is not divisible by H = " +
                      std::to_string(heads));
  }
  if (ffn_expansion < 1) throw ConfigError("ffn_expansion must be >= 1");
}

CorrelationGraph init_graph(const Var& z, std::span<const int> labels) {
  const Index b = z.rows();
  if (static_cast<Index>(labels.size()) != b) throw ShapeError("init_graph: label count mismatch");
  std::vector<Index> left, right;
  left.reserve(static_cast<std::size_t>(b * b));
  right.reserve(static_cast<std::size_t>(b * b));
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  CorrelationGraph g;
  g.nodes = z;
  g.edges = ad::mul(ad::gather_rows(z, left), ad::gather_rows(z, right));
  g.labels.assign(labels.begin(), labels.end());
  return g;
}

ad::Mask positive_mask(std::span<const int> labels) {
  const auto b = static_cast<Index>(labels.size());
  ad::Mask mask(b, b);
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j)
      mask(i, j) = i == j || labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
  return mask;
}

NodeBlock::NodeBlock(Index dim, const GraphNetConfig& cfg, Rng& rng)
    : query(dim, dim, rng),
      key(dim, dim, rng),
      value(dim, dim, rng),
      output(dim, dim, rng),
      norm1(dim),
      norm2(dim),
      ffn(dim, cfg.ffn_expansion, rng) {}

Var NodeBlock::forward(const Var& nodes, const Var& edges, std::span<const int> labels,
                       const GraphNetConfig& cfg, std::vector<Matrix>* attention) const {
  const Index b = nodes.rows(), d = nodes.cols();
  const Index width = d / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  const ad::Mask mask = positive_mask(labels);

  const Var q = query(nodes), k = key(nodes), v = value(nodes);
  std::vector<Var> heads;
  for (Index h = 0; h < cfg.heads; ++h) {
    const Var scores = ad::scale(
        ad::matmul_nt(ad::slice_cols(q, h * width, width), ad::slice_cols(k, h * width, width)), inv_sqrt);
    const Var weights = ad::masked_softmax_rows(scores, mask);
    if (attention) attention->push_back(weights.value());
    heads.push_back(ad::matmul(weights, ad::slice_cols(v, h * width, width)));
  }
  Var pre = ad::add(nodes, output(ad::hcat(heads)));
  if (cfg.edge_sum) pre = ad::add(pre, ad::block_sum_rows(edges, b));
  if (cfg.bypass_ffn_and_norm) return pre;
  const Var mid = norm1(pre);
  return norm2(ad::add(ffn(mid), mid));
}

void NodeBlock::collect(ParameterList& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
  norm1.collect(out, prefix + ".norm1");
  norm2.collect(out, prefix + ".norm2");
  ffn.collect(out, prefix + ".ffn");
}

EdgeBlock::EdgeBlock(Index dim, const GraphNetConfig& cfg, Rng& rng)
    : query(dim, dim, rng),
      key(dim, dim, rng),
      value(dim, dim, rng),
      output(dim, dim, rng),
      norm1(dim),
      norm2(dim),
      ffn(dim, cfg.ffn_expansion, rng) {}

Var EdgeBlock::forward(const Var& nodes, const Var& edges, const GraphNetConfig& cfg,
                       Matrix* attention) const {
  const Index b = nodes.rows(), d = nodes.cols();
  const Index width = d / cfg.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Index> left, right;
  left.reserve(static_cast<std::size_t>(b * b));
  right.reserve(static_cast<std::size_t>(b * b));
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j) {
      left.push_back(i);
      right.push_back(j);
    }

  // Each edge query attends over exactly its two endpoint tokens; a softmax
  // over two scores is sigmoid of their difference.
  const Var q = query(edges);
  const Var k = key(nodes), v = value(nodes);
  const Var score_i = ad::scale(ad::head_sum(ad::mul(q, ad::gather_rows(k, left)), cfg.heads), inv_sqrt);
  const Var score_j = ad::scale(ad::head_sum(ad::mul(q, ad::gather_rows(k, right)), cfg.heads), inv_sqrt);
  const Var w_i = ad::sigmoid(ad::sub(score_i, score_j));
  const Var w_j = ad::sigmoid(ad::sub(score_j, score_i));
  if (attention) {
    attention->resize(b * b, 2 * cfg.heads);
    for (Index h = 0; h < cfg.heads; ++h) {
      attention->col(2 * h) = w_i.value().col(h);
      attention->col(2 * h + 1) = w_j.value().col(h);
    }
  }
  const Var mixed = ad::add(ad::mul(ad::head_expand(w_i, width), ad::gather_rows(v, left)),
                            ad::mul(ad::head_expand(w_j, width), ad::gather_rows(v, right)));
  const Var pre = ad::add(edges, output(mixed));
  if (cfg.bypass_ffn_and_norm) return pre;
  const Var mid = norm1(pre);
  return norm2(ad::add(ffn(mid), mid));
}

void EdgeBlock::collect(ParameterList& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
  norm1.collect(out, prefix + ".norm1");
  norm2.collect(out, prefix + ".norm2");
  ffn.collect(out, prefix + ".ffn");
}

GraphNetwork::GraphNetwork(Index dim, GraphNetConfig cfg, Rng& rng) : dim_(dim), cfg_(cfg) {
  cfg_.validate(dim);
  const int blocks = cfg_.share_weights ? 1 : cfg_.steps;
  for (int s = 0; s < blocks; ++s) {
    node_blocks_.emplace_back(dim, cfg_, rng);
    edge_blocks_.emplace_back(dim, cfg_, rng);
  }
}

std::size_t GraphNetwork::block_index(int step) const {
  return cfg_.share_weights ? 0 : static_cast<std::size_t>(step);
}

CorrelationGraph GraphNetwork::node_propagate(const CorrelationGraph& g, AttentionTrace* trace) const {
  if (g.step >= cfg_.steps)
    throw ConfigError("node_propagate: graph already at step " + std::to_string(g.step));
  if (g.nodes_advanced) throw ConfigError("node_propagate: nodes already advanced this step");
  if (g.dim() != dim_) throw ShapeError("node_propagate: graph dim does not match network");
  CorrelationGraph out = g;
  std::vector<Matrix>* heads = nullptr;
  if (trace) heads = &trace->node_attention.emplace_back();
  out.nodes = node_blocks_[block_index(g.step)].forward(g.nodes, g.edges, g.labels, cfg_, heads);
  out.nodes_advanced = true;
  return out;
}

CorrelationGraph GraphNetwork::edge_propagate(const CorrelationGraph& g, AttentionTrace* trace) const {
  if (!g.nodes_advanced) throw ConfigError("edge_propagate: nodes must be advanced first");
  if (g.dim() != dim_) throw ShapeError("edge_propagate: graph dim does not match network");
  CorrelationGraph out = g;
  Matrix* weights = nullptr;
  if (trace) weights = &trace->edge_attention.emplace_back();
  out.edges = edge_blocks_[block_index(g.step)].forward(g.nodes, g.edges, cfg_, weights);
  out.nodes_advanced = false;
  ++out.step;
  return out;
}

CorrelationGraph GraphNetwork::propagate(const CorrelationGraph& g, AttentionTrace* trace) const {
  if (g.step != 0 || g.nodes_advanced) throw ConfigError("propagate expects a step-0 graph");
  CorrelationGraph cur = g;
  for (int s = 0; s < cfg_.steps; ++s) {
    if (cfg_.node_propagation) {
      cur = node_propagate(cur, trace);
    } else {
      cur.nodes_advanced = true;
    }
    cur = edge_propagate(cur, trace);
  }
  return cur;
}

ParameterList GraphNetwork::parameters() const {
  ParameterList out;
  for (std::size_t s = 0; s < node_blocks_.size(); ++s) {
    const std::string suffix = cfg_.share_weights ? "" : std::to_string(s);
    node_blocks_[s].collect(out, "node" + suffix);
    edge_blocks_[s].collect(out, "edge" + suffix);
  }
  return out;
}

}  // namespace gcahng
