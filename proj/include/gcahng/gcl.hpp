#pragma once

// Global correlation learning: a dense batch graph whose nodes start as the
// embeddings and whose edges start as pairwise Hadamard products, refined by
// K rounds of node propagation (masked multi-head self-attention plus the
// edge sum) followed by edge propagation (cross-attention from each edge to
// its two endpoint nodes).

#include "gcahng/backbone.hpp"
#include "gcahng/nn.hpp"

#include <span>
#include <vector>

namespace gcahng {

struct GraphNetConfig {
  int steps = 1;          // K
  int heads = 2;          // H
  int ffn_expansion = 4;
  bool share_weights = true;
  /// Ablation switches.
  bool node_propagation = true;  // off: "w/o global correlations"
  bool edge_sum = true;          // off: "w/o Hadamard product addition"
  /// Test harness only: skip the FFN sub-layer and both layer norms.
  bool bypass_ffn_and_norm = false;

  void validate(Index dim) const;
};

/// Nodes are B x D; edges are (B*B) x D with edge (i, j) stored at row
/// i * B + j. `step` counts completed node+edge iterations.
struct CorrelationGraph {
  Var nodes;
  Var edges;
  std::vector<int> labels;
  int step = 0;
  bool nodes_advanced = false;

  Index size() const { return nodes.rows(); }
  Index dim() const { return nodes.cols(); }
  Index edge_row(Index i, Index j) const { return i * size() + j; }
};

/// Post-softmax attention weights captured for diagnostics.
struct AttentionTrace {
  /// node_attention[step][head] is B x B.
  std::vector<std::vector<Matrix>> node_attention;
  /// edge_attention[step] is (B*B) x (2H): per head, weight on V_i then V_j.
  std::vector<Matrix> edge_attention;
};

CorrelationGraph init_graph(const Var& z, std::span<const int> labels);
inline CorrelationGraph init_graph(const EmbeddingBatch& zb) { return init_graph(zb.z, zb.labels); }

/// true where attention is forbidden: the diagonal and same-label pairs.
ad::Mask positive_mask(std::span<const int> labels);

class NodeBlock {
 public:
  NodeBlock() = default;
  NodeBlock(Index dim, const GraphNetConfig& cfg, Rng& rng);

  Var forward(const Var& nodes, const Var& edges, std::span<const int> labels,
              const GraphNetConfig& cfg, std::vector<Matrix>* attention) const;
  void collect(ParameterList& out, const std::string& prefix) const;

  Linear query, key, value, output;
  LayerNorm norm1, norm2;
  FeedForward ffn;
};

class EdgeBlock {
 public:
  EdgeBlock() = default;
  EdgeBlock(Index dim, const GraphNetConfig& cfg, Rng& rng);

  Var forward(const Var& nodes, const Var& edges, const GraphNetConfig& cfg,
              Matrix* attention) const;
  void collect(ParameterList& out, const std::string& prefix) const;

  Linear query, key, value, output;
  LayerNorm norm1, norm2;
  FeedForward ffn;
};

class GraphNetwork {
 public:
  GraphNetwork() = default;
  GraphNetwork(Index dim, GraphNetConfig cfg, Rng& rng);

  /// Advances nodes for the current step. Throws NumericError when some row
  /// has no negatives to attend (single-class batch).
  CorrelationGraph node_propagate(const CorrelationGraph& g, AttentionTrace* trace = nullptr) const;
  /// Advances edges using the already advanced nodes; completes the step.
  CorrelationGraph edge_propagate(const CorrelationGraph& g, AttentionTrace* trace = nullptr) const;
  /// Runs all K steps from a step-0 graph.
  CorrelationGraph propagate(const CorrelationGraph& g, AttentionTrace* trace = nullptr) const;

  ParameterList parameters() const;
  const GraphNetConfig& config() const { return cfg_; }
  Index dim() const { return dim_; }

  std::vector<NodeBlock>& node_blocks() { return node_blocks_; }
  std::vector<EdgeBlock>& edge_blocks() { return edge_blocks_; }

 private:
  std::size_t block_index(int step) const;

  Index dim_ = 0;
  GraphNetConfig cfg_;
  std::vector<NodeBlock> node_blocks_;
  std::vector<EdgeBlock> edge_blocks_;
};

}  // namespace gcahng
