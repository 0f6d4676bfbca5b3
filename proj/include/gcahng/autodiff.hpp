#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D double matrix. A `Var` owns a node in a dynamically
// built graph; calling `backward()` on a 1x1 result accumulates gradients into
// every reachable node that requires them. Leaves created with
// `requires_grad = true` persist across graphs and act as trainable
// parameters; `detach()` cuts the graph (stop-gradient).

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace gcahng::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;
/// Boolean matrix; `true` marks an entry as excluded.
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;

  void accumulate(const Matrix& g);
  bool has_grad() const { return grad.size() != 0; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  /// Gradient accumulated by the last backward passes; zeros when nothing
  /// reached this node.
  Matrix grad() const;
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);
Var scalar(double v);
/// Same value, no gradient path back to the producer.
Var detach(const Var& v);

/// Reverse sweep from a 1x1 output.
void backward(const Var& output);

// Elementwise arithmetic (operands must share a shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// Elementwise functions.
Var exp(const Var& a);
Var log(const Var& a);
/// Gradient at exactly zero is taken as zero (subgradient).
Var sqrt(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
/// tanh approximation of GELU.
Var gelu(const Var& a);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
/// x * W + 1 * b, with b a 1 x out row vector.
Var affine(const Var& x, const Var& weight, const Var& bias);

// Reductions and broadcasts.
Var sum(const Var& a);
Var mean(const Var& a);
/// n x c -> n x 1
Var row_sum(const Var& a);
/// 1 x c -> n x c
Var broadcast_rows(const Var& row, Index n);
/// n x 1 -> n x c
Var broadcast_cols(const Var& col, Index c);
/// 1 x 1 -> n x c
Var broadcast_scalar(const Var& s, Index n, Index c);

// Structural.
Var slice_cols(const Var& a, Index start, Index count);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const Index> rows);
/// Sums consecutive groups of `block` rows: (n*block) x c -> n x c.
Var block_sum_rows(const Var& a, Index block);
/// Sums each head's column block: n x (h*d) -> n x h.
Var head_sum(const Var& a, Index heads);
/// Repeats each column `width` times: n x h -> n x (h*width).
Var head_expand(const Var& a, Index width);

// Fused numerics.
/// Row softmax where masked entries get exactly zero weight. A row with
/// every entry masked raises NumericError.
Var masked_softmax_rows(const Var& a, const Mask& masked);
/// Row-wise layer normalization with affine gain/bias (1 x c each).
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias,
                    double eps = 1e-5);
/// Divides each row by its L2 norm. Zero rows raise NumericError.
Var l2_normalize_rows(const Var& a);
/// Per row: log(1 + sum_{c not excluded} exp(a_rc)) -> n x 1.
Var log1p_sum_exp_rows(const Var& a, const Mask& excluded);
/// Per row cross-entropy of softmax(logits) against integer targets -> n x 1.
Var cross_entropy_rows(const Var& logits, std::span<const int> targets);

}  // namespace gcahng::ad
