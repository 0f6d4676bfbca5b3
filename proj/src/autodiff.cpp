#include "gcahng/autodiff.hpp"

#include "gcahng/error.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace gcahng::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

// Builds an output node. `fn` is only stored when some parent needs a
// gradient, so constant subgraphs carry no closures.
Var make_op(Matrix value, std::vector<Var> parents,
            std::function<void(const Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(fn);
  }
  return Var(std::move(node));
}

inline void push(const std::shared_ptr<Node>& n, const Matrix& g) {
  if (n->requires_grad) n->accumulate(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar");
  return node_->value(0, 0);
}

Var constant(Matrix value) { return Var(std::move(value), false); }
Var parameter(Matrix value) { return Var(std::move(value), true); }
Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
Var detach(const Var& v) { return constant(v.value()); }

void backward(const Var& output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("backward() requires a 1x1 output");
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  output.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value() + b.value(), {a, b}, [pa, pb](const Node& self) {
    push(pa, self.grad);
    push(pb, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value() - b.value(), {a, b}, [pa, pb](const Node& self) {
    push(pa, self.grad);
    push(pb, -self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value().cwiseProduct(b.value()), {a, b},
                 [pa, pb](const Node& self) {
                   if (pa->requires_grad)
                     pa->accumulate(self.grad.cwiseProduct(pb->value));
                   if (pb->requires_grad)
                     pb->accumulate(self.grad.cwiseProduct(pa->value));
                 });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a, b, "div");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value().cwiseQuotient(b.value()), {a, b},
                 [pa, pb](const Node& self) {
                   if (pa->requires_grad)
                     pa->accumulate(self.grad.cwiseQuotient(pb->value));
                   if (pb->requires_grad)
                     pb->accumulate(-self.grad.cwiseProduct(pa->value).cwiseQuotient(
                         pb->value.cwiseProduct(pb->value)));
                 });
}

Var scale(const Var& a, double s) {
  auto pa = a.node();
  return make_op(a.value() * s, {a},
                 [pa, s](const Node& self) { push(pa, self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  auto pa = a.node();
  return make_op(a.value().array() + s, {a},
                 [pa](const Node& self) { push(pa, self.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().array().exp();
  return make_op(out, {a}, [pa, out](const Node& self) {
    push(pa, self.grad.cwiseProduct(out));
  });
}

Var log(const Var& a) {
  auto pa = a.node();
  return make_op(a.value().array().log(), {a}, [pa](const Node& self) {
    push(pa, self.grad.cwiseQuotient(pa->value));
  });
}

Var sqrt(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().array().sqrt();
  return make_op(out, {a}, [pa, out](const Node& self) {
    Matrix g = self.grad;
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = 0; r < g.rows(); ++r)
        g(r, c) = out(r, c) > 0.0 ? g(r, c) / (2.0 * out(r, c)) : 0.0;
    push(pa, g);
  });
}

Var square(const Var& a) {
  auto pa = a.node();
  return make_op(a.value().cwiseAbs2(), {a}, [pa](const Node& self) {
    push(pa, 2.0 * self.grad.cwiseProduct(pa->value));
  });
}

Var sigmoid(const Var& a) {
  auto pa = a.node();
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_op(out, {a}, [pa, out](const Node& self) {
    push(pa, self.grad.cwiseProduct(
                 out.cwiseProduct((1.0 - out.array()).matrix())));
  });
}

Var gelu(const Var& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto pa = a.node();
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  });
  return make_op(out, {a}, [pa](const Node& self) {
    Matrix d = pa->value.unaryExpr([](double x) {
      const double u = kC * (x + kA * x * x * x);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    });
    push(pa, self.grad.cwiseProduct(d));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value() * b.value(), {a, b}, [pa, pb](const Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimension mismatch");
  auto pa = a.node(), pb = b.node();
  return make_op(a.value() * b.value().transpose(), {a, b},
                 [pa, pb](const Node& self) {
                   if (pa->requires_grad) pa->accumulate(self.grad * pb->value);
                   if (pb->requires_grad)
                     pb->accumulate(self.grad.transpose() * pa->value);
                 });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("affine: input has " + std::to_string(x.cols()) +
                     " columns, weight expects " + std::to_string(weight.rows()));
  }
  if (bias.rows() != 1 || bias.cols() != weight.cols())
    throw ShapeError("affine: bias shape mismatch");
  auto px = x.node(), pw = weight.node(), pb = bias.node();
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  return make_op(std::move(out), {x, weight, bias}, [px, pw, pb](const Node& self) {
    if (px->requires_grad) px->accumulate(self.grad * pw->value.transpose());
    if (pw->requires_grad) pw->accumulate(px->value.transpose() * self.grad);
    if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
  });
}

Var sum(const Var& a) {
  auto pa = a.node();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a},
                 [pa](const Node& self) {
                   push(pa, Matrix::Constant(pa->value.rows(), pa->value.cols(),
                                             self.grad(0, 0)));
                 });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
  auto pa = a.node();
  return make_op(a.value().rowwise().sum(), {a}, [pa](const Node& self) {
    push(pa, self.grad.replicate(1, pa->value.cols()));
  });
}

Var broadcast_rows(const Var& row, Index n) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows expects 1 x c");
  auto pr = row.node();
  return make_op(row.value().replicate(n, 1), {row}, [pr](const Node& self) {
    push(pr, self.grad.colwise().sum());
  });
}

Var broadcast_cols(const Var& col, Index c) {
  if (col.cols() != 1) throw ShapeError("broadcast_cols expects n x 1");
  auto pc = col.node();
  return make_op(col.value().replicate(1, c), {col}, [pc](const Node& self) {
    push(pc, self.grad.rowwise().sum());
  });
}

Var broadcast_scalar(const Var& s, Index n, Index c) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("broadcast_scalar expects 1 x 1");
  auto ps = s.node();
  return make_op(Matrix::Constant(n, c, s.value()(0, 0)), {s},
                 [ps](const Node& self) {
                   push(ps, Matrix::Constant(1, 1, self.grad.sum()));
                 });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols out of range");
  auto pa = a.node();
  return make_op(a.value().middleCols(start, count), {a},
                 [pa, start, count](const Node& self) {
                   if (!pa->requires_grad) return;
                   Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
                   g.middleCols(start, count) = self.grad;
                   pa->accumulate(g);
                 });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hcat of nothing");
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("hcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.cols();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [nodes, offsets](const Node& self) {
                   for (std::size_t k = 0; k < nodes.size(); ++k) {
                     push(nodes[k],
                          self.grad.middleCols(offsets[k], nodes[k]->value.cols()));
                   }
                 });
}

Var vcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vcat of nothing");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("vcat: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.rows();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [nodes, offsets](const Node& self) {
                   for (std::size_t k = 0; k < nodes.size(); ++k) {
                     push(nodes[k],
                          self.grad.middleRows(offsets[k], nodes[k]->value.rows()));
                   }
                 });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  auto pa = a.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  return make_op(std::move(out), {a}, [pa, idx](const Node& self) {
    if (!pa->requires_grad) return;
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      g.row(idx[r]) += self.grad.row(static_cast<Index>(r));
    pa->accumulate(g);
  });
}

Var block_sum_rows(const Var& a, Index block) {
  if (block <= 0 || a.rows() % block != 0) throw ShapeError("block_sum_rows: bad block");
  const Index n = a.rows() / block;
  Matrix out = Matrix::Zero(n, a.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = a.value().middleRows(i * block, block).colwise().sum();
  auto pa = a.node();
  return make_op(std::move(out), {a}, [pa, block, n](const Node& self) {
    if (!pa->requires_grad) return;
    Matrix g(pa->value.rows(), pa->value.cols());
    for (Index i = 0; i < n; ++i) g.middleRows(i * block, block) = self.grad.row(i).replicate(block, 1);
    pa->accumulate(g);
  });
}

Var head_sum(const Var& a, Index heads) {
  if (heads <= 0 || a.cols() % heads != 0) throw ShapeError("head_sum: columns not divisible by heads");
  const Index width = a.cols() / heads;
  Matrix out(a.rows(), heads);
  for (Index h = 0; h < heads; ++h) out.col(h) = a.value().middleCols(h * width, width).rowwise().sum();
  auto pa = a.node();
  return make_op(std::move(out), {a}, [pa, heads, width](const Node& self) {
    if (!pa->requires_grad) return;
    Matrix g(pa->value.rows(), pa->value.cols());
    for (Index h = 0; h < heads; ++h) g.middleCols(h * width, width) = self.grad.col(h).replicate(1, width);
    pa->accumulate(g);
  });
}

Var head_expand(const Var& a, Index width) {
  if (width <= 0) throw ShapeError("head_expand: width must be positive");
  const Index heads = a.cols();
  Matrix out(a.rows(), heads * width);
  for (Index h = 0; h < heads; ++h) out.middleCols(h * width, width) = a.value().col(h).replicate(1, width);
  auto pa = a.node();
  return make_op(std::move(out), {a}, [pa, heads, width](const Node& self) {
    if (!pa->requires_grad) return;
    Matrix g(pa->value.rows(), heads);
    for (Index h = 0; h < heads; ++h) g.col(h) = self.grad.middleCols(h * width, width).rowwise().sum();
    pa->accumulate(g);
  });
}

Var masked_softmax_rows(const Var& a, const Mask& masked) {
  if (masked.rows() != a.rows() || masked.cols() != a.cols())
    throw ShapeError("masked_softmax_rows: mask shape mismatch");
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < a.cols(); ++c)
      if (!masked(r, c)) mx = std::max(mx, a.value()(r, c));
    if (!std::isfinite(mx)) {
      throw NumericError("no negatives to attend: attention row " + std::to_string(r) +
                         " has every column masked");
    }
    double z = 0.0;
    for (Index c = 0; c < a.cols(); ++c) {
      if (masked(r, c)) continue;
      out(r, c) = std::exp(a.value()(r, c) - mx);
      z += out(r, c);
    }
    out.row(r) /= z;
  }
  auto pa = a.node();
  return make_op(out, {a}, [pa, out](const Node& self) {
    // Masked entries have p = 0, so their gradient vanishes automatically.
    Matrix g(out.rows(), out.cols());
    for (Index r = 0; r < out.rows(); ++r) {
      const double dot = self.grad.row(r).dot(out.row(r));
      g.row(r) = out.row(r).cwiseProduct((self.grad.row(r).array() - dot).matrix());
    }
    push(pa, g);
  });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Index n = a.rows(), c = a.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
    throw ShapeError("layer_norm_rows: gain/bias shape mismatch");
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Index r = 0; r < n; ++r) {
    const double mu = a.value().row(r).mean();
    const double var = (a.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  auto pa = a.node(), pg = gain.node(), pb = bias.node();
  return make_op(std::move(out), {a, gain, bias},
                 [pa, pg, pb, xhat, inv_std, c](const Node& self) {
                   if (pg->requires_grad)
                     pg->accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
                   if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
                   if (!pa->requires_grad) return;
                   Matrix gx = self.grad.array().rowwise() * pg->value.row(0).array();
                   Matrix g(gx.rows(), gx.cols());
                   for (Index r = 0; r < gx.rows(); ++r) {
                     const double m1 = gx.row(r).mean();
                     const double m2 = gx.row(r).dot(xhat.row(r)) / static_cast<double>(c);
                     g.row(r) = inv_std(r) *
                                (gx.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
                   }
                   pa->accumulate(g);
                 });
}

Var l2_normalize_rows(const Var& a) {
  Vector norms = a.value().rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 0.0) || !std::isfinite(norms(r))) {
      throw NumericError("cannot normalize row " + std::to_string(r) +
                         ": norm is zero or non-finite");
    }
    // Rows already at unit norm up to rounding pass through unchanged, which
    // makes normalization idempotent.
    if (std::abs(norms(r) - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) norms(r) = 1.0;
  }
  Matrix out = a.value().array().colwise() / norms.array();
  auto pa = a.node();
  return make_op(out, {a}, [pa, out, norms](const Node& self) {
    Matrix g(out.rows(), out.cols());
    for (Index r = 0; r < out.rows(); ++r) {
      const double dot = self.grad.row(r).dot(out.row(r));
      g.row(r) = (self.grad.row(r) - dot * out.row(r)) / norms(r);
    }
    push(pa, g);
  });
}

Var log1p_sum_exp_rows(const Var& a, const Mask& excluded) {
  if (excluded.rows() != a.rows() || excluded.cols() != a.cols())
    throw ShapeError("log1p_sum_exp_rows: mask shape mismatch");
  const Index n = a.rows();
  Matrix out(n, 1);
  Matrix weights = Matrix::Zero(a.rows(), a.cols());  // d out / d a
  for (Index r = 0; r < n; ++r) {
    double mx = 0.0;  // the implicit "1" term is exp(0)
    for (Index c = 0; c < a.cols(); ++c)
      if (!excluded(r, c)) mx = std::max(mx, a.value()(r, c));
    double z = std::exp(-mx);
    for (Index c = 0; c < a.cols(); ++c) {
      if (excluded(r, c)) continue;
      weights(r, c) = std::exp(a.value()(r, c) - mx);
      z += weights(r, c);
    }
    out(r, 0) = mx + std::log(z);
    weights.row(r) /= z;
  }
  auto pa = a.node();
  return make_op(std::move(out), {a}, [pa, weights](const Node& self) {
    push(pa, weights.array().colwise() * self.grad.col(0).array());
  });
}

Var cross_entropy_rows(const Var& logits, std::span<const int> targets) {
  const Index n = logits.rows(), c = logits.cols();
  if (static_cast<Index>(targets.size()) != n)
    throw ShapeError("cross_entropy_rows: target count mismatch");
  Matrix out(n, 1);
  Matrix probs(n, c);
  for (Index r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= c) {
      throw ShapeError("cross_entropy_rows: target class " + std::to_string(t) +
                       " outside [0, " + std::to_string(c) + ")");
    }
    const double mx = logits.value().row(r).maxCoeff();
    probs.row(r) = (logits.value().row(r).array() - mx).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    out(r, 0) = mx + std::log(z) - logits.value()(r, t);
  }
  auto pl = logits.node();
  std::vector<int> tg(targets.begin(), targets.end());
  return make_op(std::move(out), {logits}, [pl, probs, tg](const Node& self) {
    Matrix g = probs;
    for (Index r = 0; r < g.rows(); ++r) {
      g(r, tg[static_cast<std::size_t>(r)]) -= 1.0;
      g.row(r) *= self.grad(r, 0);
    }
    push(pl, g);
  });
}

}  // namespace gcahng::ad
