#pragma once

// Trainable building blocks shared by the backbone, graph network and heads,
// plus the AdamW optimizer and the deterministic random stream.

#include "gcahng/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gcahng {

using ad::Index;
using ad::Matrix;
using ad::Var;

/// Splittable, platform-independent random stream (mt19937_64 core with
/// hand-rolled uniform/normal transforms so draws never depend on the
/// standard library's distribution implementations).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent child stream; the parent is not advanced.
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in the open interval (0, 1).
  double uniform_open();
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

  Matrix normal_matrix(Index rows, Index cols, double stddev);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

struct NamedParameter {
  std::string name;
  Var var;
};

using ParameterList = std::vector<NamedParameter>;

void zero_grad(const ParameterList& params);

/// y = x W + b; W is in x out.
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out, Rng& rng);

  Var operator()(const Var& x) const { return ad::affine(x, weight, bias); }
  void collect(ParameterList& out, const std::string& prefix) const;

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }

  Var weight;
  Var bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Index dim);

  Var operator()(const Var& x) const { return ad::layer_norm_rows(x, gain, bias); }
  void collect(ParameterList& out, const std::string& prefix) const;

  Var gain;
  Var bias;
};

/// Two-layer position-wise feed-forward network with GELU.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(Index dim, Index expansion, Rng& rng);

  Var operator()(const Var& x) const { return down(ad::gelu(up(x))); }
  void collect(ParameterList& out, const std::string& prefix) const;

  Linear up;
  Linear down;
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam. Parameters that received no gradient in the
/// current pass are skipped entirely (no decay, no moment update).
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParameterList params, AdamWOptions options);

  void step();
  void step(double lr);
  void zero_grad() const;

  const ParameterList& parameters() const { return params_; }
  const AdamWOptions& options() const { return options_; }

 private:
  ParameterList params_;
  AdamWOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::vector<long> t_;
};

/// lr * 0.5 * (1 + cos(pi * progress)), progress clamped to [0, 1].
double cosine_decay(double base_lr, double progress);

}  // namespace gcahng
