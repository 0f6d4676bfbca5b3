#pragma once

// Training objectives. Stage 1 guides the generator (classification,
// similarity and diversity of the synthetic negatives); stage 2 trains the
// metric model with a real-sample metric loss, node classification and the
// synthetic-negative pair loss weighted by the balance factor.

#include "gcahng/cacai.hpp"
#include "gcahng/nn.hpp"

#include <span>
#include <string>
#include <vector>

namespace gcahng {

struct Stage1Weights {
  double gamma_s = 1.0;
  double gamma_d = 0.03;

  void validate() const;
};

/// Linear classifier over embeddings; class index = label - 1.
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(Index dim, int num_classes, Rng& rng) : linear(dim, num_classes, rng) {}

  Var logits(const Var& x) const { return linear(x); }
  /// Same logits with the head's parameters cut from the graph.
  Var frozen_logits(const Var& x) const {
    return ad::affine(x, ad::detach(linear.weight), ad::detach(linear.bias));
  }
  int num_classes() const { return static_cast<int>(linear.out_dim()); }
  void collect(ParameterList& out, const std::string& prefix) const { linear.collect(out, prefix); }

  Linear linear;
};

struct ProxyBank {
  Var proxies;  // C x D
  double alpha = 32.0;
  double delta = 0.1;

  ProxyBank() = default;
  /// Unit-norm random proxies.
  ProxyBank(Index dim, int num_classes, double alpha, double delta, Rng& rng);
  int num_classes() const { return static_cast<int>(proxies.rows()); }
};

/// 0-based class indices from 1-based labels, validated against `num_classes`.
std::vector<int> class_indices(std::span<const int> labels, int num_classes);

/// Mean cross-entropy of `logits` rows against 0-based targets.
Var mean_cross_entropy(const Var& logits, std::span<const int> targets);

/// Cross-entropy of each synthetic negative against its class, mean over rows.
Var j_ce(const Var& z_hat, std::span<const int> negative_labels, const ClassifierHead& head,
         bool freeze_head);
/// Per-row 1 - cos(a_r, b_r), n x 1. Zero rows raise NumericError.
Var j_sim_rows(const Var& a, const Var& b);
/// Per-anchor 1 - std of its negative-pair lambda entries, B x 1.
/// `per_channel` averages per-channel deviations instead of pooling.
Var j_div_rows(const Var& lambda, std::span<const int> labels, bool per_channel = false);

struct GenerationLoss {
  Var total;
  double ce = 0.0;   // mean over synthetic negatives
  double sim = 0.0;  // mean over synthetic negatives
  double div = 0.0;  // mean over anchors
};

/// (1 / (B N)) sum_i sum_{n != l_i} (CE + gamma_s SIM + gamma_d DIV).
GenerationLoss j_gen(const SyntheticNegatives& synth, const Var& z, const Var& lambda,
                     std::span<const int> labels, int classes_per_batch, const ClassifierHead& head_z,
                     const Stage1Weights& weights, bool per_channel_div = false);

Var j_cz(const Var& z, std::span<const int> labels, const ClassifierHead& head_z);
Var j_gca(const Var& nodes, std::span<const int> labels, const ClassifierHead& head_v);

/// (1/B) sum_i log(1 + sum_n exp(z_i . zhat_in - z_i . z+_i)).
Var j_syn(const Var& z, std::span<const Index> positives, const SyntheticNegatives& synth);

/// Multi-group N-pair loss: group 0 anchors, groups 1..m-1 positives.
Var np_loss(const Var& z, int classes_per_batch, int instances_per_class);
/// Reference N-pair loss on explicit anchor/positive matrices (plain loops).
double original_npair_loss(const Matrix& anchors, const Matrix& positives);

Var pa_loss(const Var& z, std::span<const int> labels, const ProxyBank& bank);

enum class MetricLoss { np_modified, proxy_anchor };

/// gamma_n = exp(-beta / J_gen), J_gen clamped to 1e-8.
double balance_factor(double beta, double j_gen);

/// Named scalars logged per training step.
struct LossReport {
  long step = 0;
  int epoch = 0;
  double j_ce = 0, j_sim = 0, j_div = 0, j_gen = 0, j_cz = 0;
  double j_gca = 0, j_syn = 0, j_r = 0, j_m = 0;
  double gamma_n = 0, eta = 0;

  bool all_finite() const;
  std::string to_json_line() const;
};

}  // namespace gcahng
