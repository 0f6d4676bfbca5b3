#pragma once

// Correlation-aware channel-adaptive interpolation: per-channel coefficients
// from final edge states, hardness-bounded anchor-negative interpolation and
// random-weighting fusion into one synthetic negative per (anchor, class).

#include "gcahng/gcl.hpp"
#include "gcahng/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

namespace gcahng {

/// eta = exp(-alpha / J_avg). J_avg <= 0 is clamped to 1e-8.
double hardness_eta(double alpha_pull, double j_avg);

struct InterpolationContext {
  double alpha_pull = 5.0;
  double j_avg = 1.0;

  double eta() const { return hardness_eta(alpha_pull, j_avg); }
};

/// One interpolation step between anchor z_i and negative z_j.
///
/// When d_minus > d_plus the result moves from z_i toward z_j by
/// d_plus + lambda * eta * (d_minus - d_plus), per channel, along the unit
/// direction (z_j - z_i) / d_minus. Otherwise z_j is returned unchanged.
/// `lambda` is either one coefficient per channel or a single broadcast
/// coefficient. Nothing is re-normalized.
template <class DerivedA, class DerivedB, class DerivedL>
Eigen::Matrix<typename DerivedA::Scalar, 1, Eigen::Dynamic> interpolate_pair(
    const Eigen::MatrixBase<DerivedA>& z_i, const Eigen::MatrixBase<DerivedB>& z_j,
    const Eigen::MatrixBase<DerivedL>& lambda, typename DerivedA::Scalar d_plus,
    typename DerivedA::Scalar d_minus, typename DerivedA::Scalar eta) {
  using Scalar = typename DerivedA::Scalar;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const Row zi = z_i.reshaped().transpose();  // accepts row or column vectors
  const Row zj = z_j.reshaped().transpose();
  if (!(d_minus > d_plus)) return zj;
  const Row direction = (zj - zi) / d_minus;
  Row lam(zi.size());
  if (lambda.size() == 1) {
    lam.setConstant(lambda(0));
  } else {
    lam = lambda.reshaped().transpose();
  }
  const Row step = (d_plus + lam.array() * (eta * (d_minus - d_plus))).matrix();
  return zi + step.cwiseProduct(direction);
}

/// Convex weights of the sequential fusion acc <- w_t acc + (1 - w_t) x_t
/// for t = 1..k-1, given the k-1 step weights.
std::vector<double> fusion_coefficients(std::span<const double> step_weights);

struct FusionResult {
  Eigen::RowVectorXd z_hat;
  std::vector<double> coefficients;  // one per input row, convex
};

/// Random-weighting fusion of the rows of `interpolants` in row order with a
/// fresh w ~ U(0, 1) per step. Throws on an empty set.
FusionResult fuse_random_weighting(const Matrix& interpolants, Rng& rng);

/// Same fusion with caller-supplied step weights (k-1 of them).
FusionResult fuse_with_weights(const Matrix& interpolants, std::span<const double> step_weights);

struct PairDistances {
  Eigen::VectorXd d_plus;  // B
  Matrix d_minus;          // B x B
};

/// Uniformly chosen same-label partner (never i itself) for every anchor.
/// Throws SamplingError for an anchor without a positive in the batch.
std::vector<Index> select_positives(std::span<const int> labels, Rng& rng);

/// Euclidean distances on the given (normalized) embeddings.
PairDistances pair_distances(const Matrix& z, std::span<const Index> positives);

/// lambda_ij = sigmoid(W E_ij + b) with one D -> D layer.
class InterpolationHead {
 public:
  InterpolationHead() = default;
  InterpolationHead(Index dim, Rng& rng) : fc(dim, dim, rng) {}

  /// (B*B) x D coefficients in (0, 1), same row layout as the edges.
  Var compute_lambda(const Var& edges) const { return ad::sigmoid(fc(edges)); }
  ParameterList parameters() const {
    ParameterList out;
    fc.collect(out, "fc");
    return out;
  }

  Linear fc;
};

enum class FusionMode { random_weighting, random_pick };

struct SynthesisOptions {
  FusionMode fusion = FusionMode::random_weighting;
  bool shuffle_fusion_order = false;
  bool renormalize = false;
};

/// Synthetic negatives for every anchor i and every other batch class n.
struct SyntheticNegatives {
  Var z_hat;                         // rows: (anchor, class), anchor-major
  std::vector<Index> anchor;         // per z_hat row
  std::vector<int> negative_class;   // per z_hat row (dataset label)
  Var interpolants;                  // rows: (i, j) pairs with different labels
  std::vector<std::pair<Index, Index>> pairs;
  std::vector<bool> interpolated;    // false where d- <= d+ returned z_j
  Matrix fusion;                     // z_hat rows x interpolant rows, convex
  std::vector<Index> positives;
  PairDistances distances;
  double eta = 0.0;

  Index count() const { return z_hat.rows(); }
};

/// Interpolates every anchor-negative pair with `lambda` ((B*B) x D) and
/// fuses per negative class. Gradients flow to z and lambda as far as the
/// caller left them attached.
SyntheticNegatives synthesize(const Var& z, std::span<const int> labels, const Var& lambda,
                              std::span<const Index> positives, double eta,
                              const SynthesisOptions& options, Rng& rng);

/// Batch classes in first-appearance (slot) order.
std::vector<int> batch_classes(std::span<const int> labels);

}  // namespace gcahng
