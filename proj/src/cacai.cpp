#include "gcahng/cacai.hpp"

#include "gcahng/error.hpp"

#include <algorithm>
#include <string>

namespace gcahng {

double hardness_eta(double alpha_pull, double j_avg) {
  constexpr double kFloor = 1e-8;
  return std::exp(-alpha_pull / std::max(j_avg, kFloor));
}

std::vector<double> fusion_coefficients(std::span<const double> step_weights) {
  std::vector<double> c{1.0};
  for (double w : step_weights) {
    for (double& x : c) x *= w;
    c.push_back(1.0 - w);
  }
  return c;
}

FusionResult fuse_with_weights(const Matrix& interpolants, std::span<const double> step_weights) {
  if (interpolants.rows() == 0) throw ConfigError("random weighting needs a nonempty set");
  if (static_cast<Index>(step_weights.size()) != interpolants.rows() - 1)
    throw ShapeError("fusion needs exactly k-1 step weights");
  FusionResult out;
  out.z_hat = interpolants.row(0);
  for (Index t = 1; t < interpolants.rows(); ++t) {
    const double w = step_weights[static_cast<std::size_t>(t - 1)];
    out.z_hat = w * out.z_hat + (1.0 - w) * interpolants.row(t);
  }
  out.coefficients = fusion_coefficients(step_weights);
  return out;
}

FusionResult fuse_random_weighting(const Matrix& interpolants, Rng& rng) {
  if (interpolants.rows() == 0) throw ConfigError("random weighting needs a nonempty set");
  std::vector<double> w(static_cast<std::size_t>(interpolants.rows() - 1));
  for (double& x : w) x = rng.uniform_open();
  return fuse_with_weights(interpolants, w);
}

std::vector<Index> select_positives(std::span<const int> labels, Rng& rng) {
  const auto b = static_cast<Index>(labels.size());
  std::vector<Index> out(static_cast<std::size_t>(b));
  std::vector<Index> same;
  for (Index i = 0; i < b; ++i) {
    same.clear();
    for (Index j = 0; j < b; ++j)
      if (j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) same.push_back(j);
    if (same.empty()) {
      throw SamplingError("anchor " + std::to_string(i) + " (class " +
                          std::to_string(labels[static_cast<std::size_t>(i)]) +
                          ") has no positive in the batch");
    }
    out[static_cast<std::size_t>(i)] = same[rng.below(same.size())];
  }
  return out;
}

namespace {

double euclidean(const Matrix& z, Index a, Index b) {
  double s = 0.0;
  for (Index c = 0; c < z.cols(); ++c) {
    const double d = z(b, c) - z(a, c);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

PairDistances pair_distances(const Matrix& z, std::span<const Index> positives) {
  const Index b = z.rows();
  if (static_cast<Index>(positives.size()) != b) throw ShapeError("pair_distances: positive count mismatch");
  PairDistances out;
  out.d_plus.resize(b);
  out.d_minus.resize(b, b);
  for (Index i = 0; i < b; ++i) {
    out.d_plus(i) = euclidean(z, i, positives[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < b; ++j) out.d_minus(i, j) = euclidean(z, i, j);
  }
  return out;
}

std::vector<int> batch_classes(std::span<const int> labels) {
  std::vector<int> out;
  for (int l : labels)
    if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
  return out;
}

SyntheticNegatives synthesize(const Var& z, std::span<const int> labels, const Var& lambda,
                              std::span<const Index> positives, double eta,
                              const SynthesisOptions& options, Rng& rng) {
  const Index b = z.rows(), d = z.cols();
  if (static_cast<Index>(labels.size()) != b) throw ShapeError("synthesize: label count mismatch");
  if (lambda.rows() != b * b || lambda.cols() != d)
    throw ShapeError("synthesize: lambda must be (B*B) x D");

  SyntheticNegatives out;
  out.eta = eta;
  out.positives.assign(positives.begin(), positives.end());
  out.distances = pair_distances(z.value(), positives);
  const auto& dist = out.distances;

  const auto classes = batch_classes(labels);
  // Interpolant rows: anchor-major, then negative class in slot order, then
  // batch order within the class.
  std::vector<Index> first_i, first_j, first_rows, second_j;
  std::vector<Index> slot;  // position of each pair in the concatenated [first; second]
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) per (anchor, class)
  for (Index i = 0; i < b; ++i) {
    for (int n : classes) {
      if (n == labels[static_cast<std::size_t>(i)]) continue;
      const std::size_t begin = out.pairs.size();
      for (Index j = 0; j < b; ++j) {
        if (labels[static_cast<std::size_t>(j)] != n) continue;
        out.pairs.emplace_back(i, j);
        const bool move = dist.d_minus(i, j) > dist.d_plus(i);
        out.interpolated.push_back(move);
        if (move) {
          first_i.push_back(i);
          first_j.push_back(j);
          first_rows.push_back(i * b + j);
        } else {
          second_j.push_back(j);
        }
      }
      groups.emplace_back(begin, out.pairs.size());
      out.anchor.push_back(i);
      out.negative_class.push_back(n);
    }
  }
  if (groups.empty()) throw SamplingError("synthesize: batch has a single class, no negatives");

  std::vector<Var> parts;
  if (!first_i.empty()) {
    const Var zi = ad::gather_rows(z, first_i);
    const Var diff = ad::sub(ad::gather_rows(z, first_j), zi);
    const Var d_minus = ad::sqrt(ad::row_sum(ad::square(diff)));
    const Var d_plus_all =
        ad::sqrt(ad::row_sum(ad::square(ad::sub(ad::gather_rows(z, positives), z))));
    const Var d_plus = ad::gather_rows(d_plus_all, first_i);
    const Var lam = ad::gather_rows(lambda, first_rows);
    const Var gap = ad::broadcast_cols(ad::scale(ad::sub(d_minus, d_plus), eta), d);
    const Var reach = ad::add(ad::broadcast_cols(d_plus, d), ad::mul(lam, gap));
    parts.push_back(ad::add(zi, ad::div(ad::mul(reach, diff), ad::broadcast_cols(d_minus, d))));
  }
  if (!second_j.empty()) parts.push_back(ad::gather_rows(z, second_j));
  const Var stacked = ad::vcat(parts);

  std::vector<Index> order(out.pairs.size());
  Index first_at = 0, second_at = static_cast<Index>(first_i.size());
  for (std::size_t p = 0; p < out.pairs.size(); ++p)
    order[p] = out.interpolated[p] ? first_at++ : second_at++;
  out.interpolants = ad::gather_rows(stacked, order);

  out.fusion = Matrix::Zero(static_cast<Index>(groups.size()), static_cast<Index>(out.pairs.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [begin, end] = groups[g];
    std::vector<std::size_t> members(end - begin);
    for (std::size_t k = 0; k < members.size(); ++k) members[k] = begin + k;
    if (options.fusion == FusionMode::random_pick) {
      out.fusion(static_cast<Index>(g), static_cast<Index>(members[rng.below(members.size())])) = 1.0;
      continue;
    }
    if (options.shuffle_fusion_order) rng.shuffle(members.begin(), members.end());
    std::vector<double> w(members.size() - 1);
    for (double& x : w) x = rng.uniform_open();
    const auto c = fusion_coefficients(w);
    for (std::size_t k = 0; k < members.size(); ++k)
      out.fusion(static_cast<Index>(g), static_cast<Index>(members[k])) = c[k];
  }
  out.z_hat = ad::matmul(ad::constant(out.fusion), out.interpolants);
  if (options.renormalize) out.z_hat = ad::l2_normalize_rows(out.z_hat);
  return out;
}

}  // namespace gcahng
