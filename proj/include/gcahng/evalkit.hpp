#pragma once

// Brute-force retrieval metrics (Recall@K, R-Precision, MAP@R) and embedding
// diagnostics. Rankings use cosine similarity, descending, with ties broken
// by gallery index ascending.

#include "gcahng/error.hpp"
#include "gcahng/log.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace gcahng {

template <class Scalar>
struct BasicRetrievalIndex {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  MatrixType gallery;
  std::vector<int> gallery_labels;
  MatrixType queries;
  std::vector<int> query_labels;
  /// Query q is gallery item q and must not retrieve itself.
  bool exclude_self = false;

  /// Single-set protocol: every sample queries all the others.
  static BasicRetrievalIndex single_set(MatrixType embeddings, std::vector<int> labels) {
    BasicRetrievalIndex idx;
    idx.gallery = embeddings;
    idx.gallery_labels = labels;
    idx.queries = std::move(embeddings);
    idx.query_labels = std::move(labels);
    idx.exclude_self = true;
    idx.validate();
    return idx;
  }

  static BasicRetrievalIndex query_gallery(MatrixType queries, std::vector<int> query_labels,
                                           MatrixType gallery, std::vector<int> gallery_labels) {
    BasicRetrievalIndex idx;
    idx.gallery = std::move(gallery);
    idx.gallery_labels = std::move(gallery_labels);
    idx.queries = std::move(queries);
    idx.query_labels = std::move(query_labels);
    idx.validate();
    return idx;
  }

  void validate() const {
    if (gallery.cols() != queries.cols()) throw ShapeError("retrieval: query/gallery dims differ");
    if (static_cast<Eigen::Index>(gallery_labels.size()) != gallery.rows() ||
        static_cast<Eigen::Index>(query_labels.size()) != queries.rows())
      throw ShapeError("retrieval: label count mismatch");
    if (exclude_self && gallery.rows() != queries.rows())
      throw ShapeError("retrieval: self-exclusion needs query == gallery");
  }

  Eigen::Index gallery_size() const { return gallery.rows() - (exclude_self ? 1 : 0); }
};

using RetrievalIndex = BasicRetrievalIndex<double>;

struct MetricReport {
  std::map<int, double> recall_at;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  long n_queries = 0;
};

namespace detail {

/// Gallery indices for query q, best first, self excluded when requested.
template <class Scalar>
std::vector<Eigen::Index> ranking(const BasicRetrievalIndex<Scalar>& idx, Eigen::Index q,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& g_unit,
                                  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& q_unit) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sims = g_unit * q_unit.transpose();
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(g_unit.rows()));
  for (Eigen::Index g = 0; g < g_unit.rows(); ++g)
    if (!(idx.exclude_self && g == q)) order.push_back(g);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return sims(a) > sims(b); });
  return order;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> unit_rows(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar n = out.row(r).norm();
    if (n > Scalar(0)) out.row(r) /= n;
  }
  return out;
}

/// Visits (query, relevance-by-rank, R) for every query.
template <class Scalar, class Fn>
void for_each_ranking(const BasicRetrievalIndex<Scalar>& idx, Fn&& fn) {
  idx.validate();
  const auto g_unit = unit_rows<Scalar>(idx.gallery);
  const auto q_unit = unit_rows<Scalar>(idx.queries);
  std::vector<char> rel;
  for (Eigen::Index q = 0; q < idx.queries.rows(); ++q) {
    const auto order = ranking(idx, q, g_unit, Eigen::Matrix<Scalar, 1, Eigen::Dynamic>(q_unit.row(q)));
    const int label = idx.query_labels[static_cast<std::size_t>(q)];
    rel.assign(order.size(), 0);
    long r_count = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      rel[k] = idx.gallery_labels[static_cast<std::size_t>(order[k])] == label;
      r_count += rel[k];
    }
    fn(q, rel, r_count);
  }
}

inline void check_ks(std::span<const int> ks, Eigen::Index gallery_size) {
  for (int k : ks) {
    if (k < 1) throw ConfigError("recall@K needs K >= 1");
    if (k > gallery_size)
      throw ConfigError("recall@" + std::to_string(k) + " exceeds gallery size " +
                        std::to_string(gallery_size));
  }
}

}  // namespace detail

/// Fraction of queries with at least one same-class item in the top K.
template <class Scalar>
std::vector<double> recall_at_k(const BasicRetrievalIndex<Scalar>& idx, std::span<const int> ks) {
  detail::check_ks(ks, idx.gallery_size());
  std::vector<double> hits(ks.size(), 0.0);
  detail::for_each_ranking(idx, [&](Eigen::Index, const std::vector<char>& rel, long) {
    const auto first = std::find(rel.begin(), rel.end(), 1);
    const auto pos = static_cast<long>(first - rel.begin());  // rank of first hit
    for (std::size_t k = 0; k < ks.size(); ++k)
      if (first != rel.end() && pos < ks[k]) hits[k] += 1.0;
  });
  for (double& h : hits) h /= static_cast<double>(idx.queries.rows());
  return hits;
}

namespace detail {

template <class Scalar>
std::pair<double, double> rp_and_map(const BasicRetrievalIndex<Scalar>& idx) {
  double rp = 0.0, map = 0.0;
  long used = 0, skipped = 0;
  for_each_ranking(idx, [&](Eigen::Index, const std::vector<char>& rel, long r) {
    if (r == 0) {
      ++skipped;
      return;
    }
    long hits = 0;
    double ap = 0.0;
    for (long k = 0; k < r; ++k) {
      if (rel[static_cast<std::size_t>(k)]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    rp += static_cast<double>(hits) / static_cast<double>(r);
    map += ap / static_cast<double>(r);
    ++used;
  });
  if (skipped > 0)
    log::warn(std::to_string(skipped) + " queries have no same-class gallery items and were skipped");
  if (used == 0) return {0.0, 0.0};
  return {rp / static_cast<double>(used), map / static_cast<double>(used)};
}

}  // namespace detail

/// Mean precision within the top R, R = number of same-class gallery items.
template <class Scalar>
double r_precision(const BasicRetrievalIndex<Scalar>& idx) {
  return detail::rp_and_map(idx).first;
}

/// Mean over queries of (1/R) sum_{k <= R} P(k) rel(k).
template <class Scalar>
double map_at_r(const BasicRetrievalIndex<Scalar>& idx) {
  return detail::rp_and_map(idx).second;
}

template <class Scalar>
MetricReport evaluate_retrieval(const BasicRetrievalIndex<Scalar>& idx, std::span<const int> ks) {
  MetricReport report;
  const auto recalls = recall_at_k(idx, ks);
  for (std::size_t k = 0; k < ks.size(); ++k) report.recall_at[ks[k]] = recalls[k];
  std::tie(report.r_precision, report.map_at_r) = detail::rp_and_map(idx);
  report.n_queries = static_cast<long>(idx.queries.rows());
  return report;
}

struct EmbeddingStats {
  Eigen::VectorXd mean;      // per dimension
  Eigen::VectorXd variance;  // per dimension, unbiased
  std::vector<double> histogram_edges;  // bins over per-dim variances
  std::vector<long> histogram_counts;
  double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;  // of per-dim variances
};

/// Per-dimension moments and a summary of the variance distribution.
template <class Derived>
EmbeddingStats embedding_stats(const Eigen::MatrixBase<Derived>& x, int bins = 10) {
  if (x.rows() < 2) throw ShapeError("embedding_stats needs at least 2 rows");
  const Eigen::MatrixXd m = x.template cast<double>();
  EmbeddingStats s;
  s.mean = m.colwise().mean().transpose();
  s.variance = ((m.rowwise() - s.mean.transpose()).array().square().colwise().sum() /
                static_cast<double>(m.rows() - 1))
                   .transpose();
  std::vector<double> v(s.variance.data(), s.variance.data() + s.variance.size());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  s.min = v.front();
  s.q25 = quantile(0.25);
  s.median = quantile(0.5);
  s.q75 = quantile(0.75);
  s.max = v.back();
  const double width = (s.max - s.min) / bins;
  for (int b = 0; b <= bins; ++b) s.histogram_edges.push_back(s.min + width * b);
  s.histogram_counts.assign(static_cast<std::size_t>(bins), 0);
  for (double val : v) {
    int b = width > 0 ? static_cast<int>((val - s.min) / width) : 0;
    s.histogram_counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
  }
  return s;
}

struct Projection2D {
  Eigen::MatrixXd coords;      // n x 2
  Eigen::MatrixXd components;  // D x 2, orthonormal (zero column when degenerate)
  Eigen::RowVectorXd mean;
  Eigen::VectorXd eigenvalues;  // of the centered scatter matrix, descending
  bool rank_deficient = false;
};

/// Top-2 principal components. Each component's largest-magnitude loading is
/// made positive.
template <class Derived>
Projection2D project_2d(const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() < 3) throw ShapeError("project_2d needs at least 3 rows");
  if (x.cols() < 2) throw ShapeError("project_2d needs at least 2 columns");
  const Eigen::MatrixXd m = x.template cast<double>();
  Projection2D p;
  p.mean = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - p.mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
  p.eigenvalues = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  p.components = vecs.leftCols(2);
  const double top = std::max(p.eigenvalues(0), 0.0);
  for (int c = 0; c < 2; ++c) {
    if (p.eigenvalues(c) <= 1e-12 * std::max(top, 1e-300)) {
      p.components.col(c).setZero();
      p.rank_deficient = true;
      continue;
    }
    Eigen::Index arg;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (p.components(arg, c) < 0) p.components.col(c) *= -1.0;
  }
  if (p.rank_deficient) log::warn("project_2d: data is rank deficient, trailing component set to zero");
  p.coords = centered * p.components;
  return p;
}

}  // namespace gcahng
