#include "oracles.hpp"

#include "gcahng/error.hpp"
#include "gcahng/evalkit.hpp"

#include <doctest.h>

#include <cmath>

using namespace gcahng;

namespace {

Matrix angles(std::initializer_list<double> degrees) {
  Matrix m(static_cast<Index>(degrees.size()), 2);
  Index r = 0;
  for (double d : degrees) {
    const double a = d * M_PI / 180.0;
    m.row(r++) << std::cos(a), std::sin(a);
  }
  return m;
}

}  // namespace

TEST_CASE("MAP@R hand example with rank pattern 1,0,1") {
  const auto idx = RetrievalIndex::query_gallery(angles({0}), {1}, angles({10, 20, 30, 40}), {1, 2, 1, 1});
  CHECK(map_at_r(idx) == doctest::Approx(0.5556).epsilon(1e-4));
  CHECK(r_precision(idx) == doctest::Approx(2.0 / 3.0));
  const std::vector<int> ks{1, 2, 4};
  const auto rep = evaluate_retrieval(idx, ks);
  CHECK(rep.recall_at.at(1) == 1.0);
  CHECK(rep.n_queries == 1);
}

TEST_CASE("trivial retrieval outcomes") {
  // Tight, well separated clusters.
  const auto good = RetrievalIndex::single_set(angles({0, 1, 90, 91, 180, 181}), {1, 1, 2, 2, 3, 3});
  const std::vector<int> one{1};
  CHECK(recall_at_k(good, one)[0] == 1.0);
  CHECK(r_precision(good) == 1.0);
  CHECK(map_at_r(good) == 1.0);

  // Interleaved classes: every nearest neighbour is the other class.
  const auto bad = RetrievalIndex::single_set(angles({0, 10, 20, 30}), {1, 2, 1, 2});
  CHECK(recall_at_k(bad, one)[0] == 0.0);

  // Singleton relevant item ranked last: R = 1 and top-1 wrong.
  const auto worst = RetrievalIndex::query_gallery(angles({0}), {1}, angles({5, 90}), {2, 1});
  CHECK(r_precision(worst) == 0.0);
  CHECK(map_at_r(worst) == 0.0);
}

TEST_CASE("queries without same-class gallery items are skipped") {
  const auto idx = RetrievalIndex::query_gallery(angles({0, 45}), {1, 3}, angles({10, 80}), {1, 2});
  CHECK(r_precision(idx) == 1.0);
  CHECK(map_at_r(idx) == 1.0);
  const std::vector<int> ks{1};
  CHECK(recall_at_k(idx, ks)[0] == 0.5);
}

TEST_CASE("K larger than the gallery is an error") {
  const auto idx = RetrievalIndex::single_set(angles({0, 10, 20}), {1, 1, 2});
  const std::vector<int> ks{3};
  CHECK_THROWS_WITH_AS(recall_at_k(idx, ks), doctest::Contains("exceeds gallery size 2"), ConfigError);
  const std::vector<int> zero{0};
  CHECK_THROWS_AS(recall_at_k(idx, zero), ConfigError);
  CHECK_THROWS_AS(RetrievalIndex::query_gallery(Matrix::Ones(1, 3), {1}, Matrix::Ones(2, 2), {1, 1}), ShapeError);
}

TEST_CASE("metrics equal the exhaustive loop oracle") {
  Rng rng(1);
  const std::vector<int> ks{1, 2, 4, 8, 16};
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = rng.normal_matrix(200, 6, 1.0);
    std::vector<int> labels(200);
    for (int& l : labels) l = 1 + static_cast<int>(rng.below(5));
    const auto idx = RetrievalIndex::single_set(x, labels);
    const auto rep = evaluate_retrieval(idx, ks);
    const auto oracle = oracle::single_set_metrics(x, labels, ks);
    for (std::size_t k = 0; k < ks.size(); ++k) CHECK(rep.recall_at.at(ks[k]) == oracle.recall[k]);
    CHECK(rep.r_precision == doctest::Approx(oracle.rp).epsilon(1e-12));
    CHECK(rep.map_at_r == doctest::Approx(oracle.map).epsilon(1e-12));
    double prev = 0.0;
    for (int k : ks) {
      CHECK(rep.recall_at.at(k) >= prev);
      prev = rep.recall_at.at(k);
    }
  }
}

TEST_CASE("ties are broken by gallery index") {
  Matrix g(3, 2);
  g << 1, 0, 1, 0, 1, 0;
  const auto idx = RetrievalIndex::query_gallery(angles({0}), {1}, g, {2, 1, 1});
  CHECK(map_at_r(idx) == doctest::Approx(0.25));
  CHECK(r_precision(idx) == doctest::Approx(0.5));
  const std::vector<int> one{1};
  CHECK(recall_at_k(idx, one)[0] == 0.0);
}

TEST_CASE("metrics are invariant under a common rotation") {
  Rng rng(2);
  const Matrix x = rng.normal_matrix(60, 4, 1.0);
  std::vector<int> labels(60);
  for (int& l : labels) l = 1 + static_cast<int>(rng.below(4));
  const Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(4, 4, 1.0));
  const Matrix q = qr.householderQ();
  const std::vector<int> ks{1, 4};
  const auto a = evaluate_retrieval(RetrievalIndex::single_set(x, labels), ks);
  const auto b = evaluate_retrieval(RetrievalIndex::single_set(x * q, labels), ks);
  CHECK(a.recall_at == b.recall_at);
  CHECK(a.map_at_r == doctest::Approx(b.map_at_r).epsilon(1e-12));
}

TEST_CASE("float embeddings use the same code path") {
  Rng rng(3);
  const Matrix x = rng.normal_matrix(50, 5, 1.0);
  std::vector<int> labels(50);
  for (int& l : labels) l = 1 + static_cast<int>(rng.below(3));
  const Eigen::MatrixXf xf = x.cast<float>();
  const std::vector<int> ks{1, 2};
  const auto rep = evaluate_retrieval(BasicRetrievalIndex<float>::single_set(xf, labels), ks);
  const auto oracle = oracle::single_set_metrics(xf.cast<double>(), labels, ks);
  CHECK(rep.recall_at.at(1) == doctest::Approx(oracle.recall[0]));
}

TEST_CASE("embedding statistics") {
  const auto c = embedding_stats(Matrix::Constant(5, 3, 2.0));
  CHECK(c.variance.isZero());
  CHECK(c.max == 0.0);

  Rng rng(4);
  Matrix x = rng.normal_matrix(10000, 4, 1.0);
  const auto s = embedding_stats(x);
  for (Index d = 0; d < 4; ++d) CHECK(std::abs(s.variance(d) - 1.0) < 0.1);

  x.col(1) *= 3.0;
  x.col(2) *= 0.2;
  const auto mixed = embedding_stats(x, 5);
  CHECK(mixed.variance(2) < mixed.variance(0));
  CHECK(mixed.variance(0) < mixed.variance(1));
  long total = 0;
  for (long n : mixed.histogram_counts) total += n;
  CHECK(total == 4);
  CHECK(mixed.histogram_edges.size() == 6);
  CHECK(mixed.min <= mixed.q25);
  CHECK(mixed.median <= mixed.q75);
  CHECK_THROWS_AS(embedding_stats(Matrix::Ones(1, 3)), ShapeError);
}

TEST_CASE("principal component projection") {
  Rng rng(5);
  const Matrix two = rng.normal_matrix(30, 2, 1.0);
  const auto p = project_2d(two);
  const Matrix recon = (p.coords * p.components.transpose()).rowwise() + p.mean;
  CHECK((recon - two).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p.components.transpose() * p.components - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  for (int c = 0; c < 2; ++c) {
    Index arg;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(p.components(arg, c) > 0.0);
  }

  Matrix line(5, 3);
  for (Index r = 0; r < 5; ++r) line.row(r) << r, 2.0 * r, -1.0 * r;
  const auto l = project_2d(line);
  CHECK(l.rank_deficient);
  CHECK(l.coords.col(1).isZero());

  const Matrix five = rng.normal_matrix(40, 5, 1.0);
  const auto f = project_2d(five);
  const Matrix centered = five.rowwise() - f.mean;
  const Matrix back = f.coords * f.components.transpose();
  const double residual = (centered - back).squaredNorm();
  CHECK(residual == doctest::Approx(f.eigenvalues.tail(3).sum()).epsilon(1e-8));
  CHECK_THROWS_AS(project_2d(Matrix::Ones(2, 3)), ShapeError);
}
