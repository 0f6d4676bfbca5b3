#include "oracles.hpp"

#include "gcahng/cacai.hpp"
#include "gcahng/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace gcahng;

TEST_CASE("interpolation coefficients are a sigmoid of one linear map") {
  Rng rng(1);
  InterpolationHead head(2, rng);
  head.fc.weight.mutable_value() = Matrix::Identity(2, 2);
  head.fc.bias.mutable_value().setZero();
  Matrix e(1, 2);
  e << 0.0, std::log(3.0);
  const Matrix lam = head.compute_lambda(ad::constant(e)).value();
  CHECK(lam(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(lam(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  head.fc.weight.mutable_value().setZero();
  CHECK((head.compute_lambda(ad::constant(rng.normal_matrix(4, 2, 1.0))).value().array() == 0.5).all());

  InterpolationHead random(6, rng);
  const Matrix any = random.compute_lambda(ad::constant(rng.normal_matrix(20, 6, 5.0))).value();
  CHECK((any.array() > 0.0).all());
  CHECK((any.array() < 1.0).all());
  CHECK(random.parameters().size() == 2);
}

TEST_CASE("hardness eta") {
  CHECK(hardness_eta(5.0, 5.0) == doctest::Approx(std::exp(-1.0)));
  double prev = 0.0;
  for (double j : {0.01, 0.1, 1.0, 3.0, 10.0, 100.0}) {
    const double eta = hardness_eta(5.0, j);
    CHECK(eta > prev);
    CHECK(eta < 1.0);
    prev = eta;
  }
  CHECK(hardness_eta(5.0, 0.0) == 0.0);
  CHECK(hardness_eta(5.0, -1.0) == 0.0);
  CHECK(std::isfinite(hardness_eta(5.0, 0.0)));
  InterpolationContext ctx{2.0, 4.0};
  CHECK(ctx.eta() == hardness_eta(2.0, 4.0));
}

TEST_CASE("interpolate_pair hand evaluation") {
  Eigen::RowVector2d zi(1, 0), zj(0, 1);
  Eigen::Matrix<double, 1, 1> lam;
  lam << 0.5;
  const auto out = interpolate_pair(zi, zj, lam, 0.2, std::sqrt(2.0), 0.5);
  CHECK(out(0) == doctest::Approx(0.643934).epsilon(1e-6));
  CHECK(out(1) == doctest::Approx(0.356066).epsilon(1e-6));
}

TEST_CASE("interpolate_pair returns the negative unchanged when it is not farther than the positive") {
  Rng rng(2);
  const Matrix z = oracle::random_unit_rows(2, 5, rng);
  const Eigen::RowVectorXd lam = Eigen::RowVectorXd::Constant(5, 0.3);
  const double d = (z.row(1) - z.row(0)).norm();
  CHECK(interpolate_pair(z.row(0), z.row(1), lam, d, d, 0.7) == z.row(1));
  CHECK(interpolate_pair(z.row(0), z.row(1), lam, d + 0.1, d, 0.7) == z.row(1));
  CHECK(interpolate_pair(z.row(0), z.row(0), lam, 0.0, 0.0, 0.7) == z.row(0));
}

TEST_CASE("interpolation interval properties on unit vectors") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = oracle::random_unit_rows(2, 6, rng);
    const double d_minus = (z.row(1) - z.row(0)).norm();
    const double d_plus = d_minus * rng.uniform();
    const double eta = rng.uniform_open();
    const double s = rng.uniform();
    Eigen::Matrix<double, 1, 1> scalar;
    scalar << s;
    const auto out = interpolate_pair(z.row(0), z.row(1), scalar, d_plus, d_minus, eta);
    CHECK((out - z.row(0)).norm() == doctest::Approx(d_plus + s * eta * (d_minus - d_plus)).epsilon(1e-9));

    const auto zero = interpolate_pair(z.row(0), z.row(1), Eigen::RowVectorXd::Zero(6), d_plus, d_minus, eta);
    CHECK((zero - z.row(0)).norm() == doctest::Approx(d_plus).epsilon(1e-9));

    Eigen::RowVectorXd channel(6);
    for (Index c = 0; c < 6; ++c) channel(c) = rng.uniform();
    const auto mixed = interpolate_pair(z.row(0), z.row(1), channel, d_plus, d_minus, eta);
    const auto one = interpolate_pair(z.row(0), z.row(1), Eigen::RowVectorXd::Ones(6), d_plus, d_minus, eta);
    for (Index c = 0; c < 6; ++c) {
      CHECK(mixed(c) >= std::min(zero(c), one(c)) - 1e-12);
      CHECK(mixed(c) <= std::max(zero(c), one(c)) + 1e-12);
    }
  }
}

TEST_CASE("random weighting fusion") {
  Rng rng(4);
  Matrix single(1, 3);
  single << 0.1, -2.0, 5.0;
  CHECK(fuse_random_weighting(single, rng).z_hat == single.row(0));

  Matrix two(2, 2);
  two << 1, 0, 0, 3;
  const std::vector<double> half{0.5};
  const auto mid = fuse_with_weights(two, half);
  CHECK(mid.z_hat(0) == 0.5);
  CHECK(mid.z_hat(1) == 1.5);

  const Matrix four = rng.normal_matrix(4, 5, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = fuse_random_weighting(four, rng);
    REQUIRE(f.coefficients.size() == 4);
    double total = 0.0;
    Eigen::RowVectorXd direct = Eigen::RowVectorXd::Zero(5);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(f.coefficients[t] >= 0.0);
      total += f.coefficients[t];
      direct += f.coefficients[t] * four.row(static_cast<Index>(t));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((direct - f.z_hat).norm() < 1e-12);
  }

  CHECK_THROWS_AS(fuse_random_weighting(Matrix(0, 3), rng), ConfigError);
  const auto c = fusion_coefficients(std::vector<double>{0.25, 0.5});
  CHECK(c == std::vector<double>{0.125, 0.375, 0.5});
}

TEST_CASE("pair distances") {
  Rng rng(5);
  const Matrix z = oracle::random_unit_rows(6, 4, rng);
  const auto labels = oracle::group_labels(3, 2);
  const auto pos = select_positives(labels, rng);
  for (Index i = 0; i < 6; ++i) {
    CHECK(pos[static_cast<std::size_t>(i)] != i);
    CHECK(labels[static_cast<std::size_t>(pos[static_cast<std::size_t>(i)])] == labels[static_cast<std::size_t>(i)]);
  }
  const auto d = pair_distances(z, pos);
  for (Index i = 0; i < 6; ++i) {
    double s = 0.0;
    const Index p = pos[static_cast<std::size_t>(i)];
    for (Index c = 0; c < 4; ++c) s += (z(p, c) - z(i, c)) * (z(p, c) - z(i, c));
    CHECK(d.d_plus(i) == std::sqrt(s));
    for (Index j = 0; j < 6; ++j) {
      double t = 0.0;
      for (Index c = 0; c < 4; ++c) t += (z(j, c) - z(i, c)) * (z(j, c) - z(i, c));
      CHECK(d.d_minus(i, j) == std::sqrt(t));
    }
  }

  Matrix anti(2, 2);
  anti << 1, 0, -1, 0;
  const std::vector<Index> self{0, 0};
  CHECK(pair_distances(anti, self).d_minus(0, 1) == 2.0);
  CHECK(pair_distances(anti, self).d_plus(0) == 0.0);

  CHECK_THROWS_WITH_AS(select_positives(std::vector<int>{1, 1, 2}, rng), doctest::Contains("class 2"),
                       SamplingError);
}

namespace {

SyntheticNegatives run_synthesis(int n, int m, std::uint64_t seed, SynthesisOptions options = {}) {
  Rng rng(seed);
  const Index d = 4;
  const auto labels = oracle::group_labels(n, m);
  const auto b = static_cast<Index>(labels.size());
  const Var z = ad::constant(oracle::random_unit_rows(b, d, rng));
  Matrix lam(b * b, d);
  for (Index r = 0; r < lam.rows(); ++r)
    for (Index c = 0; c < d; ++c) lam(r, c) = rng.uniform_open();
  const auto pos = select_positives(labels, rng);
  return synthesize(z, labels, ad::constant(lam), pos, 0.6, options, rng);
}

}  // namespace

TEST_CASE("synthesize counts, layout and convex hull") {
  const auto two = run_synthesis(3, 2, 6);
  CHECK(two.count() == 6 * 2);
  for (Index r = 0; r < two.fusion.rows(); ++r) CHECK((two.fusion.row(r).array() > 0.0).count() == 2);

  const auto pair = run_synthesis(2, 3, 7);
  CHECK(pair.count() == 6);

  const auto s = run_synthesis(3, 2, 8);
  for (Index r = 0; r < s.count(); ++r) {
    CHECK(s.anchor[static_cast<std::size_t>(r)] == r / 2);
    CHECK(s.fusion.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((s.fusion.row(r).array() >= 0.0).all());
    for (Index c = 0; c < 4; ++c) {
      double lo = 1e300, hi = -1e300;
      for (Index p = 0; p < s.fusion.cols(); ++p)
        if (s.fusion(r, p) > 0.0) {
          lo = std::min(lo, s.interpolants.value()(p, c));
          hi = std::max(hi, s.interpolants.value()(p, c));
        }
      CHECK(s.z_hat.value()(r, c) >= lo - 1e-12);
      CHECK(s.z_hat.value()(r, c) <= hi + 1e-12);
    }
  }
}

TEST_CASE("synthesized interpolants match the per-pair formula") {
  Rng rng(9);
  const auto labels = oracle::group_labels(3, 2);
  const Matrix z = oracle::random_unit_rows(6, 4, rng);
  Matrix lam(36, 4);
  for (Index r = 0; r < 36; ++r)
    for (Index c = 0; c < 4; ++c) lam(r, c) = rng.uniform_open();
  const auto pos = select_positives(labels, rng);
  const auto s = synthesize(ad::constant(z), labels, ad::constant(lam), pos, 0.4, {}, rng);
  for (std::size_t p = 0; p < s.pairs.size(); ++p) {
    const auto [i, j] = s.pairs[p];
    const auto expect = interpolate_pair(z.row(i), z.row(j), lam.row(i * 6 + j), s.distances.d_plus(i),
                                         s.distances.d_minus(i, j), 0.4);
    CHECK((s.interpolants.value().row(static_cast<Index>(p)) - expect).norm() < 1e-12);
    CHECK(s.interpolated[p] == (s.distances.d_minus(i, j) > s.distances.d_plus(i)));
  }
}

TEST_CASE("synthesis is deterministic and random pick is one-hot") {
  const auto a = run_synthesis(3, 3, 10), b = run_synthesis(3, 3, 10);
  CHECK(a.z_hat.value() == b.z_hat.value());
  SynthesisOptions pick;
  pick.fusion = FusionMode::random_pick;
  const auto p = run_synthesis(3, 3, 11, pick);
  for (Index r = 0; r < p.fusion.rows(); ++r) {
    CHECK((p.fusion.row(r).array() == 1.0).count() == 1);
    CHECK(p.fusion.row(r).sum() == 1.0);
  }
  SynthesisOptions renorm;
  renorm.renormalize = true;
  const auto u = run_synthesis(3, 2, 12, renorm);
  for (Index r = 0; r < u.count(); ++r) CHECK(u.z_hat.value().row(r).norm() == doctest::Approx(1.0));
}

TEST_CASE("synthesis gradients match finite differences") {
  Rng rng(13);
  const auto labels = oracle::group_labels(2, 3);
  Var z = ad::parameter(oracle::random_unit_rows(6, 3, rng));
  Matrix l(36, 3);
  for (Index r = 0; r < 36; ++r)
    for (Index c = 0; c < 3; ++c) l(r, c) = rng.uniform_open();
  Var lam = ad::parameter(l);
  const auto pos = select_positives(labels, rng);
  const Matrix w = rng.normal_matrix(6, 3, 1.0);
  const double err = oracle::gradient_check(
      [&] {
        Rng fixed(99);
        const auto s = synthesize(z, labels, lam, pos, 0.5, {}, fixed);
        return ad::sum(ad::mul(s.z_hat, ad::constant(w)));
      },
      {z, lam});
  CHECK(err < 1e-5);
}
