#include "oracles.hpp"

#include "gcahng/error.hpp"
#include "gcahng/losses.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>

using namespace gcahng;

namespace {

ClassifierHead head_with(const Matrix& w, const Matrix& b) {
  Rng rng(0);
  ClassifierHead h(w.rows(), static_cast<int>(w.cols()), rng);
  h.linear.weight.mutable_value() = w;
  h.linear.bias.mutable_value() = b;
  return h;
}

struct Fixture {
  int n = 3, m = 2, c = 5;
  std::vector<int> labels;
  Var z, lambda;
  std::vector<Index> positives;
  SyntheticNegatives synth;
  ClassifierHead head;

  explicit Fixture(std::uint64_t seed, int n_ = 3, int m_ = 2) : n(n_), m(m_) {
    Rng rng(seed);
    labels = oracle::group_labels(n, m);
    for (int& l : labels) l += 1;  // classes 2..n+1 of c
    const auto b = static_cast<Index>(labels.size());
    z = ad::parameter(oracle::random_unit_rows(b, 4, rng));
    Matrix l(b * b, 4);
    for (Index r = 0; r < l.rows(); ++r)
      for (Index k = 0; k < 4; ++k) l(r, k) = rng.uniform_open();
    lambda = ad::parameter(l);
    positives = select_positives(labels, rng);
    synth = synthesize(z, labels, lambda, positives, 0.5, {}, rng);
    head = ClassifierHead(4, c, rng);
  }
};

}  // namespace

TEST_CASE("cross-entropy values") {
  Matrix logits(1, 3);
  logits << 1, 2, 3;
  const auto h = head_with(Matrix::Identity(3, 3), Matrix::Zero(1, 3));
  CHECK(j_ce(ad::constant(logits), std::vector<int>{3}, h, true).item() == doctest::Approx(0.40761).epsilon(1e-4));
  CHECK(j_ce(ad::constant(Matrix::Ones(2, 3)), std::vector<int>{1, 2}, h, true).item() ==
        doctest::Approx(std::log(3.0)));
  Matrix big(1, 3);
  big << 0, 0, 60;
  CHECK(j_ce(ad::constant(big), std::vector<int>{3}, h, true).item() < 1e-20);
  CHECK_THROWS_AS(j_ce(ad::constant(logits), std::vector<int>{4}, h, true), ConfigError);
  CHECK_THROWS_AS(j_ce(ad::constant(logits), std::vector<int>{0}, h, true), ConfigError);
}

TEST_CASE("similarity term") {
  Matrix a(3, 2), b(3, 2);
  a << 1, 0, 1, 0, 1, 0;
  b << 2, 0, 0, 3, -1, 0;
  const Matrix s = j_sim_rows(ad::constant(a), ad::constant(b)).value();
  CHECK(s(0, 0) == doctest::Approx(0.0));
  CHECK(s(1, 0) == doctest::Approx(1.0));
  CHECK(s(2, 0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(j_sim_rows(ad::constant(Matrix::Zero(1, 2)), ad::constant(Matrix::Ones(1, 2))), NumericError);
}

TEST_CASE("diversity term") {
  const std::vector<int> labels{1, 2};
  Matrix lam = Matrix::Constant(4, 2, 0.3);
  CHECK(j_div_rows(ad::constant(lam), labels).value()(0, 0) == doctest::Approx(1.0));
  lam.row(1) << 0, 1;  // anchor 0's only negative
  lam.row(2) << 1, 0;
  const Matrix d = j_div_rows(ad::constant(lam), labels).value();
  CHECK(d(0, 0) == doctest::Approx(0.5));
  CHECK(d(1, 0) == doctest::Approx(0.5));
  Rng rng(1);
  Fixture f(2);
  const Matrix r = j_div_rows(f.lambda, f.labels).value();
  for (Index i = 0; i < r.rows(); ++i) {
    CHECK(r(i, 0) > 0.0);
    CHECK(r(i, 0) <= 1.0);
    CHECK(r(i, 0) == doctest::Approx(oracle::div_term(f.lambda.value(), f.labels, i)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(j_div_rows(ad::constant(Matrix::Constant(4, 1, 0.5)), labels), NumericError);
  Matrix per(4, 2);
  per << 0, 0, 0.2, 0.4, 0.6, 0.8, 0, 0;
  CHECK_THROWS_AS(j_div_rows(ad::constant(per), labels, true), NumericError);
}

TEST_CASE("generation objective matches the per-pair loop") {
  Fixture f(3);
  const Stage1Weights w{1.0, 0.03};
  const auto g = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, w);
  const double expect = oracle::j_gen(f.z.value(), f.synth.z_hat.value(), f.synth.anchor, f.synth.negative_class,
                                      f.lambda.value(), f.labels, f.n, f.head.linear.weight.value(),
                                      f.head.linear.bias.value(), 1.0, 0.03);
  CHECK(g.total.item() == doctest::Approx(expect).epsilon(1e-9));

  const auto ce_only = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{0.0, 0.0});
  const double count = static_cast<double>(f.synth.count());
  CHECK(ce_only.total.item() * static_cast<double>(f.labels.size() * f.n) / count == doctest::Approx(ce_only.ce));
  const auto s1 = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{1.0, 0.0});
  const auto s2 = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{2.0, 0.0});
  CHECK(s2.total.item() - ce_only.total.item() ==
        doctest::Approx(2.0 * (s1.total.item() - ce_only.total.item())).epsilon(1e-12));
  CHECK_THROWS_AS(j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{-1.0, 0.0}), ConfigError);
}

TEST_CASE("the generation objective never moves the classifier head") {
  Fixture f(4);
  const auto g = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{});
  f.head.linear.weight.zero_grad();
  ad::backward(g.total);
  CHECK_FALSE(f.head.linear.weight.has_grad());
  CHECK(f.lambda.has_grad());
}

TEST_CASE("classification objectives match per-sample loops") {
  Fixture f(5);
  const Matrix w = f.head.linear.weight.value(), b = f.head.linear.bias.value();
  CHECK(j_cz(f.z, f.labels, f.head).item() == doctest::Approx(oracle::mean_head_ce(f.z.value(), f.labels, w, b)).epsilon(1e-12));
  CHECK(j_gca(f.z, f.labels, f.head).item() == doctest::Approx(oracle::mean_head_ce(f.z.value(), f.labels, w, b)).epsilon(1e-12));
  const auto flat = head_with(Matrix::Zero(4, 5), Matrix::Zero(1, 5));
  CHECK(j_cz(f.z, f.labels, flat).item() == doctest::Approx(std::log(5.0)));
  CHECK(j_gca(f.z, f.labels, flat).item() == doctest::Approx(std::log(5.0)));
  Matrix onehot = Matrix::Zero(4, 5);
  onehot(0, 1) = 100.0;
  Matrix x(1, 4);
  x << 1, 0, 0, 0;
  CHECK(j_cz(ad::constant(x), std::vector<int>{2}, head_with(onehot, Matrix::Zero(1, 5))).item() < 1e-30);
}

TEST_CASE("synthetic pair loss") {
  Fixture f(6);
  CHECK(j_syn(f.z, f.positives, f.synth).item() ==
        doctest::Approx(oracle::j_syn(f.z.value(), f.positives, f.synth.z_hat.value(), f.synth.anchor)).epsilon(1e-12));

  // Every synthetic negative scores exactly like the positive.
  SyntheticNegatives tie = f.synth;
  Matrix zh(f.synth.count(), 4);
  for (Index r = 0; r < zh.rows(); ++r) {
    const Index i = f.synth.anchor[static_cast<std::size_t>(r)];
    zh.row(r) = f.z.value().row(f.positives[static_cast<std::size_t>(i)]);
  }
  tie.z_hat = ad::constant(zh);
  CHECK(j_syn(f.z, f.positives, tie).item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  SyntheticNegatives far = f.synth;
  Matrix zf(f.synth.count(), 4);
  for (Index r = 0; r < zf.rows(); ++r) zf.row(r) = -200.0 * f.z.value().row(f.synth.anchor[static_cast<std::size_t>(r)]);
  far.z_hat = ad::constant(zf);
  CHECK(j_syn(f.z, f.positives, far).item() < 1e-30);

  // B = 4, N = 2 with hand-set inner products.
  Matrix z(4, 2);
  z << 1, 0, 0, 1, 1, 0, 0, 1;
  const std::vector<Index> pos{2, 3, 0, 1};
  SyntheticNegatives hand;
  hand.anchor = {0, 1, 2, 3};
  hand.negative_class = {2, 1, 2, 1};
  Matrix h(4, 2);
  h << 0.5, 0, 0, -1, 2, 0, 0, 0.25;
  hand.z_hat = ad::constant(h);
  const double expect =
      (std::log1p(std::exp(0.5 - 1)) + std::log1p(std::exp(-1.0 - 1)) + std::log1p(std::exp(2.0 - 1)) +
       std::log1p(std::exp(0.25 - 1))) / 4.0;
  CHECK(j_syn(ad::constant(z), pos, hand).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("modified N-pair loss") {
  Rng rng(7);
  const Matrix z = oracle::random_unit_rows(6, 4, rng);
  CHECK(np_loss(ad::constant(z), 3, 2).item() == doctest::Approx(oracle::np_loss(z, 3, 2)).epsilon(1e-12));
  const Matrix z4 = oracle::random_unit_rows(12, 4, rng);
  CHECK(np_loss(ad::constant(z4), 3, 4).item() == doctest::Approx(oracle::np_loss(z4, 3, 4)).epsilon(1e-12));
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = oracle::random_unit_rows(8, 5, rng);
    CHECK(std::abs(np_loss(ad::constant(x), 4, 2).item() - original_npair_loss(x.topRows(4), x.bottomRows(4))) < 1e-9);
  }
  const Matrix same = Matrix::Constant(8, 3, 1.0 / std::sqrt(3.0));
  CHECK(np_loss(ad::constant(same), 4, 2).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(np_loss(ad::constant(z.topRows(3)), 3, 1), ConfigError);

  // Relabelling which class sits in which slot leaves the loss unchanged.
  Matrix perm(6, 4);
  const int order[3] = {2, 0, 1};
  for (int g = 0; g < 2; ++g)
    for (int j = 0; j < 3; ++j) perm.row(j + 3 * g) = z.row(order[j] + 3 * g);
  CHECK(np_loss(ad::constant(perm), 3, 2).item() == doctest::Approx(np_loss(ad::constant(z), 3, 2).item()).epsilon(1e-12));
}

TEST_CASE("proxy anchor loss") {
  Rng rng(8);
  ProxyBank bank(4, 5, 32.0, 0.1, rng);
  const Matrix z = oracle::random_unit_rows(6, 4, rng);
  const std::vector<int> labels{1, 3, 4, 1, 3, 4};
  CHECK(pa_loss(ad::constant(z), labels, bank).item() ==
        doctest::Approx(oracle::pa_loss(z, labels, bank.proxies.value(), 32.0, 0.1)).epsilon(1e-12));
  for (Index p = 0; p < 5; ++p) CHECK(bank.proxies.value().row(p).norm() == doctest::Approx(1.0));

  // One sample exactly at the margin of its own proxy; no negatives.
  ProxyBank one;
  one.alpha = 32.0;
  one.delta = 0.1;
  Matrix p(1, 2);
  p << 1, 0;
  one.proxies = ad::parameter(p);
  Matrix x(1, 2);
  x << 0.1, std::sqrt(1 - 0.01);
  CHECK(pa_loss(ad::constant(x), std::vector<int>{1}, one).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // C = 2, B = 4 hand evaluation.
  ProxyBank two;
  two.alpha = 2.0;
  two.delta = 0.5;
  Matrix q(2, 2);
  q << 1, 0, 0, 1;
  two.proxies = ad::parameter(q);
  Matrix e(4, 2);
  e << 1, 0, 0.6, 0.8, 0, 1, -1, 0;
  const std::vector<int> l2{1, 1, 2, 2};
  // sims to proxy 1: 1, 0.6, 0, -1 ; to proxy 2: 0, 0.8, 1, 0
  const double pos1 = std::log1p(std::exp(-2 * (1 - 0.5)) + std::exp(-2 * (0.6 - 0.5)));
  const double pos2 = std::log1p(std::exp(-2 * (1 - 0.5)) + std::exp(-2 * (0 - 0.5)));
  const double neg1 = std::log1p(std::exp(2 * (0 + 0.5)) + std::exp(2 * (-1 + 0.5)));
  const double neg2 = std::log1p(std::exp(2 * (0 + 0.5)) + std::exp(2 * (0.8 + 0.5)));
  CHECK(pa_loss(ad::constant(e), l2, two).item() == doctest::Approx((pos1 + pos2) / 2 + (neg1 + neg2) / 2).epsilon(1e-12));
  CHECK_THROWS_AS(pa_loss(ad::constant(e), std::vector<int>{1, 1, 2, 3}, two), ConfigError);
}

TEST_CASE("balance factor") {
  CHECK(balance_factor(2.0, 2.0) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(1.0 - balance_factor(2.0, 2.0) == doctest::Approx(0.63212).epsilon(1e-5));
  CHECK(balance_factor(2.0, 1e12) == doctest::Approx(1.0));
  double prev = 0.0;
  for (double j : {0.1, 0.5, 1.0, 2.0, 8.0}) {
    CHECK(balance_factor(2.0, j) > prev);
    prev = balance_factor(2.0, j);
  }
  CHECK(balance_factor(2.0, 0.0) == 0.0);
}

TEST_CASE("losses are nonnegative on random batches") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    Fixture f(seed, 2 + static_cast<int>(seed % 3), 2);
    CHECK(j_syn(f.z, f.positives, f.synth).item() >= 0.0);
    CHECK(np_loss(f.z, f.n, f.m).item() >= 0.0);
    CHECK(j_cz(f.z, f.labels, f.head).item() >= 0.0);
    const auto g = j_gen(f.synth, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{});
    CHECK(g.total.item() >= 0.0);
    CHECK(g.sim >= 0.0);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Fixture f(21);
  Rng rng(22);
  ProxyBank bank(4, 5, 32.0, 0.1, rng);
  auto& w = f.head.linear.weight;
  auto& b = f.head.linear.bias;
  CHECK(oracle::gradient_check([&] { return np_loss(f.z, f.n, f.m); }, {f.z}) < 1e-4);
  CHECK(oracle::gradient_check([&] { return pa_loss(f.z, f.labels, bank); }, {f.z, bank.proxies}) < 1e-4);
  CHECK(oracle::gradient_check([&] { return j_cz(f.z, f.labels, f.head); }, {f.z, w, b}) < 1e-4);
  CHECK(oracle::gradient_check(
            [&] {
              Rng fixed(5);
              return j_syn(f.z, f.positives, synthesize(f.z, f.labels, f.lambda, f.positives, 0.5, {}, fixed));
            },
            {f.z, f.lambda}) < 1e-4);
  CHECK(oracle::gradient_check([&] { return ad::sum(j_div_rows(f.lambda, f.labels)); }, {f.lambda}) < 1e-4);
  CHECK(oracle::gradient_check([&] { return ad::sum(j_div_rows(f.lambda, f.labels, true)); }, {f.lambda}) < 1e-4);
  CHECK(oracle::gradient_check(
            [&] {
              Rng fixed(5);
              const auto s = synthesize(f.z, f.labels, f.lambda, f.positives, 0.5, {}, fixed);
              return j_gen(s, f.z, f.lambda, f.labels, f.n, f.head, Stage1Weights{1.0, 0.03}).total;
            },
            {f.z, f.lambda}) < 1e-4);
}

TEST_CASE("loss report serialization") {
  LossReport r;
  r.step = 7;
  r.eta = 0.25;
  CHECK(r.all_finite());
  const auto j = nlohmann::json::parse(r.to_json_line());
  CHECK(j["step"] == 7);
  CHECK(j["eta"] == 0.25);
  for (const char* key : {"j_ce", "j_sim", "j_div", "j_gen", "j_cz", "j_gca", "j_syn", "j_r", "j_m", "gamma_n"})
    CHECK(j.contains(key));
  r.j_m = std::nan("");
  CHECK_FALSE(r.all_finite());
}
