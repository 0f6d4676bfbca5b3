#include "oracles.hpp"

#include "gcahng/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace gcahng;

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());
  Rng s1 = Rng(42).split(1), s2 = Rng(42).split(2), s1b = Rng(42).split(1);
  CHECK(s1.next_u64() != s2.next_u64());
  CHECK(Rng(42).split(1).next_u64() == s1b.next_u64());
}

TEST_CASE("rng uniform, normal and below have the right ranges and moments") {
  Rng rng(7);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform_open();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    const double g = rng.normal();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  std::set<std::size_t> seen;
  for (int k = 0; k < 1000; ++k) {
    const auto v = rng.below(5);
    CHECK(v < 5);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("linear layer computes x W + b and names its tensors") {
  Rng rng(1);
  Linear l(3, 2, rng);
  CHECK(l.bias.value().isZero());
  const double bound = std::sqrt(6.0 / 5.0);
  CHECK(l.weight.value().cwiseAbs().maxCoeff() <= bound);
  Matrix x(1, 3);
  x << 1, 2, 3;
  const Matrix y = l(ad::constant(x)).value();
  CHECK(y.isApprox(x * l.weight.value()));
  ParameterList ps;
  l.collect(ps, "fc");
  REQUIRE(ps.size() == 2);
  CHECK(ps[0].name == "fc.weight");
  CHECK(ps[1].name == "fc.bias");
}

TEST_CASE("AdamW first step matches the closed form") {
  Var p = ad::parameter((Matrix(1, 2) << 1.0, -2.0).finished());
  AdamW opt({{"p", p}}, {.lr = 0.1, .weight_decay = 0.01});
  ad::backward(ad::sum(ad::mul(p, ad::constant((Matrix(1, 2) << 3.0, -0.5).finished()))));
  opt.step();
  // m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps) plus decoupled decay.
  const double eps = 1e-8;
  const double e0 = 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 3.0 / (3.0 + eps);
  const double e1 = -2.0 - 0.1 * 0.01 * -2.0 - 0.1 * -0.5 / (0.5 + eps);
  CHECK(p.value()(0, 0) == doctest::Approx(e0).epsilon(1e-12));
  CHECK(p.value()(0, 1) == doctest::Approx(e1).epsilon(1e-12));
}

TEST_CASE("AdamW leaves parameters without gradient untouched") {
  Var used = ad::parameter(Matrix::Ones(1, 1));
  Var idle = ad::parameter(Matrix::Ones(1, 1));
  AdamW opt({{"used", used}, {"idle", idle}}, {.lr = 0.1, .weight_decay = 0.5});
  ad::backward(ad::sum(used));
  opt.step();
  CHECK(idle.value()(0, 0) == 1.0);
  CHECK(used.value()(0, 0) != 1.0);
}

TEST_CASE("cosine decay endpoints") {
  CHECK(cosine_decay(0.3, 0.0) == doctest::Approx(0.3));
  CHECK(cosine_decay(0.3, 0.5) == doctest::Approx(0.15));
  CHECK(cosine_decay(0.3, 1.0) == doctest::Approx(0.0));
  CHECK(cosine_decay(0.3, 2.0) == doctest::Approx(0.0));
}

TEST_CASE("layer norm and feed-forward gradients match finite differences") {
  Rng rng(9);
  LayerNorm ln(4);
  FeedForward ffn(4, 2, rng);
  Var x = ad::parameter(rng.normal_matrix(3, 4, 1.0));
  ParameterList ps;
  ln.collect(ps, "ln");
  ffn.collect(ps, "ffn");
  std::vector<Var> inputs{x};
  for (auto& p : ps) inputs.push_back(p.var);
  const Matrix w = rng.normal_matrix(3, 4, 1.0);
  CHECK(oracle::gradient_check([&] { return ad::sum(ad::mul(ffn(ln(x)), ad::constant(w))); }, inputs) < 1e-6);
}
