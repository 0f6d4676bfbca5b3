#include "gcahng/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gcahng {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  engine_.seed(splitmix64(s));
}

Rng Rng::split(std::uint64_t stream) const {
  std::uint64_t s = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return Rng(splitmix64(s));
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller; one draw per call keeps the stream position simple.
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) return 0;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Matrix Rng::normal_matrix(Index rows, Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = stddev * normal();
  return m;
}

void zero_grad(const ParameterList& params) {
  for (const auto& p : params) p.var.node()->grad.resize(0, 0);
}

Linear::Linear(Index in, Index out, Rng& rng) {
  // Xavier-uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Index r = 0; r < in; ++r)
    for (Index c = 0; c < out; ++c) w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
  weight = ad::parameter(std::move(w));
  bias = ad::parameter(Matrix::Zero(1, out));
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(Index dim)
    : gain(ad::parameter(Matrix::Ones(1, dim))), bias(ad::parameter(Matrix::Zero(1, dim))) {}

void LayerNorm::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

FeedForward::FeedForward(Index dim, Index expansion, Rng& rng)
    : up(dim, dim * expansion, rng), down(dim * expansion, dim, rng) {}

void FeedForward::collect(ParameterList& out, const std::string& prefix) const {
  up.collect(out, prefix + ".up");
  down.collect(out, prefix + ".down");
}

AdamW::AdamW(ParameterList params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
  t_.assign(params_.size(), 0);
}

void AdamW::step() { step(options_.lr); }

void AdamW::step(double lr) {
  const auto& o = options_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& node = *params_[k].var.node();
    if (!node.has_grad()) continue;
    const long t = ++t_[k];
    m_[k] = o.beta1 * m_[k] + (1.0 - o.beta1) * node.grad;
    v_[k] = o.beta2 * v_[k] + (1.0 - o.beta2) * node.grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
    node.value *= (1.0 - lr * o.weight_decay);
    node.value.array() -=
        lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + o.eps);
  }
}

void AdamW::zero_grad() const { gcahng::zero_grad(params_); }

double cosine_decay(double base_lr, double progress) {
  progress = std::clamp(progress, 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace gcahng
