#include "gcahng/losses.hpp"

#include "gcahng/error.hpp"

#include <json.hpp>

#include <cmath>

namespace gcahng {

void Stage1Weights::validate() const {
  if (!(gamma_s >= 0.0) || !std::isfinite(gamma_s)) throw ConfigError("gamma_s must be finite and >= 0");
  if (!(gamma_d >= 0.0) || !std::isfinite(gamma_d)) throw ConfigError("gamma_d must be finite and >= 0");
}

ProxyBank::ProxyBank(Index dim, int num_classes, double alpha_, double delta_, Rng& rng)
    : alpha(alpha_), delta(delta_) {
  Matrix p = rng.normal_matrix(num_classes, dim, 1.0);
  p.rowwise().normalize();
  proxies = ad::parameter(std::move(p));
}

std::vector<int> class_indices(std::span<const int> labels, int num_classes) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l < 1 || l > num_classes) {
      throw ConfigError("label " + std::to_string(l) + " outside the " + std::to_string(num_classes) +
                        " training classes");
    }
    out.push_back(l - 1);
  }
  return out;
}

Var mean_cross_entropy(const Var& logits, std::span<const int> targets) {
  return ad::mean(ad::cross_entropy_rows(logits, targets));
}

Var j_ce(const Var& z_hat, std::span<const int> negative_labels, const ClassifierHead& head,
         bool freeze_head) {
  const auto targets = class_indices(negative_labels, head.num_classes());
  return mean_cross_entropy(freeze_head ? head.frozen_logits(z_hat) : head.logits(z_hat), targets);
}

Var j_sim_rows(const Var& a, const Var& b) {
  const Var cos = ad::row_sum(ad::mul(ad::l2_normalize_rows(a), ad::l2_normalize_rows(b)));
  return ad::add_scalar(ad::neg(cos), 1.0);
}

namespace {

Var population_std(const Var& x) {
  const Var centered = ad::sub(x, ad::broadcast_scalar(ad::mean(x), x.rows(), x.cols()));
  return ad::sqrt(ad::mean(ad::square(centered)));
}

}  // namespace

Var j_div_rows(const Var& lambda, std::span<const int> labels, bool per_channel) {
  const auto b = static_cast<Index>(labels.size());
  if (lambda.rows() != b * b) throw ShapeError("j_div: lambda must be (B*B) x D");
  std::vector<Var> rows;
  for (Index i = 0; i < b; ++i) {
    std::vector<Index> idx;
    for (Index j = 0; j < b; ++j)
      if (labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(i)]) idx.push_back(i * b + j);
    const Var gathered = ad::gather_rows(lambda, idx);
    if (gathered.value().size() < 2) {
      throw NumericError("j_div: anchor " + std::to_string(i) + " has fewer than 2 lambda entries");
    }
    Var dev;
    if (per_channel) {
      if (idx.size() < 2) throw NumericError("j_div: per-channel deviation needs >= 2 negatives");
      std::vector<Var> per;
      for (Index c = 0; c < lambda.cols(); ++c) per.push_back(population_std(ad::slice_cols(gathered, c, 1)));
      dev = ad::mean(ad::vcat(per));
    } else {
      dev = population_std(gathered);
    }
    rows.push_back(ad::add_scalar(ad::neg(dev), 1.0));
  }
  return ad::vcat(rows);
}

GenerationLoss j_gen(const SyntheticNegatives& synth, const Var& z, const Var& lambda,
                     std::span<const int> labels, int classes_per_batch, const ClassifierHead& head_z,
                     const Stage1Weights& weights, bool per_channel_div) {
  weights.validate();
  const auto b = static_cast<double>(labels.size());
  const auto n = static_cast<double>(classes_per_batch);
  const auto count = static_cast<double>(synth.count());

  const auto targets = class_indices(synth.negative_class, head_z.num_classes());
  const Var ce_rows = ad::cross_entropy_rows(head_z.frozen_logits(synth.z_hat), targets);
  const Var sim_rows = j_sim_rows(ad::gather_rows(z, synth.anchor), synth.z_hat);
  const Var div_rows = j_div_rows(lambda, labels, per_channel_div);
  // Each anchor's diversity term appears once per negative class.
  const Var div_per_synth = ad::gather_rows(div_rows, synth.anchor);

  Var total = ad::sum(ce_rows);
  total = ad::add(total, ad::scale(ad::sum(sim_rows), weights.gamma_s));
  total = ad::add(total, ad::scale(ad::sum(div_per_synth), weights.gamma_d));

  GenerationLoss out;
  out.total = ad::scale(total, 1.0 / (b * n));
  out.ce = ce_rows.value().sum() / count;
  out.sim = sim_rows.value().sum() / count;
  out.div = div_rows.value().mean();
  return out;
}

Var j_cz(const Var& z, std::span<const int> labels, const ClassifierHead& head_z) {
  return mean_cross_entropy(head_z.logits(z), class_indices(labels, head_z.num_classes()));
}

Var j_gca(const Var& nodes, std::span<const int> labels, const ClassifierHead& head_v) {
  return mean_cross_entropy(head_v.logits(nodes), class_indices(labels, head_v.num_classes()));
}

Var j_syn(const Var& z, std::span<const Index> positives, const SyntheticNegatives& synth) {
  const Index b = z.rows();
  if (synth.count() % b != 0) throw ShapeError("j_syn: synthetic negatives must be B x (N-1)");
  const Index per_anchor = synth.count() / b;
  for (Index r = 0; r < synth.count(); ++r)
    if (synth.anchor[static_cast<std::size_t>(r)] != r / per_anchor)
      throw ShapeError("j_syn: synthetic negatives must be anchor-major");

  const Var s_pos = ad::row_sum(ad::mul(z, ad::gather_rows(z, positives)));
  const Var s_neg = ad::row_sum(ad::mul(ad::gather_rows(z, synth.anchor), synth.z_hat));
  const Var margins = ad::sub(s_neg, ad::gather_rows(s_pos, synth.anchor));
  std::vector<Var> cols;
  for (Index k = 0; k < per_anchor; ++k) {
    std::vector<Index> idx;
    for (Index i = 0; i < b; ++i) idx.push_back(i * per_anchor + k);
    cols.push_back(ad::gather_rows(margins, idx));
  }
  const Var table = ad::hcat(cols);
  return ad::mean(ad::log1p_sum_exp_rows(table, ad::Mask::Constant(b, per_anchor, false)));
}

Var np_loss(const Var& z, int n, int m) {
  if (m < 2) throw ConfigError("modified N-pair loss needs m >= 2 instances per class");
  if (z.rows() != static_cast<Index>(n) * m) throw ShapeError("np_loss: batch is not N x m");
  std::vector<Index> anchor_rows(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) anchor_rows[static_cast<std::size_t>(j)] = j;
  const Var anchors = ad::gather_rows(z, anchor_rows);
  ad::Mask diagonal = ad::Mask::Constant(n, n, false);
  for (int j = 0; j < n; ++j) diagonal(j, j) = true;

  Var total;
  for (int g = 1; g < m; ++g) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) rows[static_cast<std::size_t>(j)] = j + g * n;
    const Var group = ad::gather_rows(z, rows);
    const Var sims = ad::matmul_nt(anchors, group);  // [j, q] = z_j . z_{q+gN}
    const Var own = ad::row_sum(ad::mul(anchors, group));
    const Var margins = ad::sub(sims, ad::broadcast_cols(own, n));
    const Var term = ad::sum(ad::log1p_sum_exp_rows(margins, diagonal));
    total = total ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0 / static_cast<double>((m - 1) * n));
}

double original_npair_loss(const Matrix& anchors, const Matrix& positives) {
  const Index n = anchors.rows();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double own = anchors.row(i).dot(positives.row(i));
    double s = 0.0;
    for (Index j = 0; j < n; ++j)
      if (j != i) s += std::exp(anchors.row(i).dot(positives.row(j)) - own);
    total += std::log1p(s);
  }
  return total / static_cast<double>(n);
}

Var pa_loss(const Var& z, std::span<const int> labels, const ProxyBank& bank) {
  const int c = bank.num_classes();
  const auto targets = class_indices(labels, c);
  const auto b = static_cast<Index>(labels.size());
  // cos(z_r, p_c) transposed to proxies x samples.
  const Var sims = ad::matmul_nt(ad::l2_normalize_rows(bank.proxies), ad::l2_normalize_rows(z));
  ad::Mask not_positive(c, b), not_negative(c, b);
  std::vector<Index> present;
  for (Index p = 0; p < c; ++p) {
    bool any = false;
    for (Index r = 0; r < b; ++r) {
      const bool same = targets[static_cast<std::size_t>(r)] == p;
      not_positive(p, r) = !same;
      not_negative(p, r) = same;
      any = any || same;
    }
    if (any) present.push_back(p);
  }
  const Var pull = ad::scale(ad::add_scalar(sims, -bank.delta), -bank.alpha);
  const Var push = ad::scale(ad::add_scalar(sims, bank.delta), bank.alpha);
  const Var pos_terms = ad::gather_rows(ad::log1p_sum_exp_rows(pull, not_positive), present);
  const Var neg_terms = ad::log1p_sum_exp_rows(push, not_negative);
  return ad::add(ad::mean(pos_terms), ad::mean(neg_terms));
}

double balance_factor(double beta, double j_gen) {
  return std::exp(-beta / std::max(j_gen, 1e-8));
}

bool LossReport::all_finite() const {
  for (double v : {j_ce, j_sim, j_div, j_gen, j_cz, j_gca, j_syn, j_r, j_m, gamma_n, eta})
    if (!std::isfinite(v)) return false;
  return true;
}

std::string LossReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["j_ce"] = j_ce;
  j["j_sim"] = j_sim;
  j["j_div"] = j_div;
  j["j_gen"] = j_gen;
  j["j_cz"] = j_cz;
  j["j_gca"] = j_gca;
  j["j_syn"] = j_syn;
  j["j_r"] = j_r;
  j["j_m"] = j_m;
  j["gamma_n"] = gamma_n;
  j["eta"] = eta;
  return j.dump();
}

}  // namespace gcahng
