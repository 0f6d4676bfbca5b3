#include "gcahng/trainer.hpp"

#include "gcahng/checkpoint.hpp"
#include "gcahng/error.hpp"
#include "gcahng/log.hpp"

#include <chrono>
#include <cmath>
#include <functional>

namespace gcahng {

namespace {

const std::vector<std::pair<Ablation, std::string>>& ablation_table() {
  static const std::vector<std::pair<Ablation, std::string>> table = {
      {Ablation::full, "full"},
      {Ablation::single_coeff, "single_coeff"},
      {Ablation::no_global, "no_global"},
      {Ablation::no_hadamard, "no_hadamard"},
      {Ablation::no_rw, "no_rw"},
      {Ablation::baseline, "baseline"},
      {Ablation::baseline_gnn, "baseline_gnn"},
  };
  return table;
}

bool generates_negatives(Ablation a) { return a != Ablation::baseline && a != Ablation::baseline_gnn; }
bool uses_graph(Ablation a) { return a != Ablation::baseline; }
bool uses_interp_head(Ablation a) { return generates_negatives(a) && a != Ablation::single_coeff; }

GraphNetConfig graph_config_for(const TrainConfig& cfg) {
  GraphNetConfig g = cfg.graph;
  g.node_propagation = cfg.ablation != Ablation::no_global;
  g.edge_sum = cfg.ablation != Ablation::no_hadamard;
  return g;
}

}  // namespace

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [arm, name] : ablation_table()) out.push_back(name);
    return out;
  }();
  return names;
}

Ablation parse_ablation(std::string_view name) {
  for (const auto& [arm, n] : ablation_table())
    if (n == name) return arm;
  std::string valid;
  for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ablation arm '" + std::string(name) + "'; valid arms: " + valid);
}

std::string to_string(Ablation arm) {
  for (const auto& [a, n] : ablation_table())
    if (a == arm) return n;
  return "unknown";
}

MetricLoss parse_metric_loss(std::string_view name) {
  if (name == "np_modified") return MetricLoss::np_modified;
  if (name == "proxy_anchor") return MetricLoss::proxy_anchor;
  throw ConfigError("unknown metric loss '" + std::string(name) + "'; valid: np_modified, proxy_anchor");
}

std::string to_string(MetricLoss loss) {
  return loss == MetricLoss::np_modified ? "np_modified" : "proxy_anchor";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (classes_per_batch < 2) throw ConfigError("classes_per_batch (N) must be >= 2");
  if (instances_per_class < 2)
    throw ConfigError("instances_per_class (m) must be >= 2: every anchor needs a positive");
  if (batches_per_epoch < 0) throw ConfigError("batches_per_epoch must be >= 0");
  for (auto [v, name] : {std::pair{lr_backbone, "lr_backbone"}, {lr_graph, "lr_graph"},
                         {lr_head_z, "lr_head_z"}, {lr_head_v, "lr_head_v"}}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(alpha_pull > 0.0)) throw ConfigError("alpha_pull must be positive");
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  if (!(gen_ema_decay >= 0.0 && gen_ema_decay < 1.0)) throw ConfigError("gen_ema_decay must lie in [0, 1)");
  stage1.validate();
  backbone.validate();
  if (uses_graph(ablation)) graph.validate(backbone.embed_dim);
  for (int k : eval_ks)
    if (k < 1) throw ConfigError("eval_ks entries must be >= 1");
  if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be >= 0");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["classes_per_batch"] = c.classes_per_batch;
  j["instances_per_class"] = c.instances_per_class;
  j["batches_per_epoch"] = c.batches_per_epoch;
  j["lr_backbone"] = c.lr_backbone;
  j["lr_graph"] = c.lr_graph;
  j["lr_head_z"] = c.lr_head_z;
  j["lr_head_v"] = c.lr_head_v;
  j["weight_decay"] = c.weight_decay;
  j["alpha_pull"] = c.alpha_pull;
  j["beta"] = c.beta;
  j["gamma_s"] = c.stage1.gamma_s;
  j["gamma_d"] = c.stage1.gamma_d;
  j["gen_ema_decay"] = c.gen_ema_decay;
  j["graph"] = {{"steps", c.graph.steps},
                {"heads", c.graph.heads},
                {"ffn_expansion", c.graph.ffn_expansion},
                {"share_weights", c.graph.share_weights}};
  std::vector<long> hidden(c.backbone.hidden_dims.begin(), c.backbone.hidden_dims.end());
  j["backbone"] = {{"kind", c.backbone.kind == BackboneKind::mlp ? "mlp" : "identity"},
                   {"input_dim", c.backbone.input_dim},
                   {"hidden_dims", hidden},
                   {"embed_dim", c.backbone.embed_dim},
                   {"normalize", c.backbone.normalize}};
  j["metric_loss"] = to_string(c.metric_loss);
  j["pa_alpha"] = c.pa_alpha;
  j["pa_delta"] = c.pa_delta;
  j["ablation"] = to_string(c.ablation);
  j["per_channel_div"] = c.per_channel_div;
  j["shuffle_fusion_order"] = c.shuffle_fusion_order;
  j["renormalize_synthetic"] = c.renormalize_synthetic;
  j["early_stop_patience"] = c.early_stop_patience;
  j["eval_ks"] = c.eval_ks;
  j["seed"] = c.seed;
  return j;
}

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

void apply_strict(const nlohmann::json& j, const std::map<std::string, Setter>& setters,
                  const std::string& section) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + key + "' in " + section);
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for " + section + "." + key + ": " + e.what());
    }
  }
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  std::map<std::string, Setter> graph = {
      {"steps", [&](auto& v) { c.graph.steps = v.template get<int>(); }},
      {"heads", [&](auto& v) { c.graph.heads = v.template get<int>(); }},
      {"ffn_expansion", [&](auto& v) { c.graph.ffn_expansion = v.template get<int>(); }},
      {"share_weights", [&](auto& v) { c.graph.share_weights = v.template get<bool>(); }},
  };
  std::map<std::string, Setter> backbone = {
      {"kind",
       [&](auto& v) {
         const auto s = v.template get<std::string>();
         if (s == "mlp") {
           c.backbone.kind = BackboneKind::mlp;
         } else if (s == "identity") {
           c.backbone.kind = BackboneKind::identity;
         } else {
           throw ConfigError("backbone.kind must be mlp or identity");
         }
       }},
      {"input_dim", [&](auto& v) { c.backbone.input_dim = v.template get<Index>(); }},
      {"hidden_dims", [&](auto& v) { c.backbone.hidden_dims = v.template get<std::vector<Index>>(); }},
      {"embed_dim", [&](auto& v) { c.backbone.embed_dim = v.template get<Index>(); }},
      {"normalize", [&](auto& v) { c.backbone.normalize = v.template get<bool>(); }},
  };
  std::map<std::string, Setter> top = {
      {"epochs", [&](auto& v) { c.epochs = v.template get<int>(); }},
      {"classes_per_batch", [&](auto& v) { c.classes_per_batch = v.template get<int>(); }},
      {"instances_per_class", [&](auto& v) { c.instances_per_class = v.template get<int>(); }},
      {"batches_per_epoch", [&](auto& v) { c.batches_per_epoch = v.template get<int>(); }},
      {"lr_backbone", [&](auto& v) { c.lr_backbone = v.template get<double>(); }},
      {"lr_graph", [&](auto& v) { c.lr_graph = v.template get<double>(); }},
      {"lr_head_z", [&](auto& v) { c.lr_head_z = v.template get<double>(); }},
      {"lr_head_v", [&](auto& v) { c.lr_head_v = v.template get<double>(); }},
      {"weight_decay", [&](auto& v) { c.weight_decay = v.template get<double>(); }},
      {"alpha_pull", [&](auto& v) { c.alpha_pull = v.template get<double>(); }},
      {"beta", [&](auto& v) { c.beta = v.template get<double>(); }},
      {"gamma_s", [&](auto& v) { c.stage1.gamma_s = v.template get<double>(); }},
      {"gamma_d", [&](auto& v) { c.stage1.gamma_d = v.template get<double>(); }},
      {"gen_ema_decay", [&](auto& v) { c.gen_ema_decay = v.template get<double>(); }},
      {"graph", [&](auto& v) { apply_strict(v, graph, "train.graph"); }},
      {"backbone", [&](auto& v) { apply_strict(v, backbone, "train.backbone"); }},
      {"metric_loss", [&](auto& v) { c.metric_loss = parse_metric_loss(v.template get<std::string>()); }},
      {"pa_alpha", [&](auto& v) { c.pa_alpha = v.template get<double>(); }},
      {"pa_delta", [&](auto& v) { c.pa_delta = v.template get<double>(); }},
      {"ablation", [&](auto& v) { c.ablation = parse_ablation(v.template get<std::string>()); }},
      {"per_channel_div", [&](auto& v) { c.per_channel_div = v.template get<bool>(); }},
      {"shuffle_fusion_order", [&](auto& v) { c.shuffle_fusion_order = v.template get<bool>(); }},
      {"renormalize_synthetic", [&](auto& v) { c.renormalize_synthetic = v.template get<bool>(); }},
      {"early_stop_patience", [&](auto& v) { c.early_stop_patience = v.template get<int>(); }},
      {"eval_ks", [&](auto& v) { c.eval_ks = v.template get<std::vector<int>>(); }},
      {"seed", [&](auto& v) { c.seed = v.template get<std::uint64_t>(); }},
  };
  apply_strict(j, top, "train");
  return c;
}

Model::Model(const TrainConfig& cfg, Index input_dim, int num_classes, Rng& rng)
    : input_dim_(input_dim), num_classes_(num_classes) {
  BackboneConfig bc = cfg.backbone;
  bc.input_dim = input_dim;
  backbone = Backbone(bc, rng);
  const Index d = bc.embed_dim;
  if (uses_graph(cfg.ablation)) graph.emplace(d, graph_config_for(cfg), rng);
  if (uses_interp_head(cfg.ablation)) interp.emplace(d, rng);
  if (generates_negatives(cfg.ablation)) head_z.emplace(d, num_classes, rng);
  if (uses_graph(cfg.ablation)) head_v.emplace(d, num_classes, rng);
  if (cfg.metric_loss == MetricLoss::proxy_anchor)
    proxies.emplace(d, num_classes, cfg.pa_alpha, cfg.pa_delta, rng);
}

std::map<std::string, ParameterList> Model::parameter_groups() const {
  std::map<std::string, ParameterList> groups;
  groups["backbone"] = backbone.parameters();
  if (graph) groups["gcl"] = graph->parameters();
  if (interp) groups["cacai_fc"] = interp->parameters();
  if (head_z || head_v) {
    ParameterList heads;
    if (head_z) head_z->collect(heads, "z");
    if (head_v) head_v->collect(heads, "v");
    groups["heads"] = heads;
  }
  if (proxies) groups["proxies"] = {{"proxies", proxies->proxies}};
  return groups;
}

ParameterList Model::all_parameters() const {
  ParameterList out;
  for (auto& [name, list] : parameter_groups()) out.insert(out.end(), list.begin(), list.end());
  return out;
}

void update_schedules(RunState& state, const TrainConfig& cfg) {
  if (state.epoch_metric_count > 0) {
    double j_avg = state.epoch_metric_sum / static_cast<double>(state.epoch_metric_count);
    if (!(j_avg > 0.0)) {
      log::warn("J_avg = " + std::to_string(j_avg) + " is not positive; clamped to 1e-8");
      j_avg = 1e-8;
    }
    state.j_avg = j_avg;
    state.eta = hardness_eta(cfg.alpha_pull, j_avg);
  }
  state.epoch_metric_sum = 0.0;
  state.epoch_metric_count = 0;
  ++state.epoch;
}

namespace {

ParameterList concat(std::initializer_list<ParameterList> lists) {
  ParameterList out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, Index input_dim, int num_classes)
    : cfg_([&] {
        cfg.backbone.input_dim = input_dim;
        cfg.validate();
        return cfg;
      }()),
      model_([&] {
        Rng init = Rng(cfg_.seed).split(1);
        return Model(cfg_, input_dim, num_classes, init);
      }()),
      synth_rng_(Rng(cfg_.seed).split(3)) {
  ParameterList f = model_.backbone.parameters();
  if (model_.proxies) f.push_back({"proxies", model_.proxies->proxies});
  ParameterList g;
  if (model_.graph) g = concat({g, model_.graph->parameters()});
  if (model_.interp) g = concat({g, model_.interp->parameters()});
  ParameterList cz, cv;
  if (model_.head_z) model_.head_z->collect(cz, "z");
  if (model_.head_v) model_.head_v->collect(cv, "v");
  opt_backbone_ = AdamW(f, {.lr = cfg_.lr_backbone, .weight_decay = cfg_.weight_decay});
  opt_graph_ = AdamW(g, {.lr = cfg_.lr_graph, .weight_decay = cfg_.weight_decay});
  opt_head_z_ = AdamW(cz, {.lr = cfg_.lr_head_z, .weight_decay = cfg_.weight_decay});
  opt_head_v_ = AdamW(cv, {.lr = cfg_.lr_head_v, .weight_decay = cfg_.weight_decay});
}

Var Trainer::real_metric_loss(const EmbeddingBatch& zb) const {
  if (cfg_.metric_loss == MetricLoss::proxy_anchor) return pa_loss(zb.z, zb.labels, *model_.proxies);
  return np_loss(zb.z, zb.classes_per_batch, zb.instances_per_class);
}

Var Trainer::lambda_for(const CorrelationGraph& g) const {
  if (!model_.interp) return ad::constant(Matrix::Ones(g.edges.rows(), g.edges.cols()));
  return model_.interp->compute_lambda(g.edges);
}

SynthesisOptions Trainer::synthesis_options() const {
  SynthesisOptions o;
  o.fusion = cfg_.ablation == Ablation::no_rw ? FusionMode::random_pick : FusionMode::random_weighting;
  o.shuffle_fusion_order = cfg_.shuffle_fusion_order;
  o.renormalize = cfg_.renormalize_synthetic;
  return o;
}

void Trainer::zero_all_grads() const { zero_grad(model_.all_parameters()); }

void Trainer::check_finite(double value, const char* name, const LossReport& report) const {
  if (std::isfinite(value)) return;
  log::error(std::string("non-finite ") + name + " at step " + std::to_string(state_.step) +
             "; partial report: " + report.to_json_line());
  throw NumericError(std::string("non-finite ") + name + " at step " + std::to_string(state_.step));
}

StepContext Trainer::prepare(const LabeledBatch& batch) {
  if (!has_group_layout(batch.labels, batch.classes_per_batch, batch.instances_per_class))
    throw SamplingError("batch labels do not follow the N x m group layout");
  StepContext ctx;
  ctx.batch = &batch;
  ctx.embeddings = model_.backbone.embed(batch, Mode::train);
  ctx.metric_loss = real_metric_loss(ctx.embeddings);
  if (generates_negatives(cfg_.ablation)) ctx.positives = select_positives(batch.labels, synth_rng_);

  state_.epoch_metric_sum += ctx.metric_loss.item();
  state_.epoch_metric_count += 1;
  if (!state_.j_avg) {
    // First epoch: bootstrap J_avg from the running mean so far.
    const double running = state_.epoch_metric_sum / static_cast<double>(state_.epoch_metric_count);
    ctx.eta = hardness_eta(cfg_.alpha_pull, running);
  } else {
    ctx.eta = state_.eta;
  }
  return ctx;
}

GenerationLoss Trainer::generation_objective(StepContext& ctx, StepDiagnostics* diag) {
  const auto& labels = ctx.embeddings.labels;
  const Var z = ad::detach(ctx.embeddings.z);
  const CorrelationGraph g = model_.graph->propagate(init_graph(z, labels), diag ? &diag->attention : nullptr);
  const Var lambda = lambda_for(g);
  SyntheticNegatives synth =
      synthesize(z, labels, lambda, ctx.positives, ctx.eta, synthesis_options(), synth_rng_);
  GenerationLoss gen = j_gen(synth, z, lambda, labels, ctx.embeddings.classes_per_batch, *model_.head_z,
                             cfg_.stage1, cfg_.per_channel_div);
  if (diag) {
    diag->lambda = lambda.value();
    diag->synthetic = std::move(synth);
  }
  return gen;
}

void Trainer::stage1(StepContext& ctx, LossReport& report) {
  if (!generates_negatives(cfg_.ablation)) return;
  const GenerationLoss gen = generation_objective(ctx);
  report.j_gen = gen.total.item();
  report.j_ce = gen.ce;
  report.j_sim = gen.sim;
  report.j_div = gen.div;
  check_finite(report.j_gen, "J_gen", report);
  zero_all_grads();
  ad::backward(gen.total);
  const double progress = static_cast<double>(state_.step) / static_cast<double>(state_.total_steps);
  opt_graph_.step(cosine_decay(cfg_.lr_graph, progress));
  zero_all_grads();

  const Var cz = j_cz(ad::detach(ctx.embeddings.z), ctx.embeddings.labels, *model_.head_z);
  report.j_cz = cz.item();
  check_finite(report.j_cz, "J_cz", report);
  ad::backward(cz);
  opt_head_z_.step();
  zero_all_grads();

  state_.j_gen_ema = state_.j_gen_ema
                         ? cfg_.gen_ema_decay * *state_.j_gen_ema + (1.0 - cfg_.gen_ema_decay) * report.j_gen
                         : report.j_gen;
  state_.gamma_n = balance_factor(cfg_.beta, *state_.j_gen_ema);
}

Var Trainer::metric_objective(StepContext& ctx, LossReport* report, StepDiagnostics* diag) {
  const Var& z = ctx.embeddings.z;
  const auto& labels = ctx.embeddings.labels;
  Var total = ctx.metric_loss;
  if (report) report->j_r = ctx.metric_loss.item();
  if (!model_.graph) return total;

  const CorrelationGraph g = model_.graph->propagate(init_graph(z, labels), diag ? &diag->attention : nullptr);
  const Var gca = j_gca(g.nodes, labels, *model_.head_v);
  total = ad::add(total, gca);
  if (report) report->j_gca = gca.item();
  if (!generates_negatives(cfg_.ablation)) return total;

  const Var lambda = ctx.fixed_lambda ? ad::constant(*ctx.fixed_lambda) : ad::detach(lambda_for(g));
  SyntheticNegatives synth =
      synthesize(z, labels, lambda, ctx.positives, ctx.eta, synthesis_options(), synth_rng_);
  const Var syn = j_syn(z, ctx.positives, synth);
  total = ad::add(total, ad::scale(syn, 1.0 - state_.gamma_n));
  if (report) report->j_syn = syn.item();
  if (diag) {
    diag->lambda = lambda.value();
    diag->synthetic = std::move(synth);
  }
  return total;
}

void Trainer::stage2(StepContext& ctx, LossReport& report) {
  const Var jm = metric_objective(ctx, &report);
  report.j_m = jm.item();
  report.gamma_n = state_.gamma_n;
  check_finite(report.j_m, "J_m", report);
  zero_all_grads();
  ad::backward(jm);
  opt_backbone_.step();
  if (model_.graph) {
    const double progress = static_cast<double>(state_.step) / static_cast<double>(state_.total_steps);
    opt_graph_.step(cosine_decay(cfg_.lr_graph, progress));
  }
  if (model_.head_v) opt_head_v_.step();
  zero_all_grads();
}

LossReport Trainer::train_step(const LabeledBatch& batch) {
  LossReport report;
  report.step = state_.step;
  report.epoch = state_.epoch;
  StepContext ctx = prepare(batch);
  report.eta = generates_negatives(cfg_.ablation) ? ctx.eta : 0.0;
  stage1(ctx, report);
  stage2(ctx, report);
  if (!report.all_finite()) check_finite(std::nan(""), "loss report", report);
  ++state_.step;
  return report;
}

MetricReport evaluate_model(const Model& model, const Dataset& data, std::span<const int> ks) {
  const Matrix emb = model.backbone.embed_matrix(data.features);
  return evaluate_retrieval(RetrievalIndex::single_set(emb, data.labels), ks);
}

namespace {

nlohmann::ordered_json metric_json(int epoch, const MetricReport& r) {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  nlohmann::ordered_json rec;
  for (const auto& [k, v] : r.recall_at) rec[std::to_string(k)] = v;
  j["recall_at"] = rec;
  j["r_precision"] = r.r_precision;
  j["map_at_r"] = r.map_at_r;
  j["n_queries"] = r.n_queries;
  return j;
}

}  // namespace

FitResult fit(const Dataset& train, const TrainConfig& cfg_in, const FitOptions& options) {
  TrainConfig cfg = cfg_in;
  cfg.backbone.input_dim = train.dim();
  cfg.validate();
  Trainer trainer(cfg, train.dim(), train.num_classes);
  Rng batch_rng = Rng(cfg.seed).split(2);
  const int batch_size = cfg.classes_per_batch * cfg.instances_per_class;
  const long per_epoch = cfg.batches_per_epoch > 0
                             ? cfg.batches_per_epoch
                             : std::max<long>(1, static_cast<long>(train.size()) / batch_size);
  trainer.state().total_steps = std::max<long>(1, per_epoch * cfg.epochs);

  FitResult result;
  nlohmann::ordered_json history = nlohmann::ordered_json::array();
  double best_r1 = -1.0;
  int stale = 0;

  auto checkpoint_and_eval = [&](int epoch, double mean_jm, double mean_jr) {
    Checkpoint ckpt = snapshot(trainer.model(), cfg, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_j_m = mean_jm;
    rec.mean_j_r = mean_jr;
    rec.eta = trainer.state().eta;
    if (options.validation) {
      // Validation always runs on the saved snapshot, never on live weights.
      const Model frozen = model_from_checkpoint(ckpt);
      rec.validation = evaluate_model(frozen, *options.validation, cfg.eval_ks);
      result.final_validation = rec.validation;
      history.push_back(metric_json(epoch, rec.validation));
    }
    ckpt.metric_history = history;
    result.history.push_back(rec);
    if (options.on_checkpoint) options.on_checkpoint(ckpt);
    return rec;
  };

  checkpoint_and_eval(0, 0.0, 0.0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double sum_jm = 0.0, sum_jr = 0.0;
    for (long b = 0; b < per_epoch; ++b) {
      const LabeledBatch batch =
          sample_balanced(train, cfg.classes_per_batch, cfg.instances_per_class, batch_rng);
      const auto t0 = std::chrono::steady_clock::now();
      LossReport report = trainer.train_step(batch);
      const auto t1 = std::chrono::steady_clock::now();
      sum_jm += report.j_m;
      sum_jr += report.j_r;
      if (options.log) *options.log << report.to_json_line() << '\n';
      if (options.timing) {
        nlohmann::ordered_json t;
        t["step"] = report.step;
        t["step_ms"] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        *options.timing << t.dump() << '\n';
      }
      result.log.push_back(report);
    }
    trainer.end_epoch();
    const auto rec = checkpoint_and_eval(epoch, sum_jm / static_cast<double>(per_epoch),
                                         sum_jr / static_cast<double>(per_epoch));
    result.epochs_run = epoch;
    log::info("epoch " + std::to_string(epoch) + " J_m " + std::to_string(rec.mean_j_m) +
              (options.validation ? " R@" + std::to_string(rec.validation.recall_at.begin()->first) + " " +
                                        std::to_string(rec.validation.recall_at.begin()->second)
                                  : std::string()));
    if (options.validation && cfg.early_stop_patience > 0 && !rec.validation.recall_at.empty()) {
      const double r1 = rec.validation.recall_at.begin()->second;
      if (r1 > best_r1) {
        best_r1 = r1;
        stale = 0;
      } else if (++stale >= cfg.early_stop_patience) {
        log::info("early stop after epoch " + std::to_string(epoch));
        break;
      }
    }
  }
  return result;
}

}  // namespace gcahng
