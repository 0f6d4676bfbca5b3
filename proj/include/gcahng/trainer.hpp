#pragma once

// Two-stage training loop. Each iteration first updates the graph network on
// the generation objective (embeddings detached) and the embedding
// classifier on real samples, then jointly updates backbone, graph network
// and node classifier on the metric objective with the interpolation
// coefficients detached.

#include "gcahng/backbone.hpp"
#include "gcahng/cacai.hpp"
#include "gcahng/datakit.hpp"
#include "gcahng/evalkit.hpp"
#include "gcahng/gcl.hpp"
#include "gcahng/losses.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gcahng {

enum class Ablation { full, single_coeff, no_global, no_hadamard, no_rw, baseline, baseline_gnn };

/// Throws ConfigError listing the valid arm names.
Ablation parse_ablation(std::string_view name);
std::string to_string(Ablation arm);
const std::vector<std::string>& ablation_names();

MetricLoss parse_metric_loss(std::string_view name);
std::string to_string(MetricLoss loss);

struct TrainConfig {
  int epochs = 30;
  int classes_per_batch = 4;    // N
  int instances_per_class = 3;  // m
  int batches_per_epoch = 0;    // 0: train size / (N m)
  double lr_backbone = 1.5e-4;
  double lr_graph = 3e-4;
  double lr_head_z = 1e-3;
  double lr_head_v = 3e-4;
  double weight_decay = 1e-4;
  double alpha_pull = 5.0;
  double beta = 2.0;
  Stage1Weights stage1{1.0, 0.03};
  double gen_ema_decay = 0.9;
  GraphNetConfig graph{};
  BackboneConfig backbone{};
  MetricLoss metric_loss = MetricLoss::np_modified;
  double pa_alpha = 32.0;
  double pa_delta = 0.1;
  Ablation ablation = Ablation::full;
  bool per_channel_div = false;
  bool shuffle_fusion_order = false;
  bool renormalize_synthetic = false;
  int early_stop_patience = 0;  // epochs without R@1 gain; 0 disables
  std::vector<int> eval_ks = {1, 2, 4, 8};
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
/// Strict: unknown keys raise ConfigError. Missing keys keep `base` values.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// All trainable parts. Groups that an arm never uses are absent.
class Model {
 public:
  Model(const TrainConfig& cfg, Index input_dim, int num_classes, Rng& rng);

  Backbone backbone;
  std::optional<GraphNetwork> graph;
  std::optional<InterpolationHead> interp;
  std::optional<ClassifierHead> head_z;
  std::optional<ClassifierHead> head_v;
  std::optional<ProxyBank> proxies;

  /// Named groups: backbone, gcl, cacai_fc, heads, proxies (when present).
  std::map<std::string, ParameterList> parameter_groups() const;
  ParameterList all_parameters() const;

  Index input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }

 private:
  Index input_dim_;
  int num_classes_;
};

struct RunState {
  int epoch = 0;
  long step = 0;
  long total_steps = 1;
  /// Mean metric loss of the last finished epoch; empty during epoch 0.
  std::optional<double> j_avg;
  double epoch_metric_sum = 0.0;
  long epoch_metric_count = 0;
  double eta = 0.0;  // frozen for the current epoch once j_avg exists
  std::optional<double> j_gen_ema;
  double gamma_n = 0.0;
};

/// Epoch boundary: J_avg <- mean metric loss of the finished epoch, eta
/// recomputed from it and the counters reset.
void update_schedules(RunState& state, const TrainConfig& cfg);

/// Everything the two stages share within one iteration.
struct StepContext {
  const LabeledBatch* batch = nullptr;
  EmbeddingBatch embeddings;
  Var metric_loss;  // J_r on the live embeddings
  std::vector<Index> positives;
  double eta = 0.0;
  /// Stage 2 treats lambda as a constant; when set, this value is used
  /// instead of recomputing it from the graph (finite-difference checks).
  std::optional<Matrix> fixed_lambda;
};

struct StepDiagnostics {
  SyntheticNegatives synthetic;
  Matrix lambda;
  AttentionTrace attention;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, Index input_dim, int num_classes);

  /// One full iteration: prepare, stage 1, stage 2. Throws NumericError on a
  /// non-finite loss before any parameter of the failing stage moves.
  LossReport train_step(const LabeledBatch& batch);

  StepContext prepare(const LabeledBatch& batch);
  /// Generator update on J_gen, then the embedding classifier on J_cz.
  void stage1(StepContext& ctx, LossReport& report);
  /// Joint update of backbone, graph network and node classifier on J_m.
  void stage2(StepContext& ctx, LossReport& report);

  /// Differentiable stage-2 objective without touching any optimizer.
  Var metric_objective(StepContext& ctx, LossReport* report = nullptr,
                       StepDiagnostics* diag = nullptr);
  /// Differentiable stage-1 generation objective (embeddings detached).
  GenerationLoss generation_objective(StepContext& ctx, StepDiagnostics* diag = nullptr);

  void end_epoch() { update_schedules(state_, cfg_); }

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  RunState& state() { return state_; }
  const TrainConfig& config() const { return cfg_; }
  Rng& synthesis_rng() { return synth_rng_; }

 private:
  Var real_metric_loss(const EmbeddingBatch& zb) const;
  Var lambda_for(const CorrelationGraph& g) const;
  SynthesisOptions synthesis_options() const;
  void zero_all_grads() const;
  void check_finite(double value, const char* name, const LossReport& report) const;

  TrainConfig cfg_;
  Model model_;
  RunState state_;
  Rng synth_rng_;
  AdamW opt_backbone_;
  AdamW opt_graph_;
  AdamW opt_head_z_;
  AdamW opt_head_v_;
};

struct EpochRecord {
  int epoch = 0;
  double mean_j_m = 0.0;
  double mean_j_r = 0.0;
  double eta = 0.0;
  MetricReport validation;
};

struct Checkpoint;

struct FitOptions {
  const Dataset* validation = nullptr;
  std::ostream* log = nullptr;  // JSON lines, one LossReport per step
  std::ostream* timing = nullptr;
  /// Called with every per-epoch checkpoint (epoch 0 = initial weights).
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct FitResult {
  std::vector<LossReport> log;
  std::vector<EpochRecord> history;
  MetricReport final_validation;
  int epochs_run = 0;
};

FitResult fit(const Dataset& train, const TrainConfig& cfg, const FitOptions& options = {});

/// Eval-mode retrieval on `data` with the backbone of `model`.
MetricReport evaluate_model(const Model& model, const Dataset& data, std::span<const int> ks);

}  // namespace gcahng
