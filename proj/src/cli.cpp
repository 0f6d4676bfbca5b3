#include "gcahng/cli.hpp"

#include "gcahng/checkpoint.hpp"
#include "gcahng/error.hpp"
#include "gcahng/log.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

namespace gcahng::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

ojson data_json(const DataSection& d) {
  ojson j;
  j["path"] = d.path;
  j["synthetic"] = {{"num_classes", d.synthetic.num_classes},
                    {"samples_per_class", d.synthetic.samples_per_class},
                    {"input_dim", d.synthetic.input_dim},
                    {"class_center_scale", d.synthetic.class_center_scale},
                    {"within_class_stddev", d.synthetic.within_class_stddev},
                    {"overlap_factor", d.synthetic.overlap_factor},
                    {"seed", d.synthetic.seed}};
  j["holdout_fraction"] = d.holdout_fraction;
  return j;
}

template <class T>
void require_object(const T& j, const std::string& section) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
}

template <class Fn>
void each_key(const nlohmann::json& j, const std::string& section, Fn&& fn) {
  require_object(j, section);
  for (const auto& [key, value] : j.items()) {
    try {
      if (!fn(key, value)) throw ConfigError("unknown key '" + key + "' in " + section);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for " + section + "." + key + ": " + e.what());
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string epoch_dir(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%03d", epoch);
  return buf;
}

ojson report_json(const MetricReport& r) {
  ojson j;
  ojson rec = ojson::object();
  for (const auto& [k, v] : r.recall_at) rec[std::to_string(k)] = v;
  j["recall_at"] = rec;
  j["r_precision"] = r.r_precision;
  j["map_at_r"] = r.map_at_r;
  j["n_queries"] = r.n_queries;
  return j;
}

std::string report_line(const MetricReport& r) {
  std::string s;
  for (const auto& [k, v] : r.recall_at) s += "R@" + std::to_string(k) + " " + fmt(v) + "  ";
  s += "RP " + fmt(r.r_precision) + "  MAP@R " + fmt(r.map_at_r);
  return s;
}

std::string report_csv(const MetricReport& r) {
  std::string s = "metric,value\n";
  for (const auto& [k, v] : r.recall_at) s += "r@" + std::to_string(k) + "," + fmt(v) + "\n";
  s += "rp," + fmt(r.r_precision) + "\n";
  s += "map_at_r," + fmt(r.map_at_r) + "\n";
  s += "n_queries," + std::to_string(r.n_queries) + "\n";
  return s;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  ojson j;
  j["data"] = data_json(cfg.data);
  j["train"] = gcahng::to_json(cfg.train);
  j["eval"] = {{"ks", cfg.eval.ks}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  each_key(j, "config", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "train") {
      c.train = train_config_from_json(v, c.train);
    } else if (key == "eval") {
      each_key(v, "eval", [&](const std::string& k, const nlohmann::json& x) {
        if (k != "ks") return false;
        c.eval.ks = x.get<std::vector<int>>();
        return true;
      });
    } else if (key == "data") {
      each_key(v, "data", [&](const std::string& k, const nlohmann::json& x) {
        if (k == "path") {
          c.data.path = x.get<std::string>();
        } else if (k == "holdout_fraction") {
          c.data.holdout_fraction = x.get<double>();
        } else if (k == "synthetic") {
          auto& s = c.data.synthetic;
          each_key(x, "data.synthetic", [&](const std::string& f, const nlohmann::json& y) {
            if (f == "num_classes") s.num_classes = y.get<int>();
            else if (f == "samples_per_class") s.samples_per_class = y.get<int>();
            else if (f == "input_dim") s.input_dim = y.get<int>();
            else if (f == "class_center_scale") s.class_center_scale = y.get<double>();
            else if (f == "within_class_stddev") s.within_class_stddev = y.get<double>();
            else if (f == "overlap_factor") s.overlap_factor = y.get<double>();
            else if (f == "seed") s.seed = y.get<std::uint64_t>();
            else return false;
            return true;
          });
        } else {
          return false;
        }
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

std::pair<Dataset, Dataset> load_and_split(const DataSection& data) {
  if (!(data.holdout_fraction > 0.0 && data.holdout_fraction < 1.0))
    throw ConfigError("data.holdout_fraction must lie in (0, 1)");
  Dataset all;
  if (data.path.empty()) {
    all = make_synthetic(data.synthetic);
  } else {
    all = load_features(data.path, format_from_path(data.path));
  }
  Rng rng = Rng(data.synthetic.seed).split(4);
  return split_per_class(all, data.holdout_fraction, rng);
}

std::string run_directory_name(const RunConfig& cfg) {
  return "run-" + config_hash(to_json(cfg)).substr(0, 8) + "-s" + std::to_string(cfg.train.seed);
}

std::string ablation_csv_header(std::span<const int> ks) {
  std::string h = "arm,seeds";
  for (int k : ks) h += ",r@" + std::to_string(k) + "_mean,r@" + std::to_string(k) + "_std";
  h += ",rp_mean,rp_std,map_at_r_mean,map_at_r_std";
  return h;
}

std::string ablation_csv_row(const ArmSummary& s, std::span<const int> ks) {
  std::string row = s.arm + "," + std::to_string(s.reports.size());
  auto add = [&](const std::vector<double>& v) {
    const auto [m, sd] = mean_std(v);
    row += "," + fmt(m) + "," + fmt(sd);
  };
  for (int k : ks) {
    std::vector<double> v;
    for (const auto& r : s.reports) v.push_back(r.recall_at.at(k));
    add(v);
  }
  std::vector<double> rp, map;
  for (const auto& r : s.reports) {
    rp.push_back(r.r_precision);
    map.push_back(r.map_at_r);
  }
  add(rp);
  add(map);
  return row;
}

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  std::string log_level = "warn";
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_run_config(g.config_path, cfg);
  if (g.seed) cfg.train.seed = *g.seed;
  return cfg;
}

// ---- synth-data -----------------------------------------------------------

struct SynthArgs {
  std::optional<int> classes, per_class, dim;
  std::optional<double> center_scale, stddev, overlap;
  std::string out;
};

int cmd_synth_data(const Globals& g, const SynthArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(g);
  auto spec = cfg.data.synthetic;
  if (a.classes) spec.num_classes = *a.classes;
  if (a.per_class) spec.samples_per_class = *a.per_class;
  if (a.dim) spec.input_dim = *a.dim;
  if (a.center_scale) spec.class_center_scale = *a.center_scale;
  if (a.stddev) spec.within_class_stddev = *a.stddev;
  if (a.overlap) spec.overlap_factor = *a.overlap;
  if (g.seed) spec.seed = *g.seed;
  spec.validate();
  const Dataset d = make_synthetic(spec);
  const fs::path path = a.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_features(d, path, format_from_path(path));
  out << "wrote " << d.size() << " records (" << spec.num_classes << " classes, dim " << spec.input_dim
      << ") to " << path.string() << '\n';
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string ablation, metric_loss, data;
  std::optional<int> epochs;
  bool force = false;
};

void apply_train_flags(RunConfig& cfg, const TrainArgs& a) {
  if (!a.ablation.empty()) cfg.train.ablation = parse_ablation(a.ablation);
  if (!a.metric_loss.empty()) cfg.train.metric_loss = parse_metric_loss(a.metric_loss);
  if (!a.data.empty()) cfg.data.path = a.data;
  if (a.epochs) cfg.train.epochs = *a.epochs;
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(g);
  apply_train_flags(cfg, a);
  auto [train, held_out] = load_and_split(cfg.data);
  cfg.train.backbone.input_dim = train.dim();
  cfg.train.eval_ks = cfg.eval.ks;
  cfg.train.validate();

  const fs::path run = fs::path(g.out_dir) / run_directory_name(cfg);
  if (fs::exists(run / "config.json") && !a.force)
    throw ConfigError("run directory " + run.string() + " already exists; pass --force to overwrite");
  fs::create_directories(run / "checkpoints");
  write_text(run / "config.json", to_json(cfg).dump(2) + "\n");

  std::ofstream log(run / "train_log.jsonl", std::ios::trunc);
  std::ofstream timing(run / "timing.jsonl", std::ios::trunc);
  std::ofstream metrics(run / "metrics.jsonl", std::ios::trunc);
  if (!log || !timing || !metrics) throw IoError("cannot create log files in " + run.string());

  FitOptions opts;
  opts.validation = &held_out;
  opts.log = &log;
  opts.timing = &timing;
  opts.on_checkpoint = [&](const Checkpoint& ckpt) {
    save_checkpoint(ckpt, run / "checkpoints" / epoch_dir(ckpt.epoch));
    if (!ckpt.metric_history.empty()) {
      const auto& last = ckpt.metric_history.back();
      metrics << last.dump() << '\n';
    }
  };
  out << "run directory: " << run.string() << '\n';
  const FitResult result = fit(train, cfg.train, opts);
  for (const auto& rec : result.history)
    out << "epoch " << rec.epoch << "  " << report_line(rec.validation) << '\n';
  ojson final = report_json(result.final_validation);
  final["epochs_run"] = result.epochs_run;
  final["checkpoint"] = (fs::path("checkpoints") / epoch_dir(result.epochs_run)).string();
  write_text(run / "final_metrics.json", final.dump(2) + "\n");
  return 0;
}

// ---- eval / inspect shared ------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, query, gallery;
  std::vector<int> ks;
};

/// Run config next to a checkpoint (run/checkpoints/epoch-XXX) when present.
std::optional<RunConfig> run_config_for(const Globals& g, const fs::path& ckpt_dir) {
  if (!g.config_path.empty()) return resolve(g);
  const fs::path candidate = ckpt_dir.parent_path().parent_path() / "config.json";
  if (fs::exists(candidate)) return load_run_config(candidate);
  return std::nullopt;
}

void warn_on_hash_mismatch(const std::optional<RunConfig>& cfg, const Checkpoint& ckpt) {
  if (!cfg) return;
  TrainConfig t = cfg->train;
  t.backbone.input_dim = ckpt.input_dim;
  t.eval_ks = cfg->eval.ks;
  const std::string h = config_hash(gcahng::to_json(t));
  if (h != ckpt.config_hash)
    log::warn("config hash " + h + " differs from checkpoint hash " + ckpt.config_hash +
              "; evaluating the checkpoint's own parameters");
}

Dataset dataset_for(const std::string& data_flag, const std::optional<RunConfig>& cfg) {
  if (!data_flag.empty()) return load_features(data_flag, format_from_path(data_flag));
  if (!cfg) throw ConfigError("no dataset: pass --data or --config (or evaluate a checkpoint inside a run directory)");
  return load_and_split(cfg->data).second;
}

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto cfg = run_config_for(g, a.checkpoint);
  warn_on_hash_mismatch(cfg, ckpt);
  const Model model = model_from_checkpoint(ckpt);
  std::vector<int> ks = a.ks;
  if (ks.empty()) ks = cfg ? cfg->eval.ks : std::vector<int>{1, 2, 4, 8};

  MetricReport report;
  if (!a.query.empty() || !a.gallery.empty()) {
    if (a.query.empty() || a.gallery.empty()) throw ConfigError("query/gallery mode needs both --query and --gallery");
    const Dataset q = load_features(a.query, format_from_path(a.query));
    const Dataset gal = load_features(a.gallery, format_from_path(a.gallery));
    report = evaluate_retrieval(RetrievalIndex::query_gallery(model.backbone.embed_matrix(q.features), q.labels,
                                                              model.backbone.embed_matrix(gal.features),
                                                              gal.labels),
                                ks);
  } else {
    report = evaluate_model(model, dataset_for(a.data, cfg), ks);
  }
  const fs::path dir = g.out_dir == "runs" ? fs::path(a.checkpoint) : fs::path(g.out_dir);
  fs::create_directories(dir);
  ojson j = report_json(report);
  j["checkpoint_epoch"] = ckpt.epoch;
  j["config_hash"] = ckpt.config_hash;
  write_text(dir / "eval.json", j.dump(2) + "\n");
  write_text(dir / "eval.csv", report_csv(report));
  out << report_line(report) << '\n';
  return 0;
}

struct InspectArgs {
  std::string checkpoint, data;
  int bins = 20;
};

int cmd_inspect(const Globals& g, const InspectArgs& a, std::ostream& out) {
  if (a.checkpoint.empty()) throw ConfigError("inspect needs --checkpoint");
  if (a.bins < 1) throw ConfigError("--bins must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto cfg = run_config_for(g, a.checkpoint);
  warn_on_hash_mismatch(cfg, ckpt);
  TrainConfig tc = config_from_checkpoint(ckpt);
  if (g.seed) tc.seed = *g.seed;
  const Dataset data = dataset_for(a.data, cfg);
  const fs::path dir = g.out_dir == "runs" ? fs::path(a.checkpoint) / "inspect" : fs::path(g.out_dir);
  fs::create_directories(dir);

  // Embedding diagnostics over the whole set.
  const Model model = model_from_checkpoint(ckpt);
  const Matrix emb = model.backbone.embed_matrix(data.features);
  {
    const EmbeddingStats s = embedding_stats(emb);
    std::ostringstream os;
    os << "dim,mean,variance\n";
    for (Index d = 0; d < s.mean.size(); ++d) os << d << ',' << fmt(s.mean(d)) << ',' << fmt(s.variance(d)) << '\n';
    write_text(dir / "feature_variance.csv", os.str());
    const Projection2D p = project_2d(emb);
    std::ostringstream ps;
    ps << "index,label,pc1,pc2\n";
    for (Index r = 0; r < p.coords.rows(); ++r)
      ps << r << ',' << data.labels[static_cast<std::size_t>(r)] << ',' << fmt(p.coords(r, 0)) << ','
         << fmt(p.coords(r, 1)) << '\n';
    write_text(dir / "projection.csv", ps.str());
  }

  if (tc.ablation == Ablation::baseline) {
    out << "baseline arm has no graph network; wrote embedding diagnostics to " << dir.string() << '\n';
    return 0;
  }

  Trainer trainer(tc, ckpt.input_dim, ckpt.num_classes);
  load_parameters(trainer.model(), ckpt);
  Rng batch_rng = Rng(tc.seed).split(2);
  const LabeledBatch batch = sample_balanced(data, tc.classes_per_batch, tc.instances_per_class, batch_rng);
  StepContext ctx = trainer.prepare(batch);
  StepDiagnostics diag;
  if (trainer.model().head_z) {
    trainer.generation_objective(ctx, &diag);
  } else {
    trainer.metric_objective(ctx, nullptr, &diag);
  }
  const auto& labels = batch.labels;
  const Index b = batch.size();
  const ad::Mask mask = positive_mask(labels);

  std::ostringstream att;
  att << "step,head,row,col,weight,masked\n";
  for (std::size_t s = 0; s < diag.attention.node_attention.size(); ++s)
    for (std::size_t h = 0; h < diag.attention.node_attention[s].size(); ++h) {
      const Matrix& w = diag.attention.node_attention[s][h];
      for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c)
          att << s << ',' << h << ',' << r << ',' << c << ',' << fmt(w(r, c)) << ',' << int(mask(r, c)) << '\n';
    }
  write_text(dir / "attention.csv", att.str());

  std::ostringstream eatt;
  eatt << "step,head,i,j,weight_i,weight_j\n";
  for (std::size_t s = 0; s < diag.attention.edge_attention.size(); ++s) {
    const Matrix& w = diag.attention.edge_attention[s];
    for (Index h = 0; h < w.cols() / 2; ++h)
      for (Index r = 0; r < w.rows(); ++r)
        eatt << s << ',' << h << ',' << r / b << ',' << r % b << ',' << fmt(w(r, 2 * h)) << ','
             << fmt(w(r, 2 * h + 1)) << '\n';
  }
  write_text(dir / "edge_attention.csv", eatt.str());

  if (diag.lambda.size() > 0) {
    std::vector<long> counts(static_cast<std::size_t>(a.bins), 0);
    for (Index i = 0; i < b; ++i)
      for (Index j = 0; j < b; ++j) {
        if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) continue;
        for (Index d = 0; d < diag.lambda.cols(); ++d) {
          const double v = diag.lambda(i * b + j, d);
          const int bin = std::clamp(static_cast<int>(v * a.bins), 0, a.bins - 1);
          counts[static_cast<std::size_t>(bin)] += 1;
        }
      }
    std::ostringstream hs;
    hs << "bin_lo,bin_hi,count\n";
    for (int k = 0; k < a.bins; ++k)
      hs << fmt(double(k) / a.bins) << ',' << fmt(double(k + 1) / a.bins) << ',' << counts[static_cast<std::size_t>(k)]
         << '\n';
    write_text(dir / "lambda_hist.csv", hs.str());
  }

  const SyntheticNegatives& syn = diag.synthetic;
  if (syn.interpolants.rows() > 0) {
    std::ostringstream io;
    io << "anchor,negative,anchor_label,negative_label,d_plus,d_minus,eta,interpolated,dist_to_anchor,interval_position\n";
    const Matrix& zi = ctx.embeddings.z.value();
    for (std::size_t p = 0; p < syn.pairs.size(); ++p) {
      const auto [i, j] = syn.pairs[p];
      const double dp = syn.distances.d_plus(i);
      const double dm = syn.distances.d_minus(i, j);
      const double dist = (syn.interpolants.value().row(static_cast<Index>(p)) - zi.row(i)).norm();
      io << i << ',' << j << ',' << labels[static_cast<std::size_t>(i)] << ',' << labels[static_cast<std::size_t>(j)]
         << ',' << fmt(dp) << ',' << fmt(dm) << ',' << fmt(syn.eta) << ',' << int(syn.interpolated[p]) << ','
         << fmt(dist) << ',';
      if (syn.interpolated[p]) io << fmt((dist - dp) / (dm - dp));
      io << '\n';
    }
    write_text(dir / "interval_occupancy.csv", io.str());
  }
  out << "wrote diagnostics for a batch of " << b << " to " << dir.string() << '\n';
  return 0;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds;
  int num_seeds = 3;
  bool parallel = false;
  std::optional<int> epochs;
  std::string data;
};

int cmd_ablate(const Globals& g, const AblateArgs& a, std::ostream& out) {
  RunConfig base = resolve(g);
  if (a.epochs) base.train.epochs = *a.epochs;
  if (!a.data.empty()) base.data.path = a.data;
  std::vector<Ablation> arms;
  for (const auto& name : a.arms) arms.push_back(parse_ablation(name));
  if (arms.empty()) throw ConfigError("ablate needs at least one arm");
  std::vector<std::uint64_t> seeds = a.seeds;
  if (seeds.empty())
    for (int k = 0; k < a.num_seeds; ++k) seeds.push_back(base.train.seed + static_cast<std::uint64_t>(k));
  if (seeds.empty()) throw ConfigError("ablate needs at least one seed");

  auto [train, held_out] = load_and_split(base.data);
  base.train.backbone.input_dim = train.dim();
  base.train.eval_ks = base.eval.ks;

  const fs::path root = fs::path(g.out_dir) / ("ablate-" + config_hash(to_json(base)).substr(0, 8));
  fs::create_directories(root);
  write_text(root / "config.json", to_json(base).dump(2) + "\n");

  auto job = [&](Ablation arm, std::uint64_t seed) {
    RunConfig cfg = base;
    cfg.train.ablation = arm;
    cfg.train.seed = seed;
    const fs::path dir = root / (to_string(arm) + "-s" + std::to_string(seed));
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
    FitOptions opts;
    opts.validation = &held_out;
    opts.log = &log;
    const FitResult r = fit(train, cfg.train, opts);
    write_text(dir / "final_metrics.json", report_json(r.final_validation).dump(2) + "\n");
    return r.final_validation;
  };

  std::vector<ArmSummary> summaries;
  if (a.parallel) {
    std::vector<std::vector<std::future<MetricReport>>> futures;
    for (Ablation arm : arms) {
      futures.emplace_back();
      for (auto seed : seeds) futures.back().push_back(std::async(std::launch::async, job, arm, seed));
    }
    for (std::size_t k = 0; k < arms.size(); ++k) {
      ArmSummary s{to_string(arms[k]), {}};
      for (auto& f : futures[k]) s.reports.push_back(f.get());
      summaries.push_back(std::move(s));
    }
  } else {
    for (Ablation arm : arms) {
      ArmSummary s{to_string(arm), {}};
      for (auto seed : seeds) s.reports.push_back(job(arm, seed));
      summaries.push_back(std::move(s));
    }
  }
  std::string table = ablation_csv_header(base.eval.ks) + "\n";
  for (const auto& s : summaries) table += ablation_csv_row(s, base.eval.ks) + "\n";
  write_text(root / "ablation.csv", table);
  out << table;
  return 0;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-correlated hard negative generation for deep metric learning"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Training seed (overrides train.seed)");
  app.add_option("--config", g.config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "Output root")->capture_default_str();
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or off")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic labeled feature file");
  synth->fallthrough();
  synth->add_option("--classes", sa.classes);
  synth->add_option("--per-class", sa.per_class);
  synth->add_option("--dim", sa.dim);
  synth->add_option("--center-scale", sa.center_scale);
  synth->add_option("--stddev", sa.stddev);
  synth->add_option("--overlap", sa.overlap);
  synth->add_option("--out", sa.out, "Output path (.csv for CSV, anything else binary)")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train one arm and checkpoint every epoch");
  train->fallthrough();
  train->add_option("--ablation", ta.ablation);
  train->add_option("--metric-loss", ta.metric_loss, "np_modified or proxy_anchor");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--data", ta.data, "Feature file instead of the synthetic generator");
  train->add_flag("--force", ta.force, "Overwrite an existing run directory");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Retrieval metrics of a checkpoint");
  eval->fallthrough();
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--data", ea.data, "Single-set evaluation file");
  eval->add_option("--query", ea.query);
  eval->add_option("--gallery", ea.gallery);
  eval->add_option("--ks", ea.ks)->delimiter(',');

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Dump attention, lambda and embedding diagnostics");
  inspect->fallthrough();
  inspect->add_option("--checkpoint", ia.checkpoint)->required();
  inspect->add_option("--data", ia.data);
  inspect->add_option("--bins", ia.bins)->capture_default_str();

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Train several arms over shared seeds");
  ablate->fallthrough();
  ablate->add_option("--arms", aa.arms)->delimiter(',')->required();
  ablate->add_option("--seeds", aa.seeds)->delimiter(',');
  ablate->add_option("--num-seeds", aa.num_seeds)->capture_default_str();
  ablate->add_option("--epochs", aa.epochs);
  ablate->add_option("--data", aa.data);
  ablate->add_flag("--parallel", aa.parallel, "Run arms concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    log::set_level(log::parse_level(g.log_level));
    if (*synth) return cmd_synth_data(g, sa, out);
    if (*train) return cmd_train(g, ta, out);
    if (*eval) return cmd_eval(g, ea, out);
    if (*inspect) return cmd_inspect(g, ia, out);
    if (*ablate) return cmd_ablate(g, aa, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const SamplingError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv = {"gcahng"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gcahng::cli
