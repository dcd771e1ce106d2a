// gbnet command-line tool: train / predict / evaluate / ablate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gbnet/data_io.hpp"
#include "gbnet/engine.hpp"
#include "gbnet/error.hpp"
#include "gbnet/metrics.hpp"
#include "gbnet/model_store.hpp"

namespace {

using namespace gbnet;

struct DataOptions {
  std::string format = "auto";  // auto | svmlight | csv | tsv
  std::size_t target_column = 0;
  bool has_header = false;
  std::size_t feature_dim = 0;  // svmlight only; 0 = infer
  double positive_label = 1.0;  // classification raw label mapped to +1
  bool standardize = false;
};

struct TrainOptions {
  std::string task;
  double sigma0 = 1.0;
  std::string train_path;
  std::string val_path;
  double val_fraction = 0.1;
  std::string model_out = "model.json";
  std::string log_out = "training_log.csv";
  std::string metric = "auto";
  bool timing = false;

  // TrainConfig mirror (kebab-case flags of the same names).
  std::size_t num_stages = 40;
  std::size_t stage_epochs = 1;
  std::size_t cs_epochs = 0;  // 0 = task default (1; 2 for ranking)
  std::size_t cs_every = 1;
  double stage_lr = 0.005;
  double cs_lr = 0.005;
  std::size_t lr_halving_period = 15;
  std::size_t batch_size = 2048;
  double alpha_init = 1.0;
  bool alpha_trainable = true;
  bool use_second_order = true;
  double row_subsample_fraction = 1.0;
  double h_min = kHessianFloor;
  double l2 = 0.001;
  bool stacked = true;
  std::uint64_t seed = 0;
  std::size_t max_pairs_per_query = 10000;

  std::string hidden_dims = "16,16";
  std::string activation = "leaky_relu";
  double leaky_slope = 0.01;
  bool batch_norm = true;
};

TaskKind parse_task(const std::string& name, double sigma0) {
  if (name == "regression") return TaskKind::regression();
  if (name == "classification") return TaskKind::classification();
  if (name == "ranking") return TaskKind::ranking(sigma0);
  throw ConfigError("unknown task '" + name + "' (regression|classification|ranking)");
}

std::vector<std::size_t> parse_dims(const std::string& spec) {
  std::vector<std::size_t> dims;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      dims.push_back(static_cast<std::size_t>(std::stoul(tok)));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse hidden dims '" + spec + "'");
    }
  }
  if (dims.empty()) throw ConfigError("hidden dims must not be empty");
  return dims;
}

MetricKind parse_metric(const std::string& name) {
  if (name == "rmse") return MetricKind::Rmse;
  if (name == "auc") return MetricKind::Auc;
  if (name == "ndcg@5" || name == "ndcg5" || name == "ndcg") return MetricKind::Ndcg5;
  if (name == "ndcg@10" || name == "ndcg10") return MetricKind::Ndcg10;
  throw ConfigError("unknown metric '" + name + "' (rmse|auc|ndcg@5|ndcg@10)");
}

void check_metric_compatible(MetricKind metric, const TaskKind& task) {
  switch (task.kind) {
    case TaskKind::Kind::Regression:
      if (metric != MetricKind::Rmse) {
        throw ConfigError("metric '" + metric_name(metric) + "' is not valid for regression");
      }
      return;
    case TaskKind::Kind::BinaryClassification:
      if (metric != MetricKind::Auc) {
        throw ConfigError("metric '" + metric_name(metric) + "' is not valid for classification");
      }
      return;
    case TaskKind::Kind::PairwiseRanking:
      if (metric != MetricKind::Ndcg5 && metric != MetricKind::Ndcg10) {
        throw ConfigError("metric '" + metric_name(metric) + "' is not valid for ranking");
      }
      return;
  }
}

bool looks_like_svmlight(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  return ext == "svm" || ext == "svmlight" || ext == "libsvm" || ext == "dat" || ext == "txt";
}

DataSet load_dataset(const std::string& path, const DataOptions& opts, const TaskKind& task) {
  const bool ranking = task.is_ranking();
  std::string format = opts.format;
  if (format == "auto") {
    format = ranking || looks_like_svmlight(path) ? "svmlight" : "csv";
  }
  DataSet ds;
  if (format == "svmlight") {
    ds = load_svmlight(path, ranking, opts.feature_dim);
  } else if (format == "csv") {
    ds = load_delimited(path, opts.target_column, ',', opts.has_header);
  } else if (format == "tsv") {
    ds = load_delimited(path, opts.target_column, '\t', opts.has_header);
  } else {
    throw ConfigError("unknown data format '" + format + "' (auto|svmlight|csv|tsv)");
  }
  if (task.kind == TaskKind::Kind::BinaryClassification) {
    ds = normalize_labels(ds, opts.positive_label);
  }
  return ds;
}

/// Two-way split used when no validation file is given; keeps whole
/// queries together for ranking.
std::pair<DataSet, DataSet> carve_validation(const DataSet& ds, double val_fraction,
                                             RngState& rng, bool by_query) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw ConfigError("val fraction must be in (0,1)");
  }
  if (by_query) {
    const std::size_t nq = ds.groups->num_queries();
    std::vector<std::size_t> order(nq);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(nq))));
    if (n_val >= nq) throw DataError("validation split would consume every query");
    auto build = [&](std::size_t lo, std::size_t hi) {
      std::vector<std::size_t> qs(order.begin() + lo, order.begin() + hi);
      std::sort(qs.begin(), qs.end());
      std::vector<std::size_t> rows;
      std::vector<std::size_t> sizes;
      for (std::size_t q : qs) {
        for (std::size_t r = ds.groups->begin(q); r < ds.groups->end(q); ++r) rows.push_back(r);
        sizes.push_back(ds.groups->size(q));
      }
      DataSet out = ds.take_rows(rows);
      out.groups = QueryGroups::from_sizes(sizes);
      return out;
    };
    return {build(n_val, nq), build(0, n_val)};
  }

  const std::size_t n = ds.num_rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  if (n_val >= n) throw DataError("validation split would consume every row");
  std::vector<std::size_t> val_rows(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_rows(order.begin() + n_val, order.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {ds.take_rows(train_rows), ds.take_rows(val_rows)};
}

/// Flat key=value configuration file: one `flag-name=value` pair per
/// line, '#' comments. Applied before argument parsing, so explicit
/// command-line flags win.
void apply_config_file(const std::string& path, TrainOptions& t, DataOptions& d) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");

  auto to_bool = [](const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
  };
  auto to_u64 = [](const std::string& key, const std::string& v) -> std::uint64_t {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
  };
  auto to_f64 = [](const std::string& key, const std::string& v) {
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::size_t last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line is not key=value: '" + line + "'", line_no);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);

    if (key == "task") t.task = value;
    else if (key == "sigma0") t.sigma0 = to_f64(key, value);
    else if (key == "train") t.train_path = value;
    else if (key == "val") t.val_path = value;
    else if (key == "val-fraction") t.val_fraction = to_f64(key, value);
    else if (key == "model-out") t.model_out = value;
    else if (key == "log-out") t.log_out = value;
    else if (key == "metric") t.metric = value;
    else if (key == "timing") t.timing = to_bool(key, value);
    else if (key == "num-stages") t.num_stages = to_u64(key, value);
    else if (key == "stage-epochs") t.stage_epochs = to_u64(key, value);
    else if (key == "cs-epochs") t.cs_epochs = to_u64(key, value);
    else if (key == "cs-every") t.cs_every = to_u64(key, value);
    else if (key == "stage-lr") t.stage_lr = to_f64(key, value);
    else if (key == "cs-lr") t.cs_lr = to_f64(key, value);
    else if (key == "lr-halving-period") t.lr_halving_period = to_u64(key, value);
    else if (key == "batch-size") t.batch_size = to_u64(key, value);
    else if (key == "alpha-init") t.alpha_init = to_f64(key, value);
    else if (key == "alpha-trainable") t.alpha_trainable = to_bool(key, value);
    else if (key == "use-second-order") t.use_second_order = to_bool(key, value);
    else if (key == "row-subsample-fraction") t.row_subsample_fraction = to_f64(key, value);
    else if (key == "h-min") t.h_min = to_f64(key, value);
    else if (key == "l2") t.l2 = to_f64(key, value);
    else if (key == "stacked") t.stacked = to_bool(key, value);
    else if (key == "seed") t.seed = to_u64(key, value);
    else if (key == "max-pairs-per-query") t.max_pairs_per_query = to_u64(key, value);
    else if (key == "hidden-dims") t.hidden_dims = value;
    else if (key == "activation") t.activation = value;
    else if (key == "leaky-slope") t.leaky_slope = to_f64(key, value);
    else if (key == "batch-norm") t.batch_norm = to_bool(key, value);
    else if (key == "data-format") d.format = value;
    else if (key == "target-column") d.target_column = to_u64(key, value);
    else if (key == "has-header") d.has_header = to_bool(key, value);
    else if (key == "feature-dim") d.feature_dim = to_u64(key, value);
    else if (key == "positive-label") d.positive_label = to_f64(key, value);
    else if (key == "standardize") d.standardize = to_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

TrainConfig to_train_config(const TrainOptions& opts) {
  if (opts.task.empty()) {
    throw ConfigError("missing task (--task flag or task= config key)");
  }
  if (opts.train_path.empty()) {
    throw ConfigError("missing training data (--train flag or train= config key)");
  }
  TrainConfig cfg;
  cfg.task = parse_task(opts.task, opts.sigma0);
  cfg.num_stages = opts.num_stages;
  cfg.stage_epochs = opts.stage_epochs;
  cfg.cs_epochs = opts.cs_epochs != 0 ? opts.cs_epochs : (cfg.task.is_ranking() ? 2 : 1);
  cfg.cs_every = opts.cs_every;
  cfg.stage_lr = opts.stage_lr;
  cfg.cs_lr = opts.cs_lr;
  cfg.lr_halving_period = opts.lr_halving_period;
  cfg.batch_size = opts.batch_size;
  cfg.alpha_init = opts.alpha_init;
  cfg.alpha_trainable = opts.alpha_trainable;
  cfg.use_second_order = opts.use_second_order;
  cfg.row_subsample_fraction = opts.row_subsample_fraction;
  cfg.h_min = opts.h_min;
  cfg.l2 = opts.l2;
  cfg.stacked = opts.stacked;
  cfg.seed = opts.seed;
  cfg.max_pairs_per_query = opts.max_pairs_per_query;
  cfg.learner.hidden_dims = parse_dims(opts.hidden_dims);
  if (opts.activation == "leaky_relu") {
    cfg.learner.activation = Activation::LeakyReLU;
  } else if (opts.activation == "relu6") {
    cfg.learner.activation = Activation::ReLU6;
  } else {
    throw ConfigError("unknown activation '" + opts.activation + "' (leaky_relu|relu6)");
  }
  cfg.learner.leaky_slope = opts.leaky_slope;
  cfg.learner.use_batch_norm = opts.batch_norm;
  cfg.validate();
  return cfg;
}

std::string config_fingerprint(const TrainOptions& o) {
  std::ostringstream s;
  s << "task=" << o.task << ";num-stages=" << o.num_stages << ";stage-epochs=" << o.stage_epochs
    << ";cs-epochs=" << o.cs_epochs << ";cs-every=" << o.cs_every << ";stage-lr=" << o.stage_lr
    << ";cs-lr=" << o.cs_lr << ";lr-halving-period=" << o.lr_halving_period
    << ";batch-size=" << o.batch_size << ";alpha-init=" << o.alpha_init
    << ";alpha-trainable=" << o.alpha_trainable << ";use-second-order=" << o.use_second_order
    << ";row-subsample-fraction=" << o.row_subsample_fraction << ";h-min=" << o.h_min
    << ";l2=" << o.l2 << ";stacked=" << o.stacked << ";seed=" << o.seed
    << ";max-pairs-per-query=" << o.max_pairs_per_query << ";hidden-dims=" << o.hidden_dims
    << ";activation=" << o.activation << ";leaky-slope=" << o.leaky_slope
    << ";batch-norm=" << o.batch_norm << ";sigma0=" << o.sigma0;
  return s.str();
}

void write_log(const std::string& path, const std::vector<StageLogRecord>& records,
               std::size_t num_stages, bool timing) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "stage,stage_loss,corrective_loss,val_metric";
  for (std::size_t k = 0; k < num_stages; ++k) out << ",alpha_" << k;
  out << ",seconds\n";

  char buf[40];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const StageLogRecord& rec : records) {
    out << rec.stage;
    emit(rec.stage_loss);
    emit(rec.corrective_loss);
    emit(rec.val_metric);
    for (std::size_t k = 0; k < num_stages; ++k) {
      emit(k < rec.alphas.size() ? rec.alphas[k] : std::numeric_limits<double>::quiet_NaN());
    }
    std::snprintf(buf, sizeof(buf), "%.6f", timing ? rec.seconds : 0.0);
    out << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

MetricKind pick_metric(const TrainOptions& opts, const TaskKind& task) {
  MetricKind metric = opts.metric == "auto" ? default_metric(task) : parse_metric(opts.metric);
  check_metric_compatible(metric, task);
  return metric;
}

int run_train(const TrainOptions& topts, const DataOptions& dopts) {
  TrainConfig cfg = to_train_config(topts);
  DataSet train = load_dataset(topts.train_path, dopts, cfg.task);

  DataSet val;
  if (!topts.val_path.empty()) {
    val = load_dataset(topts.val_path, dopts, cfg.task);
  } else {
    RngState split_rng(cfg.seed ^ 0x5eedULL);
    std::tie(train, val) =
        carve_validation(train, topts.val_fraction, split_rng, cfg.task.is_ranking());
  }

  std::optional<FeatureScaler> scaler;
  if (dopts.standardize) {
    scaler = FeatureScaler::fit(train.features);
    train.features = scaler->apply(train.features);
    val.features = scaler->apply(val.features);
  }

  // Per-stage val_metric is always the task's default metric.
  const MetricKind progress_metric = default_metric(cfg.task);
  auto report_stage = [&](const StageLogRecord& rec) {
    std::fprintf(stderr, "stage %zu/%zu  loss %.6g", rec.stage, cfg.num_stages, rec.stage_loss);
    if (std::isfinite(rec.corrective_loss)) {
      std::fprintf(stderr, "  corrective %.6g", rec.corrective_loss);
    }
    if (std::isfinite(rec.val_metric)) {
      std::fprintf(stderr, "  val %s %.6g", metric_name(progress_metric).c_str(), rec.val_metric);
    }
    std::fprintf(stderr, "  (%.2fs)\n", rec.seconds);
  };

  FitResult res = fit(train, val, cfg, report_stage);
  save_model(res.model, topts.model_out, config_fingerprint(topts));
  write_log(topts.log_out, res.records, cfg.num_stages, topts.timing);

  const MetricKind metric = pick_metric(topts, cfg.task);
  const std::size_t best = select_num_learners(res.model, val, metric);
  const std::vector<double> val_scores = predict(res.model, val.features, best);
  const double value =
      evaluate_metric(metric, val_scores, val.targets, val.groups ? &*val.groups : nullptr);
  std::printf("trained %zu stages; wrote %s and %s\n", res.model.num_stages(),
              topts.model_out.c_str(), topts.log_out.c_str());
  std::printf("selected num_learners %zu (val %s %.6f)\n", best, metric_name(metric).c_str(),
              value);
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path,
                const std::string& output_path, std::size_t num_learners,
                const DataOptions& dopts) {
  Ensemble model = load_model(model_path);
  DataSet data = load_dataset(data_path, dopts, model.task);
  if (data.feature_dim() != model.feature_dim) {
    throw ShapeError("model expects " + std::to_string(model.feature_dim) +
                     " features but the data has " + std::to_string(data.feature_dim()));
  }
  const std::size_t k = num_learners == 0 ? kAllLearners : num_learners;
  std::vector<double> scores = predict(model, data.features, k);

  std::ofstream out(output_path);
  if (!out) throw IoError("cannot open '" + output_path + "' for writing");
  const bool proba = model.task.kind == TaskKind::Kind::BinaryClassification;
  out << (proba ? "score,probability\n" : "score\n");
  char buf[40];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", scores[i]);
    out << buf;
    if (proba) {
      const double m = 2.0 * scores[i];
      const double p = m >= 0.0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
      std::snprintf(buf, sizeof(buf), "%.17g", p);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + output_path + "'");
  std::printf("wrote %zu predictions to %s\n", scores.size(), output_path.c_str());
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& metric_name_opt, std::size_t num_learners,
                 const DataOptions& dopts) {
  Ensemble model = load_model(model_path);
  DataSet data = load_dataset(data_path, dopts, model.task);
  const std::size_t k = num_learners == 0 ? kAllLearners : num_learners;
  std::vector<double> scores = predict(model, data.features, k);
  const QueryGroups* groups = data.groups ? &*data.groups : nullptr;

  if (model.task.is_ranking() && metric_name_opt == "auto") {
    // NDCG at both standard cutoffs by default.
    std::printf("ndcg@5 %.6f\n", evaluate_metric(MetricKind::Ndcg5, scores, data.targets, groups));
    std::printf("ndcg@10 %.6f\n",
                evaluate_metric(MetricKind::Ndcg10, scores, data.targets, groups));
    return 0;
  }
  MetricKind metric =
      metric_name_opt == "auto" ? default_metric(model.task) : parse_metric(metric_name_opt);
  check_metric_compatible(metric, model.task);
  std::printf("%s %.6f\n", metric_name(metric).c_str(),
              evaluate_metric(metric, scores, data.targets, groups));
  return 0;
}

struct AblateVariant {
  const char* name;
  void (*apply)(TrainConfig&);
};

constexpr AblateVariant kVariants[] = {
    {"full", [](TrainConfig&) {}},
    {"first_order", [](TrainConfig& c) { c.use_second_order = false; }},
    {"constant_alpha",
     [](TrainConfig& c) {
       c.alpha_trainable = false;
       c.alpha_init = 0.1;
     }},
    {"simple", [](TrainConfig& c) { c.stacked = false; }},
    {"no_cs", [](TrainConfig& c) { c.cs_every = 0; }},
    {"cs_every_5", [](TrainConfig& c) { c.cs_every = 5; }},
};

int run_ablate(const TrainOptions& topts, const DataOptions& dopts,
               const std::vector<std::string>& requested) {
  std::vector<std::string> names = requested;
  if (names.empty()) {
    for (const AblateVariant& v : kVariants) names.push_back(v.name);
  }
  for (const std::string& name : names) {
    const bool known = std::any_of(std::begin(kVariants), std::end(kVariants),
                                   [&](const AblateVariant& v) { return name == v.name; });
    if (!known) {
      std::string valid;
      for (const AblateVariant& v : kVariants) {
        if (!valid.empty()) valid += ", ";
        valid += v.name;
      }
      throw ConfigError("unknown ablation variant '" + name + "' (valid: " + valid + ")");
    }
  }

  TrainConfig base = to_train_config(topts);
  DataSet train = load_dataset(topts.train_path, dopts, base.task);
  DataSet val;
  if (!topts.val_path.empty()) {
    val = load_dataset(topts.val_path, dopts, base.task);
  } else {
    RngState split_rng(base.seed ^ 0x5eedULL);
    std::tie(train, val) =
        carve_validation(train, topts.val_fraction, split_rng, base.task.is_ranking());
  }
  const MetricKind metric = pick_metric(topts, base.task);

  std::printf("%-16s %s\n", "variant", metric_name(metric).c_str());
  for (const std::string& name : names) {
    TrainConfig cfg = base;  // shared seed and data across variants
    for (const AblateVariant& v : kVariants) {
      if (name == v.name) v.apply(cfg);
    }
    FitResult res = fit(train, val, cfg);
    const std::size_t best = select_num_learners(res.model, val, metric);
    const std::vector<double> scores = predict(res.model, val.features, best);
    const double value =
        evaluate_metric(metric, scores, val.targets, val.groups ? &*val.groups : nullptr);
    std::printf("%-16s %.6f\n", name.c_str(), value);
  }
  return 0;
}

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data-format", d.format, "auto|svmlight|csv|tsv")->capture_default_str();
  cmd->add_option("--target-column", d.target_column, "Target column for delimited data")
      ->capture_default_str();
  cmd->add_flag("--has-header,!--no-header", d.has_header, "Delimited data has a header row");
  cmd->add_option("--feature-dim", d.feature_dim, "Feature count for svmlight (0 = infer)")
      ->capture_default_str();
  cmd->add_option("--positive-label", d.positive_label,
                  "Raw label mapped to +1 for classification")
      ->capture_default_str();
  cmd->add_flag("--standardize", d.standardize, "Standardize features with train-fitted stats");
}

void add_train_options(CLI::App* cmd, TrainOptions& t) {
  cmd->add_option("--task", t.task, "regression|classification|ranking (required)");
  cmd->add_option("--sigma0", t.sigma0, "Pairwise loss scale (ranking)")->capture_default_str();
  cmd->add_option("--train", t.train_path, "Training data path (required)");
  cmd->add_option("--val", t.val_path, "Validation data path (else carved from train)");
  cmd->add_option("--val-fraction", t.val_fraction, "Carved validation fraction")
      ->capture_default_str();
  cmd->add_option("--model-out", t.model_out, "Model archive output path")->capture_default_str();
  cmd->add_option("--log-out", t.log_out, "Per-stage training log (CSV)")->capture_default_str();
  cmd->add_option("--metric", t.metric, "Selection metric (auto|rmse|auc|ndcg@5|ndcg@10)")
      ->capture_default_str();
  cmd->add_flag("--timing", t.timing, "Record wall-clock seconds in the log");

  cmd->add_option("--num-stages", t.num_stages, "Boosting stages K")->capture_default_str();
  cmd->add_option("--stage-epochs", t.stage_epochs, "Epochs per new weak learner")
      ->capture_default_str();
  cmd->add_option("--cs-epochs", t.cs_epochs, "Corrective-step epochs (0 = task default)")
      ->capture_default_str();
  cmd->add_option("--cs-every", t.cs_every, "Corrective step cadence in stages (0 disables)")
      ->capture_default_str();
  cmd->add_option("--stage-lr", t.stage_lr, "Stage learning rate")->capture_default_str();
  cmd->add_option("--cs-lr", t.cs_lr, "Corrective-step learning rate")->capture_default_str();
  cmd->add_option("--lr-halving-period", t.lr_halving_period,
                  "Halve learning rates every N stages (0 disables)")
      ->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--alpha-init", t.alpha_init, "Initial boost rate")->capture_default_str();
  cmd->add_flag("--alpha-trainable,!--constant-alpha", t.alpha_trainable,
                "Train boost rates in the corrective step");
  cmd->add_flag("--use-second-order,!--first-order", t.use_second_order,
                "Newton targets -g/h (off: plain negative gradients)");
  cmd->add_option("--row-subsample-fraction", t.row_subsample_fraction, "Row fraction per stage")
      ->capture_default_str();
  cmd->add_option("--h-min", t.h_min, "Hessian clamp when forming -g/h")->capture_default_str();
  cmd->add_option("--l2", t.l2, "L2 regularization coupled into Adam")->capture_default_str();
  cmd->add_flag("--stacked,!--simple", t.stacked,
                "Stack penultimate features into later learners");
  cmd->add_option("--seed", t.seed, "Random seed")->envname("GBNET_SEED")->capture_default_str();
  cmd->add_option("--max-pairs-per-query", t.max_pairs_per_query,
                  "Subsample cap on ranking pairs per query")
      ->capture_default_str();
  cmd->add_option("--hidden-dims", t.hidden_dims, "Comma-separated hidden layer sizes")
      ->capture_default_str();
  cmd->add_option("--activation", t.activation, "leaky_relu|relu6")->capture_default_str();
  cmd->add_option("--leaky-slope", t.leaky_slope, "LeakyReLU negative slope")
      ->capture_default_str();
  cmd->add_flag("--batch-norm,!--no-batch-norm", t.batch_norm,
                "Batch normalization on hidden layers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gbnet: gradient boosting with shallow MLP weak learners"};
  app.require_subcommand(1);

  TrainOptions train_opts;
  DataOptions train_data;
  std::string train_config_path;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_config_path,
                        "Flat key=value config file; explicit flags win");
  add_train_options(train_cmd, train_opts);
  add_data_options(train_cmd, train_data);

  std::string p_model, p_data, p_out = "predictions.csv";
  std::size_t p_num_learners = 0;
  DataOptions predict_data;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Score a dataset with a saved model");
  predict_cmd->add_option("--model", p_model, "Model archive")->required();
  predict_cmd->add_option("--data", p_data, "Input data path")->required();
  predict_cmd->add_option("--output", p_out, "Predictions output path")->capture_default_str();
  predict_cmd->add_option("--num-learners", p_num_learners, "Prefix length (0 = all)")
      ->capture_default_str();
  add_data_options(predict_cmd, predict_data);

  std::string e_model, e_data, e_metric = "auto";
  std::size_t e_num_learners = 0;
  DataOptions eval_data;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a saved model");
  eval_cmd->add_option("--model", e_model, "Model archive")->required();
  eval_cmd->add_option("--data", e_data, "Evaluation data path")->required();
  eval_cmd->add_option("--metric", e_metric, "auto|rmse|auc|ndcg@5|ndcg@10")
      ->capture_default_str();
  eval_cmd->add_option("--num-learners", e_num_learners, "Prefix length (0 = all)")
      ->capture_default_str();
  add_data_options(eval_cmd, eval_data);

  TrainOptions ablate_opts;
  DataOptions ablate_data;
  std::string ablate_config_path;
  std::vector<std::string> variants;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "Train component-ablated variants and compare");
  ablate_cmd->add_option("--config", ablate_config_path,
                         "Flat key=value config file; explicit flags win");
  add_train_options(ablate_cmd, ablate_opts);
  add_data_options(ablate_cmd, ablate_data);
  ablate_cmd->add_option("--variants", variants,
                         "Variants to run (full first_order constant_alpha simple no_cs "
                         "cs_every_5); default all");

  // Config values act as defaults: load them before parsing so any
  // explicit flag overrides the file.
  try {
    std::string config_path;
    for (int i = 2; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        config_path = argv[i + 1];
      } else if (arg.rfind("--config=", 0) == 0) {
        config_path = arg.substr(9);
      }
    }
    if (!config_path.empty() && argc > 1) {
      const std::string sub = argv[1];
      if (sub == "train") apply_config_file(config_path, train_opts, train_data);
      if (sub == "ablate") apply_config_file(config_path, ablate_opts, ablate_data);
    }
  } catch (const gbnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(train_opts, train_data);
    if (predict_cmd->parsed()) {
      return run_predict(p_model, p_data, p_out, p_num_learners, predict_data);
    }
    if (eval_cmd->parsed()) {
      return run_evaluate(e_model, e_data, e_metric, e_num_learners, eval_data);
    }
    if (ablate_cmd->parsed()) return run_ablate(ablate_opts, ablate_data, variants);
  } catch (const gbnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
