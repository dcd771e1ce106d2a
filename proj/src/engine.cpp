#include "gbnet/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gbnet/error.hpp"

namespace gbnet {

void TrainConfig::validate() const {
  if (num_stages < 1) throw ConfigError("TrainConfig: num_stages must be >= 1");
  if (stage_epochs < 1 || cs_epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (stage_lr <= 0.0 || cs_lr <= 0.0) throw ConfigError("TrainConfig: learning rates must be > 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (row_subsample_fraction <= 0.0 || row_subsample_fraction > 1.0) {
    throw ConfigError("TrainConfig: row_subsample_fraction must be in (0, 1]");
  }
  if (h_min <= 0.0) throw ConfigError("TrainConfig: h_min must be > 0");
  if (l2 < 0.0) throw ConfigError("TrainConfig: l2 must be >= 0");
  if (alpha_init <= 0.0) throw ConfigError("TrainConfig: alpha_init must be > 0");
  if (task.sigma0 <= 0.0) throw ConfigError("TrainConfig: sigma0 must be > 0");
  if (max_pairs_per_query == 0) throw ConfigError("TrainConfig: max_pairs_per_query must be >= 1");
  LearnerArch probe;
  probe.input_dim = 1;
  probe.hidden_dims = learner.hidden_dims;
  probe.activation = learner.activation;
  probe.leaky_slope = learner.leaky_slope;
  probe.use_batch_norm = learner.use_batch_norm;
  probe.validate();
}

double scheduled_lr(double base, std::size_t stage_number, std::size_t period) {
  if (period == 0 || stage_number == 0) return base;
  const std::size_t halvings = (stage_number - 1) / period;
  return base * std::pow(0.5, static_cast<double>(halvings));
}

namespace {

LearnerArch stage_arch(const TrainConfig& config, std::size_t input_dim) {
  LearnerArch arch;
  arch.input_dim = input_dim;
  arch.hidden_dims = config.learner.hidden_dims;
  arch.activation = config.learner.activation;
  arch.leaky_slope = config.learner.leaky_slope;
  arch.use_batch_norm = config.learner.use_batch_norm;
  return arch;
}

void check_feature_dim(const Ensemble& model, const Matrix& x) {
  if (x.cols() != model.feature_dim) {
    throw ShapeError("ensemble expects " + std::to_string(model.feature_dim) +
                     " features, got " + std::to_string(x.cols()));
  }
}

}  // namespace

Matrix augment_features(const Ensemble& model, const Matrix& x) {
  check_feature_dim(model, x);
  if (!model.stacked || model.learners.empty()) return x;
  Matrix input = x;
  Matrix penultimate;
  for (const WeakLearner& learner : model.learners) {
    ForwardResult res = forward_eval(learner, input);
    penultimate = std::move(res.penultimate);
    input = Matrix::hcat(x, penultimate);
  }
  return input;
}

Matrix augment_features_train(Ensemble& model, const Matrix& x) {
  check_feature_dim(model, x);
  if (!model.stacked || model.learners.empty()) return x;
  Matrix input = x;
  for (WeakLearner& learner : model.learners) {
    ForwardResult res = forward(learner, input, Mode::Train);
    input = Matrix::hcat(x, res.penultimate);
  }
  return input;
}

std::vector<double> predict(const Ensemble& model, const Matrix& x, std::size_t num_learners) {
  check_feature_dim(model, x);
  if (num_learners == kAllLearners) num_learners = model.learners.size();
  if (num_learners > model.learners.size()) {
    throw ConfigError("predict: num_learners exceeds the ensemble size");
  }
  std::vector<double> scores(x.rows(), model.prior);
  Matrix input = x;
  for (std::size_t k = 0; k < num_learners; ++k) {
    ForwardResult res = forward_eval(model.learners[k], input);
    const double alpha = model.alphas[k];
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += alpha * res.scores[i];
    if (model.stacked && k + 1 < num_learners) input = Matrix::hcat(x, res.penultimate);
  }
  return scores;
}

std::vector<double> predict_proba(const Ensemble& model, const Matrix& x) {
  if (model.task.kind != TaskKind::Kind::BinaryClassification) {
    throw DataError("predict_proba: model task is not binary classification");
  }
  std::vector<double> p = predict(model, x);
  for (double& s : p) {
    const double m = 2.0 * s;
    s = m >= 0.0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
  }
  return p;
}

GradHessBatch compute_stage_stats(const Ensemble& model, const DataSet& data,
                                  const TrainConfig& config, const PairSet* pairs) {
  const std::vector<double> y_hat = predict(model, data.features);
  GradHessBatch stats;
  switch (model.task.kind) {
    case TaskKind::Kind::Regression:
      stats = regression_stats(data.targets, y_hat);
      break;
    case TaskKind::Kind::BinaryClassification:
      stats = classification_stats(data.targets, y_hat, config.h_min);
      break;
    case TaskKind::Kind::PairwiseRanking:
      if (pairs == nullptr) throw DataError("compute_stage_stats: ranking needs a pair set");
      stats = ranking_stats(y_hat, *pairs, model.task.sigma0, config.h_min);
      break;
  }
  if (!config.use_second_order) {
    for (std::size_t i = 0; i < stats.g.size(); ++i) {
      stats.h[i] = 1.0;
      stats.newton_target[i] = -stats.g[i];
    }
  }
  return stats;
}

StageFitOutcome fit_stage(Ensemble& model, const DataSet& data, const TrainConfig& config,
                          const PairSet* pairs, RngState& rng) {
  data.validate();
  const std::size_t stage_number = model.num_stages() + 1;
  const double lr = scheduled_lr(config.stage_lr, stage_number, config.lr_halving_period);

  GradHessBatch stats = compute_stage_stats(model, data, config, pairs);
  bool any_weight = false;
  for (double h : stats.h) {
    if (h > 0.0) {
      any_weight = true;
      break;
    }
  }
  if (!any_weight) return {};  // nothing to fit against

  Matrix inputs = augment_features_train(model, data.features);

  const std::size_t n = data.num_rows();
  std::vector<std::size_t> idx;
  if (config.row_subsample_fraction < 1.0) {
    const std::size_t k = static_cast<std::size_t>(
        std::llround(config.row_subsample_fraction * static_cast<double>(n)));
    idx = rng.sample_without_replacement(n, std::max<std::size_t>(k, 1));
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }

  Matrix sub_inputs = config.row_subsample_fraction < 1.0 ? inputs.take_rows(idx) : std::move(inputs);
  std::vector<double> targets(idx.size()), weights(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    targets[i] = stats.newton_target[idx[i]];
    weights[i] = stats.h[idx[i]];
  }

  LearnerArch arch = stage_arch(config, sub_inputs.cols());
  WeakLearner learner = init_learner(arch, rng);
  LsqFitResult fit_res =
      fit_weighted_lsq(learner, sub_inputs, targets, weights, config.stage_epochs,
                       AdamState::with(lr, config.l2), config.batch_size, rng);
  if (fit_res.status == FitStatus::AllZeroWeights) return {false, 0.0, idx.size()};

  model.learners.push_back(std::move(learner));
  model.alphas.push_back(config.alpha_init);
  return {true, fit_res.final_loss, idx.size()};
}

namespace {

struct CorrectiveBatch {
  std::vector<std::size_t> rows;      // global row ids, batch order
  std::vector<std::size_t> queries;   // ranking only
};

std::vector<CorrectiveBatch> make_row_batches(std::size_t n, std::size_t batch_size,
                                              bool avoid_single_row, RngState& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<CorrectiveBatch> batches;
  std::size_t start = 0;
  while (start < n) {
    std::size_t len = std::min(batch_size, n - start);
    if (avoid_single_row && n - (start + len) == 1) len += 1;  // no 1-row tail
    CorrectiveBatch b;
    b.rows.assign(order.begin() + start, order.begin() + start + len);
    batches.push_back(std::move(b));
    start += len;
  }
  return batches;
}

std::vector<CorrectiveBatch> make_query_batches(const QueryGroups& groups, std::size_t batch_size,
                                                RngState& rng) {
  std::vector<std::size_t> order(groups.num_queries());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<CorrectiveBatch> batches;
  CorrectiveBatch current;
  for (std::size_t q : order) {
    for (std::size_t r = groups.begin(q); r < groups.end(q); ++r) current.rows.push_back(r);
    current.queries.push_back(q);
    if (current.rows.size() >= batch_size) {
      batches.push_back(std::move(current));
      current = {};
    }
  }
  if (!current.rows.empty()) batches.push_back(std::move(current));
  // Batch norm needs >= 2 rows; merge any undersized batch into its
  // neighbor.
  for (std::size_t i = batches.size(); i-- > 0;) {
    if (batches[i].rows.size() >= 2 || batches.size() < 2) continue;
    auto& sink = i > 0 ? batches[i - 1] : batches[i + 1];
    sink.rows.insert(sink.rows.end(), batches[i].rows.begin(), batches[i].rows.end());
    sink.queries.insert(sink.queries.end(), batches[i].queries.begin(), batches[i].queries.end());
    batches.erase(batches.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return batches;
}

/// Pair set of the batch's queries remapped to batch-local indices.
PairSet localize_pairs(const PairSet& pairs, const QueryGroups& groups,
                       const CorrectiveBatch& batch) {
  PairSet local;
  std::size_t base = 0;
  for (std::size_t q : batch.queries) {
    std::vector<PairSet::Pair> list;
    const std::size_t lo = groups.begin(q);
    for (const auto& p : pairs.by_query[q]) {
      list.push_back({base + (p.better - lo), base + (p.worse - lo)});
    }
    local.by_query.push_back(std::move(list));
    base += groups.size(q);
  }
  return local;
}

}  // namespace

double corrective_step(Ensemble& model, const DataSet& data, const TrainConfig& config,
                       const PairSet* pairs, RngState& rng) {
  if (model.learners.empty()) throw ContractError("corrective_step: model has no learners");
  data.validate();
  const bool ranking = model.task.is_ranking();
  if (ranking && (pairs == nullptr || !data.groups)) {
    throw DataError("corrective_step: ranking needs query groups and a pair set");
  }
  const std::size_t num_learners = model.learners.size();
  const double lr = scheduled_lr(config.cs_lr, num_learners, config.lr_halving_period);
  AdamState adam = AdamState::with(lr, config.l2);

  bool any_bn = false;
  for (const WeakLearner& learner : model.learners) any_bn |= learner.arch.use_batch_norm;
  double final_epoch_loss = 0.0;

  for (std::size_t epoch = 0; epoch < config.cs_epochs; ++epoch) {
    std::vector<CorrectiveBatch> batches =
        ranking ? make_query_batches(*data.groups, config.batch_size, rng)
                : make_row_batches(data.num_rows(), config.batch_size, any_bn, rng);

    double loss_acc = 0.0, weight_acc = 0.0;
    for (const CorrectiveBatch& batch : batches) {
      const Matrix xb = data.features.take_rows(batch.rows);
      const std::size_t nb = xb.rows();

      // Full-ensemble Train-mode forward, keeping every stage's cache.
      std::vector<ForwardResult> stage_fwd;
      stage_fwd.reserve(num_learners);
      Matrix input = xb;
      std::vector<double> y_hat(nb, model.prior);
      for (std::size_t k = 0; k < num_learners; ++k) {
        ForwardResult res = forward(model.learners[k], input, Mode::Train);
        for (std::size_t i = 0; i < nb; ++i) y_hat[i] += model.alphas[k] * res.scores[i];
        if (model.stacked && k + 1 < num_learners) input = Matrix::hcat(xb, res.penultimate);
        stage_fwd.push_back(std::move(res));
      }

      std::vector<double> batch_targets;
      PairSet local_pairs;
      double batch_weight = static_cast<double>(nb);
      if (ranking) {
        local_pairs = localize_pairs(*pairs, *data.groups, batch);
        if (local_pairs.total_pairs() == 0) continue;  // nothing to learn from
        batch_weight = static_cast<double>(local_pairs.total_pairs());
      } else {
        batch_targets.reserve(nb);
        for (std::size_t r : batch.rows) batch_targets.push_back(data.targets[r]);
      }
      const PairSet* local = ranking ? &local_pairs : nullptr;
      const double loss = corrective_loss(model.task, batch_targets, local, y_hat);
      if (!std::isfinite(loss)) throw NumericError("corrective_step: non-finite loss");
      loss_acc += loss * batch_weight;
      weight_acc += batch_weight;

      const std::vector<double> d_yhat = corrective_grad(model.task, batch_targets, local, y_hat);

      // Backward through the stages, last to first; the stacked-feature
      // columns of learner k+1's input gradient flow into learner k.
      std::vector<ParameterGradients> stage_grads(num_learners);
      std::vector<double> d_alpha(num_learners, 0.0);
      Matrix pen_grad;  // dL/d(penultimate of stage k), or empty
      for (std::size_t k = num_learners; k-- > 0;) {
        std::vector<double> upstream(nb);
        for (std::size_t i = 0; i < nb; ++i) upstream[i] = model.alphas[k] * d_yhat[i];
        for (std::size_t i = 0; i < nb; ++i) d_alpha[k] += d_yhat[i] * stage_fwd[k].scores[i];

        stage_grads[k] =
            backward(model.learners[k], stage_fwd[k].cache, upstream, pen_grad);

        pen_grad = Matrix();
        if (k > 0 && model.stacked && config.cs_grad_through_stack) {
          const std::size_t d = model.feature_dim;
          const std::size_t pdim = model.learners[k - 1].arch.penultimate_dim();
          pen_grad = Matrix(nb, pdim);
          for (std::size_t i = 0; i < nb; ++i) {
            const double* src = stage_grads[k].input.row_ptr(i);
            double* dst = pen_grad.row_ptr(i);
            for (std::size_t c = 0; c < pdim; ++c) dst[c] = src[d + c];
          }
        }
      }

      std::vector<double> flat_params, flat_grads;
      for (std::size_t k = 0; k < num_learners; ++k) {
        flatten_params(model.learners[k], flat_params);
        flatten_grads(stage_grads[k], flat_grads);
      }
      if (config.alpha_trainable) {
        flat_params.insert(flat_params.end(), model.alphas.begin(), model.alphas.end());
        flat_grads.insert(flat_grads.end(), d_alpha.begin(), d_alpha.end());
      }
      adam_step(adam, flat_params, flat_grads);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < num_learners; ++k) {
        offset = unflatten_params(model.learners[k], flat_params, offset);
      }
      if (config.alpha_trainable) {
        std::copy(flat_params.begin() + static_cast<std::ptrdiff_t>(offset), flat_params.end(),
                  model.alphas.begin());
      }
    }
    final_epoch_loss = weight_acc > 0.0 ? loss_acc / weight_acc : 0.0;
  }
  return final_epoch_loss;
}

MetricKind default_metric(const TaskKind& task) {
  switch (task.kind) {
    case TaskKind::Kind::Regression: return MetricKind::Rmse;
    case TaskKind::Kind::BinaryClassification: return MetricKind::Auc;
    case TaskKind::Kind::PairwiseRanking: return MetricKind::Ndcg5;
  }
  return MetricKind::Rmse;
}

FitResult fit(const DataSet& train, const DataSet& val, const TrainConfig& config,
              const StageCallback& on_stage) {
  config.validate();
  train.validate();
  val.validate();
  if (train.num_rows() == 0) throw DataError("fit: empty training data");
  const bool ranking = config.task.is_ranking();
  if (ranking && !train.groups) throw DataError("fit: ranking needs query groups");

  RngState master(config.seed);
  RngState rng_pairs = master.fork();

  Ensemble model;
  model.task = config.task;
  model.stacked = config.stacked;
  model.feature_dim = train.feature_dim();
  model.prior = prior(config.task, train.targets);

  PairSet pairs;
  const PairSet* pairs_ptr = nullptr;
  if (ranking) {
    pairs = build_pairs(train.targets, *train.groups, rng_pairs, config.max_pairs_per_query);
    pairs_ptr = &pairs;
  }

  const MetricKind metric = default_metric(config.task);
  const QueryGroups* val_groups = val.groups ? &*val.groups : nullptr;

  FitResult out;
  for (std::size_t t = 1; t <= config.num_stages; ++t) {
    const auto t_start = std::chrono::steady_clock::now();
    RngState rng_stage = master.fork();
    StageFitOutcome outcome = fit_stage(model, train, config, pairs_ptr, rng_stage);

    double closs = std::numeric_limits<double>::quiet_NaN();
    if (config.cs_every > 0 && t % config.cs_every == 0 && !model.learners.empty()) {
      RngState rng_cs = master.fork();
      closs = corrective_step(model, train, config, pairs_ptr, rng_cs);
    }

    double vm = std::numeric_limits<double>::quiet_NaN();
    if (val.num_rows() > 0) {
      const std::vector<double> scores = predict(model, val.features);
      vm = evaluate_metric(metric, scores, val.targets, val_groups);
    }

    StageLogRecord rec;
    rec.stage = t;
    rec.stage_loss = outcome.stage_loss;
    rec.corrective_loss = closs;
    rec.val_metric = vm;
    rec.alphas = model.alphas;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (on_stage) on_stage(rec);
    out.records.push_back(std::move(rec));
  }
  out.model = std::move(model);
  return out;
}

std::size_t select_num_learners(const Ensemble& model, const DataSet& val, MetricKind metric) {
  if (val.num_rows() == 0) throw DataError("select_num_learners: empty validation data");
  const std::size_t K = model.num_stages();
  if (K == 0) return 0;

  const QueryGroups* groups = val.groups ? &*val.groups : nullptr;
  std::vector<double> scores(val.num_rows(), model.prior);
  Matrix input = val.features;
  std::size_t best_k = 1;
  double best_value = 0.0;
  const bool higher = metric_higher_is_better(metric);
  for (std::size_t k = 0; k < K; ++k) {
    ForwardResult res = forward_eval(model.learners[k], input);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += model.alphas[k] * res.scores[i];
    if (model.stacked && k + 1 < K) input = Matrix::hcat(val.features, res.penultimate);
    const double value = evaluate_metric(metric, scores, val.targets, groups);
    if (k == 0 || (higher ? value > best_value : value < best_value)) {
      best_value = value;
      best_k = k + 1;
    }
  }
  return best_k;
}

}  // namespace gbnet
