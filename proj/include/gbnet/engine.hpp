#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "gbnet/data_io.hpp"
#include "gbnet/learner.hpp"
#include "gbnet/losses.hpp"
#include "gbnet/metrics.hpp"

namespace gbnet {

/// The boosted additive model: prior + sum_k alpha_k * f_k(input_k),
/// where input_k chains stacked penultimate features when `stacked`.
struct Ensemble {
  TaskKind task;
  double prior = 0.0;  // f0
  std::vector<WeakLearner> learners;
  std::vector<double> alphas;  // per-stage boost rates
  bool stacked = true;
  std::size_t feature_dim = 0;

  std::size_t num_stages() const { return learners.size(); }
};

/// Architecture shared by every stage's fresh learner; the input
/// dimension is derived per stage (d, or d + penultimate dim when
/// stacked).
struct WeakLearnerSpec {
  std::vector<std::size_t> hidden_dims = {16, 16};
  Activation activation = Activation::LeakyReLU;
  double leaky_slope = 0.01;
  bool use_batch_norm = true;
};

struct TrainConfig {
  TaskKind task;
  std::size_t num_stages = 40;         // K
  std::size_t stage_epochs = 1;        // epochs per new weak learner
  std::size_t cs_epochs = 1;           // corrective-step epochs T (2 for ranking)
  std::size_t cs_every = 1;            // run C/S every this many stages; 0 disables
  double stage_lr = 0.005;
  double cs_lr = 0.005;
  std::size_t lr_halving_period = 15;  // in stages; 0 disables
  std::size_t batch_size = 2048;
  double alpha_init = 1.0;
  bool alpha_trainable = true;
  bool use_second_order = true;        // false: h == 1, targets are -g
  double row_subsample_fraction = 1.0;
  double h_min = kHessianFloor;
  double l2 = 0.001;
  bool stacked = true;
  bool cs_grad_through_stack = true;   // propagate C/S gradients across stages
  std::uint64_t seed = 0;
  std::size_t max_pairs_per_query = 10000;
  WeakLearnerSpec learner;

  void validate() const;  // throws ConfigError
};

struct StageLogRecord {
  std::size_t stage = 0;           // 1-based
  double stage_loss = 0.0;         // mean weighted squared error on the (sub)sample
  double corrective_loss = 0.0;    // NaN when no C/S ran this stage
  double val_metric = 0.0;         // NaN without validation data
  std::vector<double> alphas;      // snapshot after the stage
  double seconds = 0.0;
};

inline constexpr std::size_t kAllLearners = std::numeric_limits<std::size_t>::max();

/// Learning rate after the halving schedule: halved once per
/// `period` stages. stage_number is 1-based.
double scheduled_lr(double base, std::size_t stage_number, std::size_t period);

/// Input matrix for the next stage's learner: x itself for an empty
/// model or simple mode, otherwise [x || penultimate of the last
/// learner], chained through the sequence. Pure Eval-mode variant.
Matrix augment_features(const Ensemble& model, const Matrix& x);

/// Train-mode variant: batch-norm uses mini-batch statistics and
/// running stats update, as during stage fitting.
Matrix augment_features_train(Ensemble& model, const Matrix& x);

/// Ensemble prediction over the first `num_learners` stages (Eval mode,
/// pure).
std::vector<double> predict(const Ensemble& model, const Matrix& x,
                            std::size_t num_learners = kAllLearners);

/// P(y=+1|x) = sigmoid(2 * score); classification models only.
std::vector<double> predict_proba(const Ensemble& model, const Matrix& x);

/// Newton statistics of the task loss at the current ensemble output.
/// With use_second_order off, h is forced to 1 so targets are plain
/// negative gradients. `pairs` is required for ranking.
GradHessBatch compute_stage_stats(const Ensemble& model, const DataSet& data,
                                  const TrainConfig& config, const PairSet* pairs = nullptr);

struct StageFitOutcome {
  bool appended = false;
  double stage_loss = 0.0;
  std::size_t rows_used = 0;
};

/// One boosting stage: fit a fresh learner to the Newton targets under
/// h-weighted least squares on (optionally subsampled) augmented
/// features, then append it with boost rate alpha_init. Degenerate
/// stages (all-zero weights) append nothing.
StageFitOutcome fit_stage(Ensemble& model, const DataSet& data, const TrainConfig& config,
                          const PairSet* pairs, RngState& rng);

/// Fully-corrective refinement: mini-batch Adam on the task loss over
/// the whole ensemble, updating every learner's parameters and every
/// boost rate (when trainable). Returns the final epoch's mean loss.
double corrective_step(Ensemble& model, const DataSet& data, const TrainConfig& config,
                       const PairSet* pairs, RngState& rng);

MetricKind default_metric(const TaskKind& task);

struct FitResult {
  Ensemble model;
  std::vector<StageLogRecord> records;
};

using StageCallback = std::function<void(const StageLogRecord&)>;

/// Full training loop: prior, K stages, corrective step per cadence,
/// learning-rate halving, per-stage validation metric and timing.
/// Deterministic per seed. `on_stage`, when set, receives each record
/// as its stage completes.
FitResult fit(const DataSet& train, const DataSet& val, const TrainConfig& config,
              const StageCallback& on_stage = {});

/// Best prefix length 1..K on validation data under the metric; ties
/// resolve toward fewer learners.
std::size_t select_num_learners(const Ensemble& model, const DataSet& val, MetricKind metric);

}  // namespace gbnet
