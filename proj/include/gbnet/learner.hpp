#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gbnet/adam.hpp"
#include "gbnet/matrix.hpp"
#include "gbnet/rng.hpp"

namespace gbnet {

/// Hidden-layer activation. The penultimate features handed to the next
/// booster stage are always rectified (ReLU) on top of the last hidden
/// activation, independent of this choice.
enum class Activation { LeakyReLU, ReLU6 };

enum class Mode { Train, Eval };

/// Architecture of one weak learner: a shallow MLP with 1-4 hidden
/// layers and a single linear output unit.
struct LearnerArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;  // length 1..4
  Activation activation = Activation::LeakyReLU;
  double leaky_slope = 0.01;
  bool use_batch_norm = true;

  std::size_t num_layers() const { return hidden_dims.size(); }
  std::size_t penultimate_dim() const { return hidden_dims.back(); }

  /// Throws ConfigError on zero dims or an unsupported depth.
  void validate() const;
};

/// Per-feature batch normalization over the mini-batch dimension.
/// Biased (population) variance is used both for normalization and for
/// the running-stat update.
struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;

  static constexpr double kEpsilon = 1e-12;
};

/// One shallow MLP weak learner with explicit parameters.
struct WeakLearner {
  LearnerArch arch;
  std::vector<Matrix> weights;              // layer l: hidden_dims[l] x fan_in
  std::vector<std::vector<double>> biases;  // layer l: hidden_dims[l]
  std::vector<BatchNormState> bn;           // per hidden layer, when enabled
  std::vector<double> out_weight;           // 1 x last hidden dim
  double out_bias = 0.0;
  std::uint64_t version = 0;  // bumped on parameter mutation; guards caches
};

/// Everything backward() needs from a Train-mode forward pass.
struct ForwardCache {
  Mode mode = Mode::Eval;
  std::uint64_t version = 0;
  Matrix input;
  std::vector<Matrix> bn_normalized;        // x-hat per layer (BN only)
  std::vector<std::vector<double>> bn_var;  // batch variance per layer (BN only)
  std::vector<Matrix> act_input;            // activation input per layer
  std::vector<Matrix> act_output;           // activation output per layer
};

struct ForwardResult {
  std::vector<double> scores;  // one per batch row
  Matrix penultimate;          // rows x last hidden dim, rectified
  ForwardCache cache;
};

/// Gradients for every learner parameter plus the input batch.
struct ParameterGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::vector<double>> bn_gamma;
  std::vector<std::vector<double>> bn_beta;
  std::vector<double> out_weight;
  double out_bias = 0.0;
  Matrix input;  // dL/d(batch); chains through stacked features
};

/// Kaiming-uniform weights scaled by fan-in, zero biases, identity
/// batch-norm (gamma 1, beta 0, running mean 0, running var 1).
WeakLearner init_learner(const LearnerArch& arch, RngState& rng);

/// Forward pass. Train mode normalizes with mini-batch statistics and
/// updates running stats (so it mutates `learner`); Eval mode uses the
/// running statistics and mutates nothing.
ForwardResult forward(WeakLearner& learner, const Matrix& batch, Mode mode);

/// Pure Eval-mode forward.
ForwardResult forward_eval(const WeakLearner& learner, const Matrix& batch);

/// Backpropagation through one weak learner. `upstream_scores` is
/// dL/d(score) per row; `upstream_penultimate`, when non-empty, is
/// dL/d(penultimate features) and chains corrective-step gradients into
/// earlier stages. Requires a Train-mode cache for the current
/// parameters (ContractError otherwise).
ParameterGradients backward(const WeakLearner& learner, const ForwardCache& cache,
                            std::span<const double> upstream_scores,
                            const Matrix& upstream_penultimate = Matrix());

/// Number of trainable scalars (weights, biases, BN gamma/beta, output).
std::size_t parameter_count(const WeakLearner& learner);

/// Flat parameter/gradient views in one fixed order. `flatten_params`
/// appends to `out`; `unflatten_params` reads the same layout back and
/// bumps the learner version.
void flatten_params(const WeakLearner& learner, std::vector<double>& out);
std::size_t unflatten_params(WeakLearner& learner, std::span<const double> flat, std::size_t offset = 0);
void flatten_grads(const ParameterGradients& grads, std::vector<double>& out);

enum class FitStatus { Ok, AllZeroWeights };

struct LsqFitResult {
  FitStatus status = FitStatus::Ok;
  double final_loss = 0.0;  // mean weighted squared error, last epoch
};

/// Mini-batch Adam on the weighted least-squares objective
/// (1/B) * sum_i weights[i] * (targets[i] - f(x_i))^2.
/// All-zero weights leave the learner untouched and report it.
LsqFitResult fit_weighted_lsq(WeakLearner& learner, const Matrix& inputs,
                              std::span<const double> targets, std::span<const double> weights,
                              std::size_t epochs, AdamState adam, std::size_t batch_size,
                              RngState& rng);

}  // namespace gbnet
