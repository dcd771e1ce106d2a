#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gbnet/adam.hpp"
#include "gbnet/error.hpp"
#include "gbnet/learner.hpp"
#include "support/learner_check.hpp"

using namespace gbnet;
using namespace gbnet::testing;

namespace {

LearnerArch simple_arch(std::size_t input, std::vector<std::size_t> hidden, bool bn = false,
                        double slope = 0.01) {
  LearnerArch arch;
  arch.input_dim = input;
  arch.hidden_dims = std::move(hidden);
  arch.activation = Activation::LeakyReLU;
  arch.leaky_slope = slope;
  arch.use_batch_norm = bn;
  return arch;
}

}  // namespace

TEST_CASE("init_learner produces the documented shapes") {
  RngState rng(7);
  WeakLearner learner = init_learner(simple_arch(4, {2}), rng);
  CHECK(learner.weights.size() == 1);
  CHECK(learner.weights[0].rows() == 2);
  CHECK(learner.weights[0].cols() == 4);
  CHECK(learner.biases[0] == std::vector<double>{0.0, 0.0});
  CHECK(learner.out_weight.size() == 2);
  CHECK(learner.out_bias == 0.0);
}

TEST_CASE("init_learner is deterministic per seed") {
  RngState a(123), b(123);
  WeakLearner la = init_learner(simple_arch(5, {8, 4}, true), a);
  WeakLearner lb = init_learner(simple_arch(5, {8, 4}, true), b);
  CHECK(learners_identical(la, lb));
}

TEST_CASE("penultimate dimension follows the last hidden layer") {
  RngState rng(1);
  WeakLearner learner = init_learner(simple_arch(28, {16, 16}, true), rng);
  CHECK(learner.arch.penultimate_dim() == 16);
  Matrix batch(3, 28);
  for (double& v : batch.data()) v = 0.1;
  ForwardResult res = forward_eval(learner, batch);
  CHECK(res.penultimate.rows() == 3);
  CHECK(res.penultimate.cols() == 16);
  CHECK(res.scores.size() == 3);
}

TEST_CASE("init_learner rejects invalid architectures") {
  RngState rng(1);
  CHECK_THROWS_AS(init_learner(simple_arch(0, {4}), rng), ConfigError);
  CHECK_THROWS_AS(init_learner(simple_arch(4, {}), rng), ConfigError);
  CHECK_THROWS_AS(init_learner(simple_arch(4, {2, 2, 2, 2, 2}), rng), ConfigError);
  CHECK_THROWS_AS(init_learner(simple_arch(4, {4, 0}), rng), ConfigError);
}

TEST_CASE("forward applies leaky ReLU on the hidden layer") {
  RngState rng(1);
  WeakLearner learner = init_learner(simple_arch(2, {2}), rng);
  learner.weights[0] = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  learner.biases[0] = {0.0, 0.0};
  learner.out_weight = {0.0, 1.0};  // expose the second hidden unit
  learner.out_bias = 0.0;

  Matrix batch(1, 2, {1.0, -1.0});
  ForwardResult res = forward_eval(learner, batch);
  CHECK(res.cache.act_output[0](0, 0) == doctest::Approx(1.0));
  CHECK(res.cache.act_output[0](0, 1) == doctest::Approx(-0.01));
  CHECK(res.scores[0] == doctest::Approx(-0.01));
  // The stacking features are rectified on top of the activation.
  CHECK(res.penultimate(0, 0) == doctest::Approx(1.0));
  CHECK(res.penultimate(0, 1) == 0.0);
}

TEST_CASE("batch norm normalizes a feature column to zero mean, unit variance") {
  RngState rng(1);
  WeakLearner learner = init_learner(simple_arch(1, {1}, true), rng);
  learner.weights[0] = Matrix(1, 1, {1.0});

  Matrix batch(2, 1, {1.0, 3.0});
  ForwardResult res = forward(learner, batch, Mode::Train);
  // gamma=1, beta=0: activation input is the normalized column.
  CHECK(res.cache.act_input[0](0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(res.cache.act_input[0](1, 0) == doctest::Approx(1.0).epsilon(1e-9));
  // Running stats moved toward the batch stats (momentum 0.1).
  CHECK(learner.bn[0].running_mean[0] == doctest::Approx(0.2));
  CHECK(learner.bn[0].running_var[0] == doctest::Approx(0.9 + 0.1 * 1.0));
}

TEST_CASE("train-mode batch norm output has tight zero-mean unit-variance stats") {
  RngState rng(99);
  WeakLearner learner = init_learner(simple_arch(6, {8, 5}, true), rng);
  Matrix batch(32, 6);
  for (double& v : batch.data()) v = rng.normal();
  ForwardResult res = forward(learner, batch, Mode::Train);
  for (const Matrix& act_in : res.cache.act_input) {
    for (std::size_t j = 0; j < act_in.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < act_in.rows(); ++i) mean += act_in(i, j);
      mean /= static_cast<double>(act_in.rows());
      double var = 0.0;
      for (std::size_t i = 0; i < act_in.rows(); ++i) {
        const double d = act_in(i, j) - mean;
        var += d * d;
      }
      var /= static_cast<double>(act_in.rows());
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("eval-mode forward is pure and repeatable") {
  RngState rng(5);
  WeakLearner learner = init_learner(simple_arch(4, {6, 3}, true), rng);
  Matrix batch(5, 4);
  for (double& v : batch.data()) v = rng.normal();

  const WeakLearner before = learner;
  ForwardResult first = forward(learner, batch, Mode::Eval);
  ForwardResult second = forward(learner, batch, Mode::Eval);
  CHECK(learners_identical(before, learner));
  CHECK(first.scores == second.scores);
  CHECK(first.penultimate == second.penultimate);
}

TEST_CASE("forward rejects bad batches") {
  RngState rng(5);
  WeakLearner learner = init_learner(simple_arch(4, {6}, true), rng);
  Matrix wrong(3, 5);
  CHECK_THROWS_AS(forward(learner, wrong, Mode::Eval), ShapeError);
  Matrix single(1, 4);
  CHECK_THROWS_AS(forward(learner, single, Mode::Train), DataError);
  CHECK_NOTHROW(forward(learner, single, Mode::Eval));
}

TEST_CASE("backward matches finite differences on random small nets") {
  RngState rng(2024);
  double max_param = 0.0, max_input = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    RandomLearnerCase instance = make_random_case(rng, 3, 16);
    GradCheckReport report = check_gradients(instance.learner, instance.batch,
                                             instance.score_grad, instance.penultimate_grad);
    max_param = std::max(max_param, report.max_param_err);
    max_input = std::max(max_input, report.max_input_err);
  }
  CHECK(max_param < 1e-4);
  CHECK(max_input < 1e-4);
}

TEST_CASE("zero upstream gradient gives exactly zero parameter gradients") {
  RngState rng(11);
  WeakLearner learner = init_learner(simple_arch(3, {4, 4}, true), rng);
  Matrix batch(6, 3);
  for (double& v : batch.data()) v = rng.normal();
  ForwardResult res = forward(learner, batch, Mode::Train);
  std::vector<double> zero(6, 0.0);
  ParameterGradients grads = backward(learner, res.cache, zero);
  std::vector<double> flat;
  flatten_grads(grads, flat);
  for (double g : flat) CHECK(g == 0.0);
  for (double g : grads.input.data()) CHECK(g == 0.0);
}

TEST_CASE("input gradient of a linear learner is the closed form") {
  // Leaky slope 1 makes the hidden activation the identity, so the whole
  // net is linear: score = out_w * (W x + b) + out_b.
  RngState rng(3);
  LearnerArch arch = simple_arch(3, {4}, false, 1.0);
  WeakLearner learner = init_learner(arch, rng);
  Matrix batch(2, 3);
  for (double& v : batch.data()) v = rng.normal();
  ForwardResult res = forward(learner, batch, Mode::Train);
  std::vector<double> upstream = {0.7, -1.3};
  ParameterGradients grads = backward(learner, res.cache, upstream);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        expect += upstream[i] * learner.out_weight[j] * learner.weights[0](j, c);
      }
      CHECK(grads.input(i, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward rejects stale caches and wrong modes") {
  RngState rng(4);
  WeakLearner learner = init_learner(simple_arch(3, {4}), rng);
  Matrix batch(2, 3);
  for (double& v : batch.data()) v = rng.normal();
  std::vector<double> upstream = {1.0, 1.0};

  ForwardResult eval = forward(learner, batch, Mode::Eval);
  CHECK_THROWS_AS(backward(learner, eval.cache, upstream), ContractError);

  ForwardResult train = forward(learner, batch, Mode::Train);
  std::vector<double> params;
  flatten_params(learner, params);
  params[0] += 0.5;
  unflatten_params(learner, params);  // bumps the version
  CHECK_THROWS_AS(backward(learner, train.cache, upstream), ContractError);
}

TEST_CASE("adam first step moves a parameter by about -lr") {
  AdamState state = AdamState::with(0.005, 0.0);
  std::vector<double> params = {1.0};
  std::vector<double> grads = {0.5};
  adam_step(state, params, grads);
  CHECK(params[0] == doctest::Approx(1.0 - 0.005).epsilon(1e-7));
  CHECK(state.step_count == 1);
}

TEST_CASE("adam with zero gradients and zero l2 is a fixed point") {
  AdamState state = AdamState::with(0.01, 0.0);
  std::vector<double> params = {0.25, -2.0, 7.5};
  const std::vector<double> before = params;
  std::vector<double> grads = {0.0, 0.0, 0.0};
  for (int i = 0; i < 5; ++i) adam_step(state, params, grads);
  CHECK(params == before);
}

TEST_CASE("adam is deterministic across identical runs") {
  AdamState s1 = AdamState::with(0.005, 0.001);
  AdamState s2 = s1;
  std::vector<double> p1 = {0.5, -0.25}, p2 = p1;
  std::vector<double> g = {0.1, -0.2};
  for (int i = 0; i < 10; ++i) {
    adam_step(s1, p1, g);
    adam_step(s2, p2, g);
  }
  CHECK(p1 == p2);
}

TEST_CASE("adam rejects non-finite gradients and shape changes") {
  AdamState state = AdamState::with(0.01, 0.0);
  std::vector<double> params = {1.0, 2.0};
  std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(adam_step(state, params, bad), NumericError);
  std::vector<double> ok = {0.1, 0.1};
  adam_step(state, params, ok);
  std::vector<double> shrunk = {1.0};
  std::vector<double> g1 = {0.1};
  CHECK_THROWS_AS(adam_step(state, shrunk, g1), ShapeError);
}

TEST_CASE("fit_weighted_lsq with unit weights takes the plain MSE step") {
  RngState rng(17);
  LearnerArch arch = simple_arch(3, {4}, false);
  WeakLearner learner = init_learner(arch, rng);
  Matrix inputs(6, 3);
  for (double& v : inputs.data()) v = rng.normal();
  std::vector<double> targets(6);
  for (double& t : targets) t = rng.normal();
  std::vector<double> weights(6, 1.0);

  // Replays the trainer's shuffle to reproduce its single full batch.
  RngState trainer_rng(42);
  RngState replay_rng = trainer_rng;
  std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};
  replay_rng.shuffle(order);

  WeakLearner manual = learner;
  Matrix xb = inputs.take_rows(order);
  ForwardResult fwd = forward(manual, xb, Mode::Train);
  std::vector<double> upstream(6);
  const double inv_b = 1.0 / 6.0;
  for (std::size_t i = 0; i < 6; ++i) {
    upstream[i] = 2.0 * 1.0 * (fwd.scores[i] - targets[order[i]]) * inv_b;
  }
  ParameterGradients grads = backward(manual, fwd.cache, upstream);
  std::vector<double> flat_p, flat_g;
  flatten_params(manual, flat_p);
  flatten_grads(grads, flat_g);
  AdamState adam = AdamState::with(0.005, 0.0);
  adam_step(adam, flat_p, flat_g);
  unflatten_params(manual, flat_p);

  fit_weighted_lsq(learner, inputs, targets, weights, 1, AdamState::with(0.005, 0.0), 64,
                   trainer_rng);
  CHECK(learners_identical(learner, manual));
}

TEST_CASE("fit_weighted_lsq solves a single-sample problem") {
  RngState rng(8);
  LearnerArch arch = simple_arch(1, {2}, false, 1.0);
  WeakLearner learner = init_learner(arch, rng);
  Matrix inputs(1, 1, {1.0});
  std::vector<double> targets = {0.7};
  std::vector<double> weights = {2.0};
  fit_weighted_lsq(learner, inputs, targets, weights, 2000, AdamState::with(0.01, 0.0), 1, rng);
  ForwardResult res = forward_eval(learner, inputs);
  CHECK(std::abs(res.scores[0] - 0.7) < 1e-2);
}

TEST_CASE("fit_weighted_lsq ignores zero-weight samples") {
  RngState rng(9);
  LearnerArch arch = simple_arch(2, {3}, false);
  WeakLearner learner = init_learner(arch, rng);
  Matrix inputs(2, 2, {0.4, -0.2, 5.0, 9.0});
  std::vector<double> targets = {1.0, -100.0};
  std::vector<double> weights = {1.0, 0.0};

  // The weighted loss is insensitive to the zero-weight sample.
  auto loss_of = [&](const Matrix& x, const std::vector<double>& t) {
    WeakLearner copy = learner;
    ForwardResult res = forward(copy, x, Mode::Train);
    double acc = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double r = t[i] - res.scores[i];
      acc += weights[i] * r * r;
    }
    return acc / 2.0;
  };
  const double base = loss_of(inputs, targets);
  Matrix moved = inputs;
  moved(1, 0) += 3.0;
  moved(1, 1) -= 2.0;
  std::vector<double> shifted_targets = {1.0, 55.0};
  CHECK(loss_of(moved, targets) == base);
  CHECK(loss_of(inputs, shifted_targets) == base);

  RngState fit_rng(3);
  LsqFitResult res = fit_weighted_lsq(learner, inputs, targets, weights, 3,
                                      AdamState::with(0.005, 0.0), 2, fit_rng);
  CHECK(res.status == FitStatus::Ok);
}

TEST_CASE("fit_weighted_lsq reports all-zero weights without touching the learner") {
  RngState rng(10);
  WeakLearner learner = init_learner(simple_arch(2, {3}), rng);
  const WeakLearner before = learner;
  Matrix inputs(2, 2, {1.0, 2.0, 3.0, 4.0});
  std::vector<double> targets = {1.0, 2.0};
  std::vector<double> weights = {0.0, 0.0};
  LsqFitResult res =
      fit_weighted_lsq(learner, inputs, targets, weights, 5, AdamState::with(0.01, 0.0), 2, rng);
  CHECK(res.status == FitStatus::AllZeroWeights);
  CHECK(learners_identical(before, learner));
}

TEST_CASE("training is bit-deterministic per seed") {
  auto run = [] {
    RngState rng(77);
    WeakLearner learner = init_learner(simple_arch(4, {8, 8}, true), rng);
    Matrix inputs(32, 4);
    for (double& v : inputs.data()) v = rng.normal();
    std::vector<double> targets(32), weights(32, 1.0);
    for (double& t : targets) t = rng.normal();
    fit_weighted_lsq(learner, inputs, targets, weights, 3, AdamState::with(0.005, 0.001), 8, rng);
    return learner;
  };
  WeakLearner a = run();
  WeakLearner b = run();
  CHECK(learners_identical(a, b));
}
