#include "gbnet/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "gbnet/error.hpp"

namespace gbnet {

namespace {

double activate(Activation act, double slope, double x) {
  if (act == Activation::LeakyReLU) return x > 0.0 ? x : slope * x;
  return x < 0.0 ? 0.0 : (x > 6.0 ? 6.0 : x);  // ReLU6
}

double activate_grad(Activation act, double slope, double x) {
  if (act == Activation::LeakyReLU) return x > 0.0 ? 1.0 : slope;
  return (x > 0.0 && x < 6.0) ? 1.0 : 0.0;
}

}  // namespace

void LearnerArch::validate() const {
  if (input_dim == 0) throw ConfigError("LearnerArch: input_dim must be > 0");
  if (hidden_dims.empty() || hidden_dims.size() > 4) {
    throw ConfigError("LearnerArch: 1 to 4 hidden layers required");
  }
  for (std::size_t d : hidden_dims) {
    if (d == 0) throw ConfigError("LearnerArch: hidden layer dim must be > 0");
  }
}

WeakLearner init_learner(const LearnerArch& arch, RngState& rng) {
  arch.validate();
  WeakLearner learner;
  learner.arch = arch;

  std::size_t fan_in = arch.input_dim;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t dim = arch.hidden_dims[l];
    Matrix w(dim, fan_in);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& x : w.data()) x = rng.uniform(-bound, bound);
    learner.weights.push_back(std::move(w));
    learner.biases.emplace_back(dim, 0.0);
    if (arch.use_batch_norm) {
      BatchNormState s;
      s.gamma.assign(dim, 1.0);
      s.beta.assign(dim, 0.0);
      s.running_mean.assign(dim, 0.0);
      s.running_var.assign(dim, 1.0);
      learner.bn.push_back(std::move(s));
    }
    fan_in = dim;
  }

  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  learner.out_weight.resize(fan_in);
  for (double& x : learner.out_weight) x = rng.uniform(-bound, bound);
  learner.out_bias = 0.0;
  return learner;
}

static ForwardResult forward_impl(const WeakLearner& learner_in, WeakLearner* mutable_learner,
                                  const Matrix& batch, Mode mode) {
  const WeakLearner& learner = learner_in;
  const LearnerArch& arch = learner.arch;
  if (batch.cols() != arch.input_dim) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) +
                     " columns, learner expects " + std::to_string(arch.input_dim));
  }
  const std::size_t n = batch.rows();
  if (mode == Mode::Train && arch.use_batch_norm && n < 2) {
    throw DataError("forward: batch norm needs batch size >= 2 in Train mode");
  }

  ForwardResult res;
  ForwardCache& cache = res.cache;
  cache.mode = mode;
  cache.version = learner.version;
  cache.input = batch;

  const Matrix* prev = &cache.input;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const Matrix& w = learner.weights[l];
    const std::vector<double>& b = learner.biases[l];
    const std::size_t dim = arch.hidden_dims[l];

    Matrix z(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = prev->row_ptr(i);
      double* zi = z.row_ptr(i);
      for (std::size_t j = 0; j < dim; ++j) {
        const double* wj = w.row_ptr(j);
        double acc = b[j];
        for (std::size_t k = 0; k < w.cols(); ++k) acc += wj[k] * x[k];
        zi[j] = acc;
      }
    }

    Matrix act_in;
    if (arch.use_batch_norm) {
      const BatchNormState& s = learner.bn[l];
      std::vector<double> mean(dim), var(dim);
      if (mode == Mode::Train) {
        for (std::size_t j = 0; j < dim; ++j) {
          double mu = 0.0;
          for (std::size_t i = 0; i < n; ++i) mu += z(i, j);
          mu /= static_cast<double>(n);
          double v = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = z(i, j) - mu;
            v += d * d;
          }
          v /= static_cast<double>(n);  // biased
          mean[j] = mu;
          var[j] = v;
        }
        if (mutable_learner != nullptr) {
          BatchNormState& ms = mutable_learner->bn[l];
          for (std::size_t j = 0; j < dim; ++j) {
            ms.running_mean[j] = (1.0 - s.momentum) * ms.running_mean[j] + s.momentum * mean[j];
            ms.running_var[j] = (1.0 - s.momentum) * ms.running_var[j] + s.momentum * var[j];
          }
        }
      } else {
        mean = s.running_mean;
        var = s.running_var;
      }

      Matrix normalized(n, dim);
      act_in = Matrix(n, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        const double inv_std = 1.0 / std::sqrt(var[j] + BatchNormState::kEpsilon);
        for (std::size_t i = 0; i < n; ++i) {
          const double xh = (z(i, j) - mean[j]) * inv_std;
          normalized(i, j) = xh;
          act_in(i, j) = s.gamma[j] * xh + s.beta[j];
        }
      }
      cache.bn_normalized.push_back(std::move(normalized));
      cache.bn_var.push_back(std::move(var));
    } else {
      act_in = std::move(z);
    }

    Matrix act_out(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        act_out(i, j) = activate(arch.activation, arch.leaky_slope, act_in(i, j));
      }
    }
    cache.act_input.push_back(std::move(act_in));
    cache.act_output.push_back(std::move(act_out));
    prev = &cache.act_output.back();
  }

  const Matrix& last = cache.act_output.back();
  res.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = learner.out_bias;
    const double* a = last.row_ptr(i);
    for (std::size_t j = 0; j < last.cols(); ++j) acc += learner.out_weight[j] * a[j];
    res.scores[i] = acc;
  }

  // Penultimate features are the rectified last hidden activations.
  res.penultimate = Matrix(n, last.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < last.cols(); ++j) {
      const double a = last(i, j);
      res.penultimate(i, j) = a > 0.0 ? a : 0.0;
    }
  }
  return res;
}

ForwardResult forward(WeakLearner& learner, const Matrix& batch, Mode mode) {
  return forward_impl(learner, mode == Mode::Train ? &learner : nullptr, batch, mode);
}

ForwardResult forward_eval(const WeakLearner& learner, const Matrix& batch) {
  return forward_impl(learner, nullptr, batch, Mode::Eval);
}

ParameterGradients backward(const WeakLearner& learner, const ForwardCache& cache,
                            std::span<const double> upstream_scores,
                            const Matrix& upstream_penultimate) {
  if (cache.mode != Mode::Train) {
    throw ContractError("backward: requires a Train-mode forward cache");
  }
  if (cache.version != learner.version) {
    throw ContractError("backward: forward cache is stale (parameters changed)");
  }
  const LearnerArch& arch = learner.arch;
  const std::size_t n = cache.input.rows();
  if (upstream_scores.size() != n) {
    throw ShapeError("backward: upstream gradient length mismatch");
  }
  const bool has_pen_grad = !upstream_penultimate.empty();
  if (has_pen_grad && (upstream_penultimate.rows() != n ||
                       upstream_penultimate.cols() != arch.penultimate_dim())) {
    throw ShapeError("backward: penultimate gradient shape mismatch");
  }

  ParameterGradients grads;
  const std::size_t num_layers = arch.num_layers();
  grads.weights.resize(num_layers);
  grads.biases.resize(num_layers);
  if (arch.use_batch_norm) {
    grads.bn_gamma.resize(num_layers);
    grads.bn_beta.resize(num_layers);
  }

  const Matrix& last = cache.act_output.back();
  grads.out_weight.assign(last.cols(), 0.0);
  grads.out_bias = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = upstream_scores[i];
    grads.out_bias += u;
    const double* a = last.row_ptr(i);
    for (std::size_t j = 0; j < last.cols(); ++j) grads.out_weight[j] += u * a[j];
  }

  // dL/d(last hidden activations): score path plus the rectified
  // penultimate path.
  Matrix d_act(n, last.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const double u = upstream_scores[i];
    for (std::size_t j = 0; j < last.cols(); ++j) {
      double g = u * learner.out_weight[j];
      if (has_pen_grad && last(i, j) > 0.0) g += upstream_penultimate(i, j);
      d_act(i, j) = g;
    }
  }

  for (std::size_t l = num_layers; l-- > 0;) {
    const std::size_t dim = arch.hidden_dims[l];
    const Matrix& act_in = cache.act_input[l];

    Matrix d_pre(n, dim);  // gradient at the activation input
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        d_pre(i, j) = d_act(i, j) * activate_grad(arch.activation, arch.leaky_slope, act_in(i, j));
      }
    }

    Matrix d_z;
    if (arch.use_batch_norm) {
      const BatchNormState& s = learner.bn[l];
      const Matrix& xh = cache.bn_normalized[l];
      const std::vector<double>& var = cache.bn_var[l];
      grads.bn_gamma[l].assign(dim, 0.0);
      grads.bn_beta[l].assign(dim, 0.0);
      d_z = Matrix(n, dim);
      for (std::size_t j = 0; j < dim; ++j) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dy = d_pre(i, j);
          sum_dy += dy;
          sum_dy_xh += dy * xh(i, j);
        }
        grads.bn_beta[l][j] = sum_dy;
        grads.bn_gamma[l][j] = sum_dy_xh;
        const double inv_std = 1.0 / std::sqrt(var[j] + BatchNormState::kEpsilon);
        const double scale = s.gamma[j] * inv_std / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          d_z(i, j) = scale * (static_cast<double>(n) * d_pre(i, j) - sum_dy - xh(i, j) * sum_dy_xh);
        }
      }
    } else {
      d_z = std::move(d_pre);
    }

    const Matrix& below = l == 0 ? cache.input : cache.act_output[l - 1];
    const Matrix& w = learner.weights[l];
    Matrix dw(dim, w.cols());
    std::vector<double> db(dim, 0.0);
    Matrix d_below(n, w.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = below.row_ptr(i);
      double* db_row = d_below.row_ptr(i);
      for (std::size_t j = 0; j < dim; ++j) {
        const double dz = d_z(i, j);
        db[j] += dz;
        double* dwj = dw.row_ptr(j);
        const double* wj = w.row_ptr(j);
        for (std::size_t k = 0; k < w.cols(); ++k) {
          dwj[k] += dz * x[k];
          db_row[k] += dz * wj[k];
        }
      }
    }
    grads.weights[l] = std::move(dw);
    grads.biases[l] = std::move(db);
    d_act = std::move(d_below);
  }

  grads.input = std::move(d_act);
  return grads;
}

std::size_t parameter_count(const WeakLearner& learner) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < learner.arch.num_layers(); ++l) {
    n += learner.weights[l].size() + learner.biases[l].size();
    if (learner.arch.use_batch_norm) n += 2 * learner.arch.hidden_dims[l];
  }
  return n + learner.out_weight.size() + 1;
}

void flatten_params(const WeakLearner& learner, std::vector<double>& out) {
  for (std::size_t l = 0; l < learner.arch.num_layers(); ++l) {
    const auto& wd = learner.weights[l].data();
    out.insert(out.end(), wd.begin(), wd.end());
    out.insert(out.end(), learner.biases[l].begin(), learner.biases[l].end());
    if (learner.arch.use_batch_norm) {
      out.insert(out.end(), learner.bn[l].gamma.begin(), learner.bn[l].gamma.end());
      out.insert(out.end(), learner.bn[l].beta.begin(), learner.bn[l].beta.end());
    }
  }
  out.insert(out.end(), learner.out_weight.begin(), learner.out_weight.end());
  out.push_back(learner.out_bias);
}

std::size_t unflatten_params(WeakLearner& learner, std::span<const double> flat, std::size_t offset) {
  const std::size_t need = parameter_count(learner);
  if (offset + need > flat.size()) {
    throw ShapeError("unflatten_params: flat vector too short");
  }
  const double* p = flat.data() + offset;
  for (std::size_t l = 0; l < learner.arch.num_layers(); ++l) {
    auto& wd = learner.weights[l].data();
    std::memcpy(wd.data(), p, wd.size() * sizeof(double));
    p += wd.size();
    auto& b = learner.biases[l];
    std::memcpy(b.data(), p, b.size() * sizeof(double));
    p += b.size();
    if (learner.arch.use_batch_norm) {
      auto& s = learner.bn[l];
      std::memcpy(s.gamma.data(), p, s.gamma.size() * sizeof(double));
      p += s.gamma.size();
      std::memcpy(s.beta.data(), p, s.beta.size() * sizeof(double));
      p += s.beta.size();
    }
  }
  std::memcpy(learner.out_weight.data(), p, learner.out_weight.size() * sizeof(double));
  p += learner.out_weight.size();
  learner.out_bias = *p;
  learner.version += 1;
  return offset + need;
}

void flatten_grads(const ParameterGradients& grads, std::vector<double>& out) {
  const bool has_bn = !grads.bn_gamma.empty();
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto& wd = grads.weights[l].data();
    out.insert(out.end(), wd.begin(), wd.end());
    out.insert(out.end(), grads.biases[l].begin(), grads.biases[l].end());
    if (has_bn) {
      out.insert(out.end(), grads.bn_gamma[l].begin(), grads.bn_gamma[l].end());
      out.insert(out.end(), grads.bn_beta[l].begin(), grads.bn_beta[l].end());
    }
  }
  out.insert(out.end(), grads.out_weight.begin(), grads.out_weight.end());
  out.push_back(grads.out_bias);
}

LsqFitResult fit_weighted_lsq(WeakLearner& learner, const Matrix& inputs,
                              std::span<const double> targets, std::span<const double> weights,
                              std::size_t epochs, AdamState adam, std::size_t batch_size,
                              RngState& rng) {
  const std::size_t n = inputs.rows();
  if (targets.size() != n || weights.size() != n) {
    throw ShapeError("fit_weighted_lsq: input/target/weight lengths disagree");
  }
  bool any_weight = false;
  for (double w : weights) {
    if (w < 0.0) throw DataError("fit_weighted_lsq: negative sample weight");
    if (w > 0.0) any_weight = true;
  }
  if (!any_weight) return {FitStatus::AllZeroWeights, 0.0};
  if (batch_size == 0) throw ConfigError("fit_weighted_lsq: batch_size must be > 0");
  if (n == 1 && learner.arch.use_batch_norm) {
    throw DataError("fit_weighted_lsq: single sample cannot train a batch-norm learner");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> flat_params, flat_grads;
  double last_epoch_loss = 0.0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t start = 0;
    while (start < n) {
      std::size_t len = std::min(batch_size, n - start);
      // A trailing 1-row batch cannot be normalized; fold it into the
      // previous batch instead.
      if (learner.arch.use_batch_norm && n - (start + len) == 1) len += 1;
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + len);
      Matrix xb = inputs.take_rows(idx);

      ForwardResult fwd = forward(learner, xb, Mode::Train);
      std::vector<double> upstream(len);
      const double inv_b = 1.0 / static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) {
        const double r = fwd.scores[i] - targets[idx[i]];
        const double w = weights[idx[i]];
        upstream[i] = 2.0 * w * r * inv_b;
        loss_sum += w * r * r;
      }

      ParameterGradients grads = backward(learner, fwd.cache, upstream);
      flat_params.clear();
      flat_grads.clear();
      flatten_params(learner, flat_params);
      flatten_grads(grads, flat_grads);
      adam_step(adam, flat_params, flat_grads);
      unflatten_params(learner, flat_params);
      start += len;
    }
    last_epoch_loss = loss_sum / static_cast<double>(n);
  }
  return {FitStatus::Ok, last_epoch_loss};
}

}  // namespace gbnet
