#include "gbnet/adam.hpp"

#include <cmath>

#include "gbnet/error.hpp"

namespace gbnet {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: params/grads size mismatch");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter count changed under one AdamState");
  }

  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + state.l2 * params[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace gbnet
