#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gbnet {

/// Adam optimizer state over one flat parameter vector. L2 regularization
/// is coupled: l2 * param is added to the gradient before the moment
/// updates.
struct AdamState {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double l2 = 0.0;
  std::uint64_t step_count = 0;
  std::vector<double> m;  // first-moment accumulator, sized on first step
  std::vector<double> v;  // second-moment accumulator

  static AdamState with(double lr, double l2_coefficient) {
    AdamState s;
    s.learning_rate = lr;
    s.l2 = l2_coefficient;
    return s;
  }
};

/// One Adam update with bias correction, in place.
/// Throws NumericError on non-finite gradients, ShapeError if the sizes
/// disagree with each other or with previously seen state.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

}  // namespace gbnet
