#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

namespace gbnet::testing {

/// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double step = 1e-5) {
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Second-order central difference.
inline double second_diff(const std::function<double(double)>& f, double x,
                          double step = 3e-4) {
  return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
}

/// Relative error with a unit floor on the denominator, the usual
/// gradient-checker convention.
inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

/// Relative error with a caller-chosen floor.
inline double rel_err_floored(double analytic, double numeric, double floor) {
  const double scale = std::max({floor, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace gbnet::testing
