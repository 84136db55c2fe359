#pragma once

// Scalar activations mapping raw optimizable values to physical ranges.

#include <cmath>

namespace xrf {

/// Smooth opacity constraint onto [0, 1]: 0.5 * (tanh(4x - 2) + 1).
inline double tanh01(double x) { return 0.5 * (std::tanh(4.0 * x - 2.0) + 1.0); }

inline double tanh01_derivative(double x) {
  const double c = std::cosh(4.0 * x - 2.0);
  return 2.0 / (c * c);
}

/// Inverse of tanh01 for y in (0, 1).
inline double tanh01_inverse(double y) { return (std::atanh(2.0 * y - 1.0) + 2.0) / 4.0; }

/// Limited linear unit. Same image as ReLU; x == 0 counts as the border.
inline double lilu_forward(double x) { return x > 0.0 ? x : 0.0; }

/// Pseudo-gradient of the limited linear unit. The upstream gradient is passed
/// through unless the input sits on or below the border and a descent step
/// (positive upstream gradient) would push it further down.
inline double lilu_backward(double x, double upstream_grad) {
  const bool border = x <= 0.0;
  const bool shrinking = upstream_grad > 0.0;
  return (border && shrinking) ? 0.0 : upstream_grad;
}

/// log(1 + exp(x)) without overflow or premature underflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// d softplus / dx, the logistic function.
inline double softplus_derivative(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace xrf
