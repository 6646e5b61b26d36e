#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trajloom/autodiff.hpp"

namespace trajloom {

// A scalar-valued function built from tape primitives. It receives the
// inputs already registered as differentiable leaves.
using ScalarFunction = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct Gradient {
  double value = 0.0;
  std::vector<Mat> gradients;
};

Gradient grad(const ScalarFunction& f, std::span<const Mat> inputs);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_coordinate = 0;
};

// max over coordinates of |analytic - central| / max(1, |central|).
GradCheckReport grad_check_report(const ScalarFunction& f, std::span<const Mat> inputs, double step = 1e-5);

inline double grad_check(const ScalarFunction& f, std::span<const Mat> inputs, double step = 1e-5) {
  return grad_check_report(f, inputs, step).max_relative_error;
}

}  // namespace trajloom
