#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajloom/gradcheck.hpp"

namespace trajloom {

// One scalar function plus the inputs it is checked at.
struct GradCase {
  std::string name;
  ScalarFunction f;
  std::vector<Mat> inputs;
};

// Every loss and every network forward at small random shapes.
std::vector<GradCase> grad_cases(std::uint64_t seed);

struct GradResult {
  std::string name;
  double max_relative_error = 0.0;
};

std::vector<GradResult> run_grad_suite(std::uint64_t seed, double step = 1e-5);

}  // namespace trajloom
