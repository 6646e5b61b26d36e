#pragma once

#include <cstdint>
#include <random>

#include "trajloom/core.hpp"

namespace trajloom {

// Seeded stream; identical seeds give bit-identical draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1): top 53 bits of one engine word.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }

  Mat draw_normal(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
    return m;
  }
  Mat draw_uniform(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform();
    return m;
  }

  std::uint64_t next_u64() { return engine_(); }
  // Independent child stream for a sub-task.
  Rng fork() { return Rng(engine_()); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace trajloom
