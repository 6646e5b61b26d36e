#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajloom/autodiff.hpp"
#include "trajloom/rng.hpp"

namespace trajloom {

// Ordered, named parameter blocks. Order is stable and defines the
// gradient/moment layout used by the optimizer and checkpoint files.
class ParamSet {
 public:
  std::size_t add(std::string name, Mat value);

  std::size_t size() const { return values_.size(); }
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::string& name(std::size_t i) const { return names_[i]; }
  Mat& operator[](std::size_t i) { return values_[i]; }
  const Mat& operator[](std::size_t i) const { return values_[i]; }
  Mat& at(const std::string& name) { return values_[index(name)]; }
  const Mat& at(const std::string& name) const { return values_[index(name)]; }

  // Registers every block as a differentiable leaf on the tape.
  std::vector<ad::Var> bind(ad::Tape& tape) const;
  // Registers every block as a constant (frozen network).
  std::vector<ad::Var> bind_frozen(ad::Tape& tape) const;

  Index scalar_count() const;
  bool operator==(const ParamSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
};

// Glorot-uniform weight and zero bias blocks named prefix.w / prefix.b.
void add_linear(ParamSet& params, const std::string& prefix, Index in, Index out, Rng& rng, double gain = 1.0);

struct AdamWOptions {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double eps = 1e-8;
  std::optional<double> clip_norm;  // global-norm clipping when set

  static AdamWOptions with_lr(double lr) {
    AdamWOptions o;
    o.lr = lr;
    return o;
  }
};

struct OptimState {
  AdamWOptions options;
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
  long step = 0;

  OptimState() = default;
  OptimState(const ParamSet& params, AdamWOptions opts);
};

// Decoupled-weight-decay Adam update. Throws NumericalError before touching
// any parameter when a gradient is non-finite.
void optim_step(ParamSet& params, std::span<const Mat> grads, OptimState& state);

double global_norm(std::span<const Mat> grads);

}  // namespace trajloom
