#include "trajloom/optim.hpp"

#include <cmath>

namespace trajloom {

std::size_t ParamSet::add(std::string name, Mat value) {
  if (contains(name)) throw Error("parameter '" + name + "' already exists");
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::size_t ParamSet::index(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw Error("unknown parameter '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::vector<ad::Var> ParamSet::bind(ad::Tape& tape) const {
  std::vector<ad::Var> out;
  out.reserve(values_.size());
  for (const Mat& v : values_) out.push_back(tape.variable(v));
  return out;
}

std::vector<ad::Var> ParamSet::bind_frozen(ad::Tape& tape) const {
  std::vector<ad::Var> out;
  out.reserve(values_.size());
  for (const Mat& v : values_) out.push_back(tape.constant(v));
  return out;
}

Index ParamSet::scalar_count() const {
  Index n = 0;
  for (const Mat& v : values_) n += v.size();
  return n;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) return false;
    if (values_[i] != other.values_[i]) return false;
  }
  return true;
}

void add_linear(ParamSet& params, const std::string& prefix, Index in, Index out, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  Mat w = (rng.draw_uniform(in, out).array() * 2.0 - 1.0).matrix() * limit;
  params.add(prefix + ".w", std::move(w));
  params.add(prefix + ".b", Mat::Zero(1, out));
}

OptimState::OptimState(const ParamSet& params, AdamWOptions opts) : options(opts) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_moment.push_back(Mat::Zero(params[i].rows(), params[i].cols()));
    second_moment.push_back(Mat::Zero(params[i].rows(), params[i].cols()));
  }
}

double global_norm(std::span<const Mat> grads) {
  double sq = 0.0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

void optim_step(ParamSet& params, std::span<const Mat> grads, OptimState& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size())
    throw ShapeError("optim_step: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                     " gradients, " + std::to_string(state.first_moment.size()) + " moment slots");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw ShapeError("optim_step: gradient for '" + params.name(i) + "' is " +
                       shape_str(grads[i].rows(), grads[i].cols()) + ", parameter is " +
                       shape_str(params[i].rows(), params[i].cols()));
    if (!grads[i].allFinite()) throw NumericalError("optim_step: non-finite gradient for '" + params.name(i) + "'");
  }

  const AdamWOptions& o = state.options;
  double clip_scale = 1.0;
  if (o.clip_norm) {
    const double norm = global_norm(grads);
    if (norm > *o.clip_norm) clip_scale = *o.clip_norm / norm;
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat g = grads[i] * clip_scale;
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = (o.beta2 * v.array() + (1.0 - o.beta2) * g.array().square()).matrix();
    params[i] *= (1.0 - o.lr * o.weight_decay);
    params[i].array() -= o.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + o.eps);
  }
}

}  // namespace trajloom
