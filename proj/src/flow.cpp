#include "trajloom/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trajloom {

double sample_time(Rng& rng, const TimeSamplerOptions& o) {
  double t;
  if (rng.uniform() < o.uniform_prob) {
    t = rng.uniform() * o.uniform_max;
  } else {
    t = 1.0 / (1.0 + std::exp(-rng.normal()));
  }
  return std::clamp(t, o.clamp, 1.0 - o.clamp);
}

TimeGrid TimeGrid::make(int steps, GridSpacing spacing, double eps) {
  if (steps < 1) throw Error("time grid: need at least one step");
  if (!(eps > 0 && eps < 0.5)) throw Error("time grid: eps must lie in (0, 0.5)");
  TimeGrid g;
  g.spacing = spacing;
  g.times.resize(static_cast<std::size_t>(steps) + 1);
  const double lo_logit = std::log(eps / (1.0 - eps));
  for (int i = 0; i <= steps; ++i) {
    const double u = static_cast<double>(i) / steps;
    double t;
    if (spacing == GridSpacing::uniform) {
      t = eps + (1.0 - 2.0 * eps) * u;
    } else {
      const double l = lo_logit + (-2.0 * lo_logit) * u;
      t = 1.0 / (1.0 + std::exp(-l));
    }
    g.times[i] = std::clamp(t, eps, 1.0 - eps);
  }
  g.validate(eps);
  return g;
}

void TimeGrid::validate(double eps) const {
  if (times.size() < 2) throw Error("time grid: need at least two times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < eps * (1 - 1e-12) || times[i] > 1.0 - eps * (1 - 1e-12))
      throw Error("time grid: time " + std::to_string(times[i]) + " outside bounds");
    if (i > 0 && !(times[i] > times[i - 1])) throw Error("time grid: times must be strictly increasing");
  }
}

Interpolant interpolate(const Mat& z0, const Mat& z1, double t, double sigma, Rng& rng) {
  if (z0.rows() != z1.rows() || z0.cols() != z1.cols())
    throw ShapeError("interpolate: z0 " + shape_str(z0.rows(), z0.cols()) + " vs z1 " + shape_str(z1.rows(), z1.cols()));
  Interpolant out;
  out.z_t = (1.0 - t) * z0 + t * z1;
  if (sigma != 0.0) out.z_t += sigma * rng.draw_normal(z0.rows(), z0.cols());
  out.u_t = z1 - z0;
  return out;
}

Mat boundary_init(const Mat& boundary, int steps, double sigma0, Rng& rng, AnchorMode mode) {
  if (steps < 1) throw ShapeError("boundary_init: need at least one future step");
  const Index n = boundary.rows(), c = boundary.cols();
  Mat z0(n * steps, c);
  for (int k = 0; k < steps; ++k) {
    if (k == 0 || mode == AnchorMode::all_slices)
      z0.middleRows(k * n, n) = boundary + sigma0 * rng.draw_normal(n, c);
    else
      z0.middleRows(k * n, n) = rng.draw_normal(n, c);
  }
  return z0;
}

LatentStats LatentStats::fit(std::span<const Mat> corpus) {
  if (corpus.empty()) throw Error("latent stats: empty corpus");
  const Index c = corpus[0].cols();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(c), sq = Eigen::RowVectorXd::Zero(c);
  double count = 0;
  for (const Mat& z : corpus) {
    if (z.cols() != c) throw ShapeError("latent stats: channel count mismatch in corpus");
    sum += z.colwise().sum();
    count += static_cast<double>(z.rows());
  }
  LatentStats s;
  s.mean = sum / count;
  for (const Mat& z : corpus) sq += (z.rowwise() - s.mean).array().square().matrix().colwise().sum();
  s.std = (sq / count).array().sqrt().matrix();
  s.validate();
  return s;
}

LatentStats LatentStats::identity(Index channels) {
  return {Eigen::RowVectorXd::Zero(channels), Eigen::RowVectorXd::Ones(channels)};
}

void LatentStats::validate() const {
  if (mean.size() != std.size()) throw ShapeError("latent stats: mean/std length mismatch");
  for (Index i = 0; i < std.size(); ++i)
    if (!(std[i] > 0)) throw NumericalError("latent stats: channel " + std::to_string(i) + " has zero std");
}

Mat LatentStats::normalize(const Mat& z) const {
  validate();
  if (z.cols() != mean.size())
    throw ShapeError("normalize_latents: " + std::to_string(z.cols()) + " channels vs " +
                     std::to_string(mean.size()) + " in stats");
  return ((z.rowwise() - mean).array().rowwise() / std.array()).matrix();
}

Mat LatentStats::denormalize(const Mat& z) const {
  validate();
  if (z.cols() != mean.size())
    throw ShapeError("denormalize_latents: " + std::to_string(z.cols()) + " channels vs " +
                     std::to_string(mean.size()) + " in stats");
  return ((z.array().rowwise() * std.array()).matrix().rowwise() + mean);
}

Mat euler_sample(const VelocityFn& v, const Mat& z0, int steps) {
  if (steps < 1) throw Error("euler_sample: steps must be >= 1");
  Mat z = z0;
  const double dt = 1.0 / steps;
  for (int i = 0; i < steps; ++i) {
    z += dt * v(z, i * dt);
    if (!z.allFinite()) throw NumericalError("euler_sample: non-finite state at step " + std::to_string(i));
  }
  return z;
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                 e5 = b5 - (-92097.0 / 339200), e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

struct StageResult {
  Mat next;
  Mat error;
  Mat k7;
};

StageResult dopri_stage(const VelocityFn& v, const Mat& y, const Mat& k1, double t, double h) {
  const Mat k2 = v(y + h * (a21 * k1), t + c2 * h);
  const Mat k3 = v(y + h * (a31 * k1 + a32 * k2), t + c3 * h);
  const Mat k4 = v(y + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
  const Mat k5 = v(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
  const Mat k6 = v(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
  StageResult r;
  r.next = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  r.k7 = v(r.next, t + h);
  r.error = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * r.k7);
  return r;
}

double scaled_rms(const Mat& err, const Mat& y0, const Mat& y1, double rtol, double atol) {
  const Eigen::ArrayXXd scale = atol + rtol * y0.array().abs().max(y1.array().abs());
  return std::sqrt((err.array() / scale).square().mean());
}

}  // namespace

Dopri5Result dopri5_sample(const VelocityFn& v, const Mat& z0, const Dopri5Options& o) {
  if (!(o.rtol > 0) || !(o.atol > 0)) throw Error("dopri5_sample: tolerances must be positive");
  Dopri5Result res;
  Mat y = z0;
  double t = 0.0;
  Mat k1 = v(y, t);
  res.evaluations = 1;

  // Initial step (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    const Eigen::ArrayXXd sc = o.atol + o.rtol * y.array().abs();
    const double d0 = std::sqrt((y.array() / sc).square().mean());
    const double d1 = std::sqrt((k1.array() / sc).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, 1.0);
    const Mat k_probe = v(y + h0 * k1, h0);
    ++res.evaluations;
    const double d2 = std::sqrt(((k_probe - k1).array() / sc).square().mean()) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min({100 * h0, h1, 1.0});
  }

  int iterations = 0;
  while (t < 1.0) {
    if (++iterations > o.max_steps) throw NumericalError("dopri5_sample: exceeded max_steps");
    if (h < 16 * std::numeric_limits<double>::epsilon() * std::max(1.0, t))
      throw NumericalError("dopri5_sample: step size underflow at t = " + std::to_string(t));
    const bool last = t + h >= 1.0;
    if (last) h = 1.0 - t;
    StageResult s = dopri_stage(v, y, k1, t, h);
    res.evaluations += 6;
    if (!s.next.allFinite()) {
      h *= 0.2;
      ++res.rejected;
      continue;
    }
    const double err = scaled_rms(s.error, y, s.next, o.rtol, o.atol);
    if (err <= 1.0) {
      t = last ? 1.0 : t + h;
      y = std::move(s.next);
      k1 = std::move(s.k7);
      ++res.accepted;
    } else {
      ++res.rejected;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= err <= 1.0 ? factor : std::min(factor, 1.0);
  }
  res.state = std::move(y);
  return res;
}

Mat dopri5_fixed(const VelocityFn& v, const Mat& z0, int steps) {
  if (steps < 1) throw Error("dopri5_fixed: steps must be >= 1");
  Mat y = z0;
  const double h = 1.0 / steps;
  Mat k1 = v(y, 0.0);
  for (int i = 0; i < steps; ++i) {
    StageResult s = dopri_stage(v, y, k1, i * h, h);
    y = std::move(s.next);
    k1 = std::move(s.k7);
    if (!y.allFinite()) throw NumericalError("dopri5_fixed: non-finite state at step " + std::to_string(i));
  }
  return y;
}

Rollout kstep_rollout(ad::Tape& tape, const TapeVelocityFn& v, const Mat& z0, const TimeGrid& grid) {
  Rollout r;
  r.states.push_back(tape.constant(z0));
  for (int i = 0; i < grid.steps(); ++i) {
    const double t = grid.times[i];
    ad::Var vel = v(tape, r.states.back(), t);
    r.velocities.push_back(vel);
    const double dt = grid.times[i + 1] - t;
    r.states.push_back(ad::add(r.states.back(), ad::scale(ad::stop_gradient(vel), dt)));
  }
  return r;
}

}  // namespace trajloom
