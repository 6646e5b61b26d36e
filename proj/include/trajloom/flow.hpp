#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trajloom/autodiff.hpp"
#include "trajloom/rng.hpp"

namespace trajloom {

// Flow-time mixture: with probability `uniform_prob`, t ~ U(0, uniform_max);
// otherwise t = sigmoid(N(0, 1)). Result clamped to [clamp, 1 - clamp].
struct TimeSamplerOptions {
  double uniform_prob = 0.2;
  double uniform_max = 0.1;
  double clamp = 1e-5;
};

double sample_time(Rng& rng, const TimeSamplerOptions& options = {});

enum class GridSpacing { uniform, logit };

// K + 1 strictly increasing times t_0 < ... < t_K inside [eps, 1 - eps].
struct TimeGrid {
  std::vector<double> times;
  GridSpacing spacing = GridSpacing::logit;

  static TimeGrid make(int steps, GridSpacing spacing = GridSpacing::logit, double eps = 1e-5);
  int steps() const { return static_cast<int>(times.size()) - 1; }
  void validate(double eps = 1e-5) const;
};

struct Interpolant {
  Mat z_t;
  Mat u_t;
};

// z_t = (1 - t) z0 + t z1 + sigma * eps,  u_t = z1 - z0.
Interpolant interpolate(const Mat& z0, const Mat& z1, double t, double sigma, Rng& rng);

enum class AnchorMode { first_slice, all_slices };

// Source state for `steps` future latent slices of `boundary.rows()` tokens.
// first_slice: unit Gaussian everywhere, slice 0 = boundary + sigma0 * eta.
// all_slices: every slice = boundary + sigma0 * eta.
Mat boundary_init(const Mat& boundary, int steps, double sigma0, Rng& rng, AnchorMode mode = AnchorMode::first_slice);

// Per-channel affine normalisation of latents (columns are channels).
struct LatentStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  static LatentStats fit(std::span<const Mat> corpus);
  static LatentStats identity(Index channels);
  Mat normalize(const Mat& z) const;
  Mat denormalize(const Mat& z) const;
  void validate() const;
};

using VelocityFn = std::function<Mat(const Mat& z, double t)>;

// Forward Euler on a uniform grid over [0, 1].
Mat euler_sample(const VelocityFn& v, const Mat& z0, int steps);

struct Dopri5Options {
  double rtol = 1e-6;
  double atol = 1e-9;
  int max_steps = 100000;
};

struct Dopri5Result {
  Mat state;
  int accepted = 0;
  int rejected = 0;
  int evaluations = 0;
};

// Adaptive Dormand-Prince 5(4) from t = 0 to t = 1.
Dopri5Result dopri5_sample(const VelocityFn& v, const Mat& z0, const Dopri5Options& options = {});
// Same tableau, `steps` equal fixed steps (no error control).
Mat dopri5_fixed(const VelocityFn& v, const Mat& z0, int steps);

using TapeVelocityFn = std::function<ad::Var(ad::Tape&, const ad::Var& z, double t)>;

struct Rollout {
  std::vector<ad::Var> states;      // K + 1 visited states, detached path
  std::vector<ad::Var> velocities;  // K velocities, differentiable
};

// z_{i+1} = z_i + (t_{i+1} - t_i) * sg[v(z_i, t_i)].
Rollout kstep_rollout(ad::Tape& tape, const TapeVelocityFn& v, const Mat& z0, const TimeGrid& grid);

}  // namespace trajloom
