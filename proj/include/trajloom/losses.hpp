#pragma once

#include <span>
#include <vector>

#include "trajloom/autodiff.hpp"
#include "trajloom/trajfield.hpp"

namespace trajloom {

// Extents of a T x H x W segment; field rows are (t * H + h) * W + w.
struct SegmentLayout {
  int frames = 0;
  int height = 0;
  int width = 0;

  Index size() const { return Index{frames} * height * width; }
  Index index(int t, int h, int w) const { return (Index{t} * height + h) * width + w; }
};

// Multi-hop neighbour set for the spatial consistency term.
struct NeighborSpec {
  std::vector<int> hops{1, 2, 4};
  std::vector<double> weights{1.0, 0.5, 0.25};

  void validate() const;
};

struct LossWeights {
  double huber_delta = 1.0;
  double lambda_temporal = 0.1;
  double lambda_spatial = 0.2;
  double beta_kl = 5e-5;
  NeighborSpec neighbors;
};

// Per-token weights w over latent tokens (k, n), row k * tokens + n.
struct TokenWeights {
  int steps = 0;
  int tokens = 0;
  Vec weights;

  static TokenWeights uniform(int steps, int tokens);
};

// Latent token grid over a dense field: spatial patch (pixels) and
// temporal ratio (frames per latent step).
struct TokenGrid {
  int patch = 8;
  int ratio = 4;
};

// Huber penalty per coordinate, summed over the two channels, averaged over
// visible (t, p).
ad::Var recon_loss(const ad::Var& pred, const ad::Var& target, const Mask& mask, double huber_delta = 1.0);

// Mean L1 mismatch of frame-to-frame displacements over pairs visible in
// both frames.
ad::Var temporal_loss(const ad::Var& pred, const ad::Var& target, const Mask& mask, const SegmentLayout& layout);

// alpha-weighted mean over hops of the masked L1 mismatch of forward
// neighbour differences (+x and +y pooled per hop). Hops without any valid
// pair drop out of both numerator and normalisation.
ad::Var spatial_loss(const ad::Var& pred, const ad::Var& target, const Mask& mask, const SegmentLayout& layout,
                     const NeighborSpec& spec = {});

ad::Var st_regularizer(const ad::Var& pred, const ad::Var& target, const Mask& mask, const SegmentLayout& layout,
                       const NeighborSpec& spec, double lambda_temporal, double lambda_spatial);

// Mean per element of KL(N(mu, e^logvar) || N(0, 1)).
ad::Var kl_loss(const ad::Var& mu, const ad::Var& logvar);

// Mean-pooled visibility per token, floored, normalised to sum 1.
TokenWeights token_weights(const GridSeries<double>& future_mask, const TokenGrid& grid, double floor = 0.01);

// (1/C) sum_k,n w(k,n) ||f(k,n)||^2
ad::Var weighted_sq_norm(const ad::Var& f, const TokenWeights& weights);

ad::Var fm_loss(const ad::Var& v_pred, const ad::Var& u_target, const TokenWeights& weights);

struct KStepTargets {
  Mat toward_target;  // (z1 - z_i) / max(1 - t_i, clamp)
  Mat toward_source;  // (z_i - z0) / max(t_i, clamp)
};

KStepTargets kstep_targets(const Mat& state, const Mat& z0, const Mat& z1, double t, double denom_clamp = 1e-3);

ad::Var kstep_loss(std::span<const ad::Var> velocities, std::span<const KStepTargets> targets,
                   const TokenWeights& weights, double w1 = 1.0, double w0 = 0.5);

// Squared drift of implied endpoints between consecutive rollout steps,
// previous step detached. Unmasked (uniform weights) unless `masked`.
ad::Var endpoint_consistency(std::span<const ad::Var> states, std::span<const ad::Var> velocities,
                             std::span<const double> times, const TokenWeights& weights, bool masked = false);

// Mean binary cross-entropy on logits, softplus form.
ad::Var bce_logits(const ad::Var& logits, const Mat& targets);

}  // namespace trajloom
