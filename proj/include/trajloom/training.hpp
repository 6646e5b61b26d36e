#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trajloom/flow.hpp"
#include "trajloom/losses.hpp"
#include "trajloom/models.hpp"
#include "trajloom/motionlab.hpp"
#include "trajloom/optim.hpp"

namespace trajloom {

// Pixel tracks -> dense grid-anchor offsets.
OffsetField<double> offsets_from_tracks(const SparseTracks<double>& tracks);
// Dense offsets -> per-cell pixel tracks on the given stride.
SparseTracks<double> tracks_from_offsets(const OffsetField<double>& offsets, int stride);

struct FlowSample {
  OffsetField<double> history;
  OffsetField<double> future;
};

// Synthetic corpora of random single-primitive motions.
struct CorpusSpec {
  FrameGeometry geometry{32, 32, 4};
  int segment = 8;
  double jitter = 0.0;  // alternating per-axis amplitude in px
  std::vector<MotionKind> kinds;
};

// Each segment starts at a random frame in [0, segment] of its motion.
std::vector<OffsetField<double>> motion_segments(const CorpusSpec& spec, int count, Rng& rng);
// History and future windows of `segment` frames each from one motion.
std::vector<FlowSample> motion_windows(const CorpusSpec& spec, int count, Rng& rng);

// ---- VAE -------------------------------------------------------------------

struct VaeTrainConfig {
  int steps = 500;
  int batch = 8;
  AdamWOptions optim{};  // lr 2e-5
  LossWeights loss{};
  std::uint64_t seed = 0;
};

struct VaeLoss {
  double total = 0.0;
  double recon = 0.0;
  double temporal = 0.0;
  double spatial = 0.0;
  double kl = 0.0;
};

// Returns the per-step training loss (before each update).
std::vector<VaeLoss> train_vae(TrajectoryVae& vae, std::span<const OffsetField<double>> data, const VaeTrainConfig& config);

// Deterministic loss using posterior means, averaged over the set.
VaeLoss eval_vae(const TrajectoryVae& vae, std::span<const OffsetField<double>> data, const LossWeights& weights = {});

// Mean pixel endpoint error of the posterior-mean reconstruction against the
// input, on the cell grid of the given stride, visible points only.
double vae_vepe(const TrajectoryVae& vae, std::span<const OffsetField<double>> data, int stride);

// ---- flow ------------------------------------------------------------------

// Channel-normalized posterior means plus conditioning.
struct EncodedSample {
  LatentTensor history;
  LatentTensor future;
  Mat history_visibility;
  TokenWeights weights;

  FlowCondition condition() const { return {history, history_visibility}; }
};

struct FlowData {
  std::vector<EncodedSample> samples;
  LatentStats stats;
};

// Fits stats on the encoded corpus unless `stats` is given.
FlowData encode_flow_dataset(const TrajectoryVae& vae, std::span<const FlowSample> samples,
                             const LatentStats* stats = nullptr, double invisible_weight = 0.01);

struct FlowTrainConfig {
  int steps = 1000;
  int batch = 8;
  AdamWOptions optim = AdamWOptions::with_lr(6e-5);
  double tube_sigma = 0.05;
  double anchor_sigma = 0.1;
  AnchorMode anchor = AnchorMode::first_slice;
  TimeSamplerOptions time{};
  std::uint64_t seed = 0;
};

std::vector<double> train_flow(VelocityNet& net, const FlowData& data, const FlowTrainConfig& config);

// fm_loss averaged over every sample and `draws` seeded (z0, t, noise) draws.
double eval_fm_loss(const VelocityNet& net, const FlowData& data, const FlowTrainConfig& config, std::uint64_t seed,
                    int draws = 4);

struct FinetuneConfig {
  FlowTrainConfig flow{.optim = AdamWOptions::with_lr(1e-5)};
  double lambda_kstep = 0.1;
  double gamma = 0.1;
  double w1 = 1.0;
  double w0 = 0.5;
  int rollout_steps = 8;
  int sub_batch = 8;
  double denom_clamp = 1e-3;
  double grid_eps = 1e-5;
  GridSpacing spacing = GridSpacing::logit;
  bool masked_consistency = false;
};

// L_fm + lambda (L_kstep + gamma L_cons) on the first sub_batch items of each
// batch. lambda = 0 is step-for-step identical to train_flow.
std::vector<double> finetune_onpolicy(VelocityNet& net, const FlowData& data, const FinetuneConfig& config);

// Mean squared latent error of Euler endpoints against z1, with z0 for
// sample i drawn from seed + i.
double endpoint_error(const VelocityNet& net, const FlowData& data, int euler_steps, std::uint64_t seed,
                      double anchor_sigma = 0.1, AnchorMode anchor = AnchorMode::first_slice);

// ---- visibility ------------------------------------------------------------

struct VisibilitySample {
  LatentTensor latent;
  Mat target;  // steps x tokens, 0/1
};

struct VisibilityTrainConfig {
  int steps = 300;
  int batch = 16;
  AdamWOptions optim = AdamWOptions::with_lr(1e-3);
  std::uint64_t seed = 0;
};

std::vector<double> train_visibility(VisibilityHead& head, std::span<const VisibilitySample> data,
                                     const VisibilityTrainConfig& config);
double visibility_accuracy(const VisibilityHead& head, std::span<const VisibilitySample> data);

// ---- sampling --------------------------------------------------------------

struct SamplerSpec {
  enum class Kind { euler, dopri5, dopri5_fixed };
  Kind kind = Kind::euler;
  int steps = 10;
  double rtol = 1e-6;
  double atol = 1e-9;
};

struct Pipeline {
  const TrajectoryVae* vae = nullptr;
  const VelocityNet* velocity = nullptr;
  const VisibilityHead* visibility = nullptr;  // optional
  LatentStats stats;
  double anchor_sigma = 0.1;
  AnchorMode anchor = AnchorMode::first_slice;
};

struct FutureSample {
  OffsetField<double> future;  // mask up-broadcast from token predictions
  Mat token_visibility;        // steps x tokens
  LatentTensor latent;         // denormalized
};

FutureSample sample_future(const OffsetField<double>& history, const Pipeline& pipeline, const SamplerSpec& sampler,
                           std::uint64_t seed);

}  // namespace trajloom
