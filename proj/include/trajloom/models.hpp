#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trajloom/autodiff.hpp"
#include "trajloom/losses.hpp"
#include "trajloom/optim.hpp"
#include "trajloom/rng.hpp"
#include "trajloom/trajfield.hpp"

namespace trajloom {

// Latent tokens z(k, n) in R^C, stored as (steps * tokens) x C with row
// k * tokens + n.
struct LatentTensor {
  int steps = 0;
  int tokens = 0;
  Mat values;

  LatentTensor() = default;
  LatentTensor(int k, int n, Mat v);
  static LatentTensor zeros(int steps, int tokens, int channels);

  int channels() const { return static_cast<int>(values.cols()); }
  Index rows() const { return values.rows(); }
  // tokens x C block for one latent time step; negative k counts from the end.
  Mat step(int k) const;
  bool operator==(const LatentTensor&) const = default;
};

struct VaeConfig {
  int height = 32;
  int width = 32;
  int patch = 8;
  int frames = 8;  // segment length
  int ratio = 4;   // temporal compression
  int channels = 8;
  int hidden = 64;
  int blocks = 2;
  double logvar_bias_init = -6.0;

  void validate() const;
  int tokens() const { return (height / patch) * (width / patch); }
  int latent_steps() const { return (frames + ratio - 1) / ratio; }
  int padded_frames() const { return latent_steps() * ratio; }
  TokenGrid token_grid() const { return {patch, ratio}; }
  SegmentLayout layout() const { return {frames, height, width}; }
};

// Token-mixing residual block: h += M h, then h += W2 gelu(W1 h + b1) + b2.
struct MixerBlock {
  std::size_t mix = 0, fc1_w = 0, fc1_b = 0, fc2_w = 0, fc2_b = 0;

  static MixerBlock create(ParamSet& params, const std::string& prefix, Index rows, Index hidden, Rng& rng);
  static MixerBlock find(const ParamSet& params, const std::string& prefix);
  ad::Var operator()(std::span<const ad::Var> p, const ad::Var& h) const;
};

// Patch-token VAE over offset segments with strided temporal compression.
class TrajectoryVae {
 public:
  struct Posterior {
    ad::Var mu;
    ad::Var logvar;
  };

  TrajectoryVae(const VaeConfig& config, std::uint64_t seed);
  TrajectoryVae(const VaeConfig& config, ParamSet params);

  const VaeConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // segment: (frames * H * W) x 2 offsets. Returns mu/logvar as
  // (latent_steps * tokens) x C.
  Posterior encode(std::span<const ad::Var> p, const ad::Var& segment) const;
  ad::Var decode(std::span<const ad::Var> p, const ad::Var& z) const;

  Posterior encode(const OffsetField<double>& segment, ad::Tape& tape) const;
  LatentTensor encode_mean(const OffsetField<double>& segment) const;
  // Decoded offsets; mask is all-visible.
  OffsetField<double> decode(const LatentTensor& z) const;

  // (frames*H*W) -> token-row gather order used by the tokenizer.
  const std::vector<Index>& patch_index() const { return patch_index_; }

 private:
  void build_indices();
  void check_segment(Index rows, Index cols) const;

  VaeConfig config_;
  ParamSet params_;
  std::vector<Index> patch_index_;     // segment rows -> (tau, n, ph, pw) order
  std::vector<Index> unpatch_index_;   // inverse, drops padded frames
  std::vector<Index> compress_index_;  // frame-major rows -> (k, n, tau) order
  std::vector<Index> expand_index_;    // inverse
  std::vector<MixerBlock> enc_blocks_;
  std::vector<MixerBlock> dec_blocks_;
};

// z = mu + exp(logvar / 2) * eps
Mat reparameterize(const Mat& mu, const Mat& logvar, Rng& rng);
ad::Var reparameterize(const ad::Var& mu, const ad::Var& logvar, Rng& rng);

// omega_k: linear ramp from 0 (first future step) to 1 (last), inclusive.
std::vector<double> fusion_ramp(int steps);

// tokens(k, n) += alpha * g_k * (b(n) + omega_k d(n)), with g = sigmoid(gate_logits)
// and d = boundary - previous. tokens: (steps * N) x D; boundary, previous:
// N x D embeddings of the last and second-to-last history slices.
ad::Var fuse_history(const ad::Var& tokens, const ad::Var& boundary, const ad::Var& previous, const ad::Var& alpha,
                     const ad::Var& gate_logits, int steps);

// Conditioning bundle at desk scale: history latents and pooled history
// visibility per token.
struct FlowCondition {
  LatentTensor history;
  Mat history_visibility;  // history.steps x tokens, values in [0, 1]
};

struct VelocityConfig {
  int steps = 2;
  int tokens = 16;
  int channels = 8;
  int history_steps = 2;
  int hidden = 64;
  int blocks = 2;
  double alpha_init = 0.1;

  void validate() const;
  static VelocityConfig for_vae(const VaeConfig& vae, int future_frames, int history_frames);
};

// Sinusoidal time features plus t itself.
Mat time_features(double t, Index rows);

class VelocityNet {
 public:
  VelocityNet(const VelocityConfig& config, std::uint64_t seed);
  VelocityNet(const VelocityConfig& config, ParamSet params);

  const VelocityConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ad::Var forward(std::span<const ad::Var> p, const ad::Var& z_t, double t, const FlowCondition& cond) const;
  Mat evaluate(const Mat& z_t, double t, const FlowCondition& cond) const;

 private:
  VelocityConfig config_;
  ParamSet params_;
  std::vector<MixerBlock> blocks_;
};

struct VisibilityConfig {
  int channels = 8;
  int hidden = 16;
  int layers = 2;
  double threshold = 0.5;
};

// Per-token temporal 1-d convolution stack over latent time.
class VisibilityHead {
 public:
  VisibilityHead(const VisibilityConfig& config, std::uint64_t seed);
  VisibilityHead(const VisibilityConfig& config, ParamSet params);

  const VisibilityConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // logits: (steps * tokens) x 1
  ad::Var logits(std::span<const ad::Var> p, const ad::Var& z, int steps, int tokens) const;

  struct Prediction {
    Mat logits;  // steps x tokens
    Mat mask;    // 0/1
  };
  Prediction predict(const LatentTensor& z) const;
  Prediction predict(const LatentTensor& z, double threshold) const;

 private:
  VisibilityConfig config_;
  ParamSet params_;
};

// Logical-OR pooling of a dense mask to the latent token grid: steps x tokens.
Mat pool_visibility(const GridSeries<double>& mask, const TokenGrid& grid);
// Mean pooling, same layout.
Mat pool_visibility_mean(const GridSeries<double>& mask, const TokenGrid& grid);

}  // namespace trajloom
