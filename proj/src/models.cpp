#include "trajloom/models.hpp"

#include <cmath>
#include <numbers>

namespace trajloom {

using ad::Var;

namespace {

Var linear(std::span<const Var> p, const ParamSet& params, const std::string& prefix, const Var& x) {
  return ad::affine(x, p[params.index(prefix + ".w")], p[params.index(prefix + ".b")]);
}

void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

// ---- LatentTensor ----------------------------------------------------------

LatentTensor::LatentTensor(int k, int n, Mat v) : steps(k), tokens(n), values(std::move(v)) {
  if (values.rows() != Index{k} * n)
    throw ShapeError("latent tensor: " + std::to_string(k) + " steps x " + std::to_string(n) + " tokens vs " +
                     std::to_string(values.rows()) + " rows");
}

LatentTensor LatentTensor::zeros(int steps, int tokens, int channels) {
  return LatentTensor(steps, tokens, Mat::Zero(Index{steps} * tokens, channels));
}

Mat LatentTensor::step(int k) const {
  const int kk = k < 0 ? steps + k : k;
  if (kk < 0 || kk >= steps) throw ShapeError("latent tensor: step " + std::to_string(k) + " out of range");
  return values.middleRows(Index{kk} * tokens, tokens);
}

// ---- MixerBlock ------------------------------------------------------------

MixerBlock MixerBlock::create(ParamSet& params, const std::string& prefix, Index rows, Index hidden, Rng& rng) {
  params.add(prefix + ".mix", Mat::Zero(rows, rows));
  add_linear(params, prefix + ".fc1", hidden, hidden, rng);
  add_linear(params, prefix + ".fc2", hidden, hidden, rng, 0.5);
  return find(params, prefix);
}

MixerBlock MixerBlock::find(const ParamSet& params, const std::string& prefix) {
  return {params.index(prefix + ".mix"), params.index(prefix + ".fc1.w"), params.index(prefix + ".fc1.b"),
          params.index(prefix + ".fc2.w"), params.index(prefix + ".fc2.b")};
}

Var MixerBlock::operator()(std::span<const Var> p, const Var& h) const {
  Var mixed = ad::add(h, ad::matmul(p[mix], h));
  Var inner = ad::gelu(ad::affine(mixed, p[fc1_w], p[fc1_b]));
  return ad::add(mixed, ad::affine(inner, p[fc2_w], p[fc2_b]));
}

// ---- VAE -------------------------------------------------------------------

void VaeConfig::validate() const {
  require_config(height > 0 && width > 0 && frames > 0 && ratio > 0 && channels > 0 && hidden > 0 && blocks >= 0,
                 "vae: extents must be positive");
  require_config(patch > 0 && height % patch == 0 && width % patch == 0,
                 "vae: patch " + std::to_string(patch) + " must divide " + shape_str(height, width));
}

TrajectoryVae::TrajectoryVae(const VaeConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const Index pix = Index{config_.patch} * config_.patch * 2;
  const Index hid = config_.hidden;
  const Index frame_rows = Index{config_.padded_frames()} * config_.tokens();
  add_linear(params_, "enc.in", pix, hid, rng);
  for (int b = 0; b < config_.blocks; ++b)
    MixerBlock::create(params_, "enc.block" + std::to_string(b), frame_rows, hid, rng);
  add_linear(params_, "enc.compress", hid * config_.ratio, hid, rng);
  add_linear(params_, "enc.mu", hid, config_.channels, rng);
  add_linear(params_, "enc.logvar", hid, config_.channels, rng, 0.1);
  params_.at("enc.logvar.b").setConstant(config_.logvar_bias_init);
  add_linear(params_, "dec.in", config_.channels, hid, rng);
  add_linear(params_, "dec.expand", hid, hid * config_.ratio, rng);
  for (int b = 0; b < config_.blocks; ++b)
    MixerBlock::create(params_, "dec.block" + std::to_string(b), frame_rows, hid, rng);
  add_linear(params_, "dec.out", hid, pix, rng);
  build_indices();
}

TrajectoryVae::TrajectoryVae(const VaeConfig& config, ParamSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  build_indices();
}

void TrajectoryVae::build_indices() {
  const int p = config_.patch, r = config_.ratio, T = config_.frames, Tp = config_.padded_frames();
  const int tc = config_.width / p, n_tok = config_.tokens(), steps = config_.latent_steps();
  const SegmentLayout lay = config_.layout();
  patch_index_.clear();
  for (int tau = 0; tau < Tp; ++tau) {
    const int src_t = std::min(tau, T - 1);  // replicate the last frame into the padding
    for (int n = 0; n < n_tok; ++n)
      for (int ph = 0; ph < p; ++ph)
        for (int pw = 0; pw < p; ++pw)
          patch_index_.push_back(lay.index(src_t, (n / tc) * p + ph, (n % tc) * p + pw));
  }
  unpatch_index_.assign(static_cast<std::size_t>(lay.size()), 0);
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < config_.height; ++h)
      for (int w = 0; w < config_.width; ++w) {
        const Index n = (h / p) * tc + w / p;
        unpatch_index_[lay.index(t, h, w)] = ((Index{t} * n_tok + n) * p + h % p) * p + w % p;
      }
  compress_index_.clear();
  for (int k = 0; k < steps; ++k)
    for (int n = 0; n < n_tok; ++n)
      for (int o = 0; o < r; ++o) compress_index_.push_back(Index{k * r + o} * n_tok + n);
  expand_index_.clear();
  for (int tau = 0; tau < Tp; ++tau)
    for (int n = 0; n < n_tok; ++n) expand_index_.push_back((Index{tau / r} * n_tok + n) * r + tau % r);

  enc_blocks_.clear();
  dec_blocks_.clear();
  for (int b = 0; b < config_.blocks; ++b) {
    enc_blocks_.push_back(MixerBlock::find(params_, "enc.block" + std::to_string(b)));
    dec_blocks_.push_back(MixerBlock::find(params_, "dec.block" + std::to_string(b)));
  }
}

void TrajectoryVae::check_segment(Index rows, Index cols) const {
  if (rows != config_.layout().size() || cols != 2)
    throw ShapeError("vae_encode: segment " + shape_str(rows, cols) + ", expected " +
                     shape_str(config_.layout().size(), 2));
}

TrajectoryVae::Posterior TrajectoryVae::encode(std::span<const Var> p, const Var& segment) const {
  check_segment(segment.rows(), segment.cols());
  const Index pix = Index{config_.patch} * config_.patch * 2;
  const Index frame_rows = Index{config_.padded_frames()} * config_.tokens();
  const Index lat_rows = Index{config_.latent_steps()} * config_.tokens();
  Var tok = ad::reshape(ad::gather_rows(segment, patch_index_), frame_rows, pix);
  Var h = ad::gelu(linear(p, params_, "enc.in", tok));
  for (const MixerBlock& b : enc_blocks_) h = b(p, h);
  Var grouped = ad::reshape(ad::gather_rows(h, compress_index_), lat_rows, Index{config_.hidden} * config_.ratio);
  Var c = ad::gelu(linear(p, params_, "enc.compress", grouped));
  return {linear(p, params_, "enc.mu", c), linear(p, params_, "enc.logvar", c)};
}

Var TrajectoryVae::decode(std::span<const Var> p, const Var& z) const {
  const Index lat_rows = Index{config_.latent_steps()} * config_.tokens();
  if (z.rows() != lat_rows || z.cols() != config_.channels)
    throw ShapeError("vae_decode: latent " + shape_str(z.rows(), z.cols()) + ", expected " +
                     shape_str(lat_rows, config_.channels));
  const Index frame_rows = Index{config_.padded_frames()} * config_.tokens();
  Var h = ad::gelu(linear(p, params_, "dec.in", z));
  Var e = ad::reshape(linear(p, params_, "dec.expand", h), lat_rows * config_.ratio, config_.hidden);
  Var f = ad::gather_rows(e, expand_index_);
  for (const MixerBlock& b : dec_blocks_) f = b(p, f);
  Var out = linear(p, params_, "dec.out", f);
  Var pixels = ad::reshape(out, frame_rows * config_.patch * config_.patch, 2);
  return ad::gather_rows(pixels, unpatch_index_);
}

TrajectoryVae::Posterior TrajectoryVae::encode(const OffsetField<double>& segment, ad::Tape& tape) const {
  const std::vector<Var> p = params_.bind_frozen(tape);
  return encode(p, tape.constant(Mat(segment.points.coords)));
}

LatentTensor TrajectoryVae::encode_mean(const OffsetField<double>& segment) const {
  ad::Tape tape;
  Posterior post = encode(segment, tape);
  return LatentTensor(config_.latent_steps(), config_.tokens(), post.mu.value());
}

OffsetField<double> TrajectoryVae::decode(const LatentTensor& z) const {
  ad::Tape tape;
  const std::vector<Var> p = params_.bind_frozen(tape);
  Var out = decode(p, tape.constant(z.values));
  OffsetField<double> field;
  field.points = GridSeries<double>(config_.frames, config_.height, config_.width);
  field.points.coords = out.value();
  field.stride = 1;
  return field;
}

Mat reparameterize(const Mat& mu, const Mat& logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
    throw ShapeError("reparameterize: mu " + shape_str(mu.rows(), mu.cols()) + " vs logvar " +
                     shape_str(logvar.rows(), logvar.cols()));
  const Mat eps = rng.draw_normal(mu.rows(), mu.cols());
  return (mu.array() + (0.5 * logvar.array()).exp() * eps.array()).matrix();
}

Var reparameterize(const Var& mu, const Var& logvar, Rng& rng) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
    throw ShapeError("reparameterize: mu " + shape_str(mu.rows(), mu.cols()) + " vs logvar " +
                     shape_str(logvar.rows(), logvar.cols()));
  Var eps = mu.tape().constant(rng.draw_normal(mu.rows(), mu.cols()));
  return ad::add(mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), eps));
}

// ---- history fusion --------------------------------------------------------

std::vector<double> fusion_ramp(int steps) {
  std::vector<double> w(static_cast<std::size_t>(steps), 0.0);
  for (int k = 1; k < steps; ++k) w[k] = static_cast<double>(k) / (steps - 1);
  return w;
}

Var fuse_history(const Var& tokens, const Var& boundary, const Var& previous, const Var& alpha, const Var& gate_logits,
                 int steps) {
  const Index n = boundary.rows();
  if (steps <= 0 || tokens.rows() != n * steps || boundary.cols() != tokens.cols() || previous.rows() != n ||
      previous.cols() != tokens.cols())
    throw ShapeError("fuse_history: tokens " + shape_str(tokens.rows(), tokens.cols()) + ", boundary " +
                     shape_str(boundary.rows(), boundary.cols()) + ", previous " +
                     shape_str(previous.rows(), previous.cols()) + ", steps " + std::to_string(steps));
  if (gate_logits.rows() != 1 || gate_logits.cols() != steps)
    throw ShapeError("fuse_history: gates " + shape_str(gate_logits.rows(), gate_logits.cols()) + " for " +
                     std::to_string(steps) + " steps");
  const std::vector<double> omega = fusion_ramp(steps);
  Var velocity = ad::sub(boundary, previous);
  Var gates = ad::sigmoid(gate_logits);
  std::vector<Var> rows;
  for (int k = 0; k < steps; ++k) {
    Var gain = ad::scalar_mul(alpha, ad::slice(gates, 0, 1, k, 1));
    Var hint = omega[k] == 0.0 ? boundary : ad::add(boundary, ad::scale(velocity, omega[k]));
    rows.push_back(ad::scalar_mul(gain, hint));
  }
  return ad::add(tokens, ad::concat_rows(rows));
}

// ---- velocity network ------------------------------------------------------

void VelocityConfig::validate() const {
  require_config(steps > 0 && tokens > 0 && channels > 0 && hidden > 0 && blocks >= 0,
                 "velocity: extents must be positive");
  require_config(history_steps >= 2, "velocity: history fusion needs at least 2 history latent steps");
}

VelocityConfig VelocityConfig::for_vae(const VaeConfig& vae, int future_frames, int history_frames) {
  VelocityConfig c;
  c.steps = (future_frames + vae.ratio - 1) / vae.ratio;
  c.history_steps = (history_frames + vae.ratio - 1) / vae.ratio;
  c.tokens = vae.tokens();
  c.channels = vae.channels;
  return c;
}

Mat time_features(double t, Index rows) {
  Eigen::RowVectorXd f(7);
  f[0] = t;
  for (int i = 0; i < 3; ++i) {
    const double w = std::numbers::pi * static_cast<double>(1 << i);
    f[1 + 2 * i] = std::sin(w * t);
    f[2 + 2 * i] = std::cos(w * t);
  }
  return f.replicate(rows, 1);
}

namespace {

Index velocity_input_width(const VelocityConfig& c) {
  return c.hidden + 7 + Index{c.history_steps} * (c.channels + 1) + c.steps;
}

}  // namespace

VelocityNet::VelocityNet(const VelocityConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  add_linear(params_, "vel.tok", config_.channels, config_.hidden, rng);
  params_.add("vel.alpha", Mat::Constant(1, 1, config_.alpha_init));
  params_.add("vel.gates", Mat::Zero(1, config_.steps));
  add_linear(params_, "vel.in", velocity_input_width(config_), config_.hidden, rng);
  const Index rows = Index{config_.steps} * config_.tokens;
  for (int b = 0; b < config_.blocks; ++b)
    blocks_.push_back(MixerBlock::create(params_, "vel.block" + std::to_string(b), rows, config_.hidden, rng));
  add_linear(params_, "vel.out", config_.hidden, config_.channels, rng, 0.1);
}

VelocityNet::VelocityNet(const VelocityConfig& config, ParamSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  for (int b = 0; b < config_.blocks; ++b) blocks_.push_back(MixerBlock::find(params_, "vel.block" + std::to_string(b)));
}

Var VelocityNet::forward(std::span<const Var> p, const Var& z_t, double t, const FlowCondition& cond) const {
  const VelocityConfig& c = config_;
  const Index rows = Index{c.steps} * c.tokens;
  if (z_t.rows() != rows || z_t.cols() != c.channels)
    throw ShapeError("velocity_forward: z_t " + shape_str(z_t.rows(), z_t.cols()) + ", expected " +
                     shape_str(rows, c.channels));
  if (cond.history.steps != c.history_steps || cond.history.tokens != c.tokens ||
      cond.history.channels() != c.channels)
    throw ShapeError("velocity_forward: history latent " + std::to_string(cond.history.steps) + "x" +
                     std::to_string(cond.history.tokens) + "x" + std::to_string(cond.history.channels()) +
                     " does not match config");
  if (cond.history_visibility.rows() != c.history_steps || cond.history_visibility.cols() != c.tokens)
    throw ShapeError("velocity_forward: history visibility " +
                     shape_str(cond.history_visibility.rows(), cond.history_visibility.cols()));
  ad::Tape& tape = z_t.tape();

  Var tok = linear(p, params_, "vel.tok", z_t);
  Var boundary = linear(p, params_, "vel.tok", tape.constant(cond.history.step(-1)));
  Var previous = linear(p, params_, "vel.tok", tape.constant(cond.history.step(-2)));
  tok = fuse_history(tok, boundary, previous, p[params_.index("vel.alpha")], p[params_.index("vel.gates")], c.steps);

  Mat side(rows, 7 + Index{c.history_steps} * (c.channels + 1) + c.steps);
  side.setZero();
  side.leftCols(7) = time_features(t, rows);
  for (int k = 0; k < c.steps; ++k)
    for (int n = 0; n < c.tokens; ++n) {
      const Index r = Index{k} * c.tokens + n;
      Index col = 7;
      for (int j = 0; j < c.history_steps; ++j) {
        side.block(r, col, 1, c.channels) = cond.history.values.row(Index{j} * c.tokens + n);
        col += c.channels;
        side(r, col++) = cond.history_visibility(j, n);
      }
      side(r, col + k) = 1.0;
    }
  const Var parts[] = {tok, tape.constant(std::move(side))};
  Var h = ad::gelu(linear(p, params_, "vel.in", ad::concat_cols(parts)));
  for (const MixerBlock& b : blocks_) h = b(p, h);
  return linear(p, params_, "vel.out", h);
}

Mat VelocityNet::evaluate(const Mat& z_t, double t, const FlowCondition& cond) const {
  ad::Tape tape;
  const std::vector<Var> p = params_.bind_frozen(tape);
  return forward(p, tape.constant(z_t), t, cond).value();
}

// ---- visibility head -------------------------------------------------------

VisibilityHead::VisibilityHead(const VisibilityConfig& config, std::uint64_t seed) : config_(config) {
  Rng rng(seed);
  add_linear(params_, "vis.proj", config_.channels, config_.hidden, rng);
  for (int l = 0; l < config_.layers; ++l)
    add_linear(params_, "vis.conv" + std::to_string(l), Index{3} * config_.hidden, config_.hidden, rng);
  add_linear(params_, "vis.out", config_.hidden, 1, rng);
}

VisibilityHead::VisibilityHead(const VisibilityConfig& config, ParamSet params)
    : config_(config), params_(std::move(params)) {}

Var VisibilityHead::logits(std::span<const Var> p, const Var& z, int steps, int tokens) const {
  if (z.rows() != Index{steps} * tokens || z.cols() != config_.channels)
    throw ShapeError("visibility_predict: latent " + shape_str(z.rows(), z.cols()) + ", expected " +
                     shape_str(Index{steps} * tokens, config_.channels));
  // Temporal taps k-1, k, k+1 at the same spatial token, zero padded.
  std::vector<std::vector<Index>> taps(3);
  for (int o = 0; o < 3; ++o)
    for (int k = 0; k < steps; ++k)
      for (int n = 0; n < tokens; ++n) {
        const int src = k + o - 1;
        taps[o].push_back(src < 0 || src >= steps ? -1 : Index{src} * tokens + n);
      }
  Var h = linear(p, params_, "vis.proj", z);
  for (int l = 0; l < config_.layers; ++l) {
    const Var stacked[] = {ad::gather_rows(h, taps[0]), ad::gather_rows(h, taps[1]), ad::gather_rows(h, taps[2])};
    h = ad::gelu(linear(p, params_, "vis.conv" + std::to_string(l), ad::concat_cols(stacked)));
  }
  return linear(p, params_, "vis.out", h);
}

VisibilityHead::Prediction VisibilityHead::predict(const LatentTensor& z) const {
  return predict(z, config_.threshold);
}

VisibilityHead::Prediction VisibilityHead::predict(const LatentTensor& z, double threshold) const {
  ad::Tape tape;
  const std::vector<Var> p = params_.bind_frozen(tape);
  Var l = logits(p, tape.constant(z.values), z.steps, z.tokens);
  Prediction out;
  out.logits = Eigen::Map<const Mat>(l.value().data(), z.steps, z.tokens);
  out.mask = out.logits.unaryExpr([threshold](double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s >= threshold ? 1.0 : 0.0;
  });
  return out;
}

namespace {

template <typename Reduce>
Mat pool_mask(const GridSeries<double>& mask, const TokenGrid& grid, Reduce reduce) {
  if (mask.rows % grid.patch != 0 || mask.cols % grid.patch != 0)
    throw ShapeError("pool_visibility: patch " + std::to_string(grid.patch) + " does not divide " +
                     shape_str(mask.rows, mask.cols));
  const int steps = (mask.frames + grid.ratio - 1) / grid.ratio;
  const int tr = mask.rows / grid.patch, tc = mask.cols / grid.patch;
  Mat out(steps, tr * tc);
  for (int k = 0; k < steps; ++k)
    for (int a = 0; a < tr; ++a)
      for (int b = 0; b < tc; ++b) {
        std::vector<double> cell;
        for (int t = k * grid.ratio; t < std::min(mask.frames, (k + 1) * grid.ratio); ++t)
          for (int h = a * grid.patch; h < (a + 1) * grid.patch; ++h)
            for (int w = b * grid.patch; w < (b + 1) * grid.patch; ++w)
              cell.push_back(mask.mask[mask.index(t, h, w)]);
        out(k, a * tc + b) = reduce(cell);
      }
  return out;
}

}  // namespace

Mat pool_visibility(const GridSeries<double>& mask, const TokenGrid& grid) {
  return pool_mask(mask, grid, [](const std::vector<double>& v) {
    for (double x : v)
      if (x > 0) return 1.0;
    return 0.0;
  });
}

Mat pool_visibility_mean(const GridSeries<double>& mask, const TokenGrid& grid) {
  return pool_mask(mask, grid, [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  });
}

}  // namespace trajloom
