#include "trajloom/training.hpp"

#include "trajloom/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace trajloom {

using ad::Var;

OffsetField<double> offsets_from_tracks(const SparseTracks<double>& tracks) { return to_offsets(rasterize(tracks)); }

SparseTracks<double> tracks_from_offsets(const OffsetField<double>& offsets, int stride) {
  return cell_tracks(to_absolute(offsets), stride);
}

namespace {

MotionSpec corpus_motion(const CorpusSpec& spec, int frames, Rng& rng) {
  MotionSpec m = random_motion(rng, spec.geometry, frames, spec.kinds);
  m.jitter.amplitude_x = spec.jitter;
  m.jitter.amplitude_y = spec.jitter;
  return m;
}

}  // namespace

std::vector<OffsetField<double>> motion_segments(const CorpusSpec& spec, int count, Rng& rng) {
  std::vector<OffsetField<double>> out;
  for (int i = 0; i < count; ++i) {
    // Random phase so segments also start away from their anchors, as
    // future windows do.
    const int skip = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(spec.segment + 1));
    const OffsetField<double> full =
        offsets_from_tracks(generate(corpus_motion(spec, spec.segment + skip, rng), rng));
    out.push_back(skip ? split_windows(full, skip, spec.segment).second : full);
  }
  return out;
}

std::vector<FlowSample> motion_windows(const CorpusSpec& spec, int count, Rng& rng) {
  std::vector<FlowSample> out;
  for (int i = 0; i < count; ++i) {
    const OffsetField<double> full =
        offsets_from_tracks(generate(corpus_motion(spec, 2 * spec.segment, rng), rng));
    auto [history, future] = split_windows(full, spec.segment, spec.segment);
    out.push_back({std::move(history), std::move(future)});
  }
  return out;
}

namespace {

std::vector<std::size_t> draw_batch(Rng& rng, std::size_t n, int batch) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  for (std::size_t& i : idx) i = static_cast<std::size_t>(rng.next_u64() % n);
  return idx;
}

void require_finite(double v, const char* loop, int step) {
  if (!std::isfinite(v))
    throw NumericalError(std::string(loop) + ": non-finite loss at step " + std::to_string(step));
}

void require_data(std::size_t n, int batch, const char* loop) {
  if (n == 0) throw Error(std::string(loop) + ": empty dataset");
  if (batch < 1) throw ConfigError(std::string(loop) + ": batch must be >= 1");
}

struct VaeTerms {
  Var total;
  VaeLoss parts;
};

VaeTerms vae_terms(const TrajectoryVae& vae, std::span<const Var> p, const OffsetField<double>& field,
                   const LossWeights& w, Rng* rng) {
  ad::Tape& tape = p[0].tape();
  Var seg = tape.constant(Mat(field.points.coords));
  const Mask& mask = field.points.mask;
  const SegmentLayout layout = vae.config().layout();
  const TrajectoryVae::Posterior post = vae.encode(p, seg);
  Var z = rng ? reparameterize(post.mu, post.logvar, *rng) : post.mu;
  Var rec = vae.decode(p, z);
  Var recon = recon_loss(rec, seg, mask, w.huber_delta);
  Var temporal = temporal_loss(rec, seg, mask, layout);
  Var spatial = spatial_loss(rec, seg, mask, layout, w.neighbors);
  Var kl = kl_loss(post.mu, post.logvar);
  Var total = recon;
  if (w.lambda_temporal != 0.0) total = ad::add(total, ad::scale(temporal, w.lambda_temporal));
  if (w.lambda_spatial != 0.0) total = ad::add(total, ad::scale(spatial, w.lambda_spatial));
  if (w.beta_kl != 0.0) total = ad::add(total, ad::scale(kl, w.beta_kl));
  return {total, {total.scalar(), recon.scalar(), temporal.scalar(), spatial.scalar(), kl.scalar()}};
}

void accumulate(VaeLoss& acc, const VaeLoss& x, double scale) {
  acc.total += scale * x.total;
  acc.recon += scale * x.recon;
  acc.temporal += scale * x.temporal;
  acc.spatial += scale * x.spatial;
  acc.kl += scale * x.kl;
}

}  // namespace

std::vector<VaeLoss> train_vae(TrajectoryVae& vae, std::span<const OffsetField<double>> data,
                               const VaeTrainConfig& config) {
  require_data(data.size(), config.batch, "train_vae");
  config.loss.neighbors.validate();
  Rng rng(config.seed);
  OptimState state(vae.params(), config.optim);
  std::vector<VaeLoss> curve;
  for (int step = 0; step < config.steps; ++step) {
    ad::Tape tape;
    const std::vector<Var> p = vae.params().bind(tape);
    const double inv = 1.0 / config.batch;
    Var loss = tape.scalar_constant(0.0);
    VaeLoss parts;
    for (std::size_t i : draw_batch(rng, data.size(), config.batch)) {
      VaeTerms terms = vae_terms(vae, p, data[i], config.loss, &rng);
      loss = ad::add(loss, ad::scale(terms.total, inv));
      accumulate(parts, terms.parts, inv);
    }
    require_finite(loss.scalar(), "train_vae", step);
    curve.push_back(parts);
    optim_step(vae.params(), tape.gradient(loss, p), state);
  }
  return curve;
}

VaeLoss eval_vae(const TrajectoryVae& vae, std::span<const OffsetField<double>> data, const LossWeights& weights) {
  if (data.empty()) throw Error("eval_vae: empty dataset");
  VaeLoss out;
  for (const OffsetField<double>& field : data) {
    ad::Tape tape;
    const std::vector<Var> p = vae.params().bind_frozen(tape);
    accumulate(out, vae_terms(vae, p, field, weights, nullptr).parts, 1.0 / static_cast<double>(data.size()));
  }
  return out;
}

double vae_vepe(const TrajectoryVae& vae, std::span<const OffsetField<double>> data, int stride) {
  if (data.empty()) throw Error("vae_vepe: empty dataset");
  double num = 0.0, den = 0.0;
  for (const OffsetField<double>& field : data) {
    const SparseTracks<double> truth = tracks_from_offsets(field, stride);
    const SparseTracks<double> pred = tracks_from_offsets(vae.decode(vae.encode_mean(field)), stride);
    const Index visible = (truth.points.mask != 0).count();
    if (visible == 0) continue;
    num += vepe(pred.points.coords, truth.points.coords, truth.points.mask) * static_cast<double>(visible);
    den += static_cast<double>(visible);
  }
  if (den == 0) throw NumericalError("vae_vepe: no visible point in the set");
  return num / den;
}

// ---- flow ------------------------------------------------------------------

FlowData encode_flow_dataset(const TrajectoryVae& vae, std::span<const FlowSample> samples, const LatentStats* stats,
                             double invisible_weight) {
  if (samples.empty()) throw Error("encode_flow_dataset: empty dataset");
  std::vector<LatentTensor> hist, fut;
  std::vector<Mat> corpus;
  for (const FlowSample& s : samples) {
    hist.push_back(vae.encode_mean(s.history));
    fut.push_back(vae.encode_mean(s.future));
    corpus.push_back(hist.back().values);
    corpus.push_back(fut.back().values);
  }
  FlowData out;
  out.stats = stats ? *stats : LatentStats::fit(corpus);
  const TokenGrid grid = vae.config().token_grid();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EncodedSample e;
    e.history = LatentTensor(hist[i].steps, hist[i].tokens, out.stats.normalize(hist[i].values));
    e.future = LatentTensor(fut[i].steps, fut[i].tokens, out.stats.normalize(fut[i].values));
    e.history_visibility = pool_visibility_mean(samples[i].history.points, grid);
    e.weights = token_weights(samples[i].future.points, grid, invisible_weight);
    out.samples.push_back(std::move(e));
  }
  return out;
}

namespace {

Var flow_objective(const VelocityNet& net, std::span<const Var> p, const FlowData& data, const FinetuneConfig& cfg,
                   bool onpolicy, Rng& rng) {
  const FlowTrainConfig& f = cfg.flow;
  ad::Tape& tape = p[0].tape();
  const std::vector<std::size_t> idx = draw_batch(rng, data.samples.size(), f.batch);
  std::vector<Mat> sources;
  Var fm = tape.scalar_constant(0.0);
  for (std::size_t i : idx) {
    const EncodedSample& s = data.samples[i];
    sources.push_back(boundary_init(s.history.step(-1), s.future.steps, f.anchor_sigma, rng, f.anchor));
    const double t = sample_time(rng, f.time);
    const Interpolant it = interpolate(sources.back(), s.future.values, t, f.tube_sigma, rng);
    Var v = net.forward(p, tape.constant(it.z_t), t, s.condition());
    fm = ad::add(fm, fm_loss(v, tape.constant(it.u_t), s.weights));
  }
  Var loss = ad::scale(fm, 1.0 / f.batch);
  if (!onpolicy || cfg.lambda_kstep == 0.0) return loss;

  const TimeGrid grid = TimeGrid::make(cfg.rollout_steps, cfg.spacing, cfg.grid_eps);
  const int sub = std::min(cfg.sub_batch, f.batch);
  Var extra = tape.scalar_constant(0.0);
  for (int b = 0; b < sub; ++b) {
    const EncodedSample& s = data.samples[idx[b]];
    const FlowCondition cond = s.condition();
    const TapeVelocityFn vfn = [&](ad::Tape&, const Var& z, double t) { return net.forward(p, z, t, cond); };
    const Rollout r = kstep_rollout(tape, vfn, sources[b], grid);
    std::vector<KStepTargets> targets;
    for (int i = 0; i < grid.steps(); ++i)
      targets.push_back(kstep_targets(r.states[i].value(), sources[b], s.future.values, grid.times[i], cfg.denom_clamp));
    Var term = kstep_loss(r.velocities, targets, s.weights, cfg.w1, cfg.w0);
    if (cfg.gamma != 0.0)
      term = ad::add(term, ad::scale(endpoint_consistency(r.states, r.velocities, grid.times, s.weights,
                                                          cfg.masked_consistency),
                                     cfg.gamma));
    extra = ad::add(extra, term);
  }
  return ad::add(loss, ad::scale(extra, cfg.lambda_kstep / sub));
}

std::vector<double> run_flow(VelocityNet& net, const FlowData& data, const FinetuneConfig& cfg, bool onpolicy,
                             const char* loop) {
  require_data(data.samples.size(), cfg.flow.batch, loop);
  if (cfg.flow.tube_sigma < 0 || cfg.flow.anchor_sigma < 0) throw ConfigError(std::string(loop) + ": sigma must be >= 0");
  Rng rng(cfg.flow.seed);
  OptimState state(net.params(), cfg.flow.optim);
  std::vector<double> curve;
  for (int step = 0; step < cfg.flow.steps; ++step) {
    ad::Tape tape;
    const std::vector<Var> p = net.params().bind(tape);
    Var loss = flow_objective(net, p, data, cfg, onpolicy, rng);
    require_finite(loss.scalar(), loop, step);
    curve.push_back(loss.scalar());
    optim_step(net.params(), tape.gradient(loss, p), state);
  }
  return curve;
}

}  // namespace

std::vector<double> train_flow(VelocityNet& net, const FlowData& data, const FlowTrainConfig& config) {
  FinetuneConfig cfg;
  cfg.flow = config;
  return run_flow(net, data, cfg, false, "train_flow");
}

std::vector<double> finetune_onpolicy(VelocityNet& net, const FlowData& data, const FinetuneConfig& config) {
  if (config.lambda_kstep < 0 || config.gamma < 0) throw ConfigError("finetune: weights must be >= 0");
  if (config.sub_batch < 1) throw ConfigError("finetune: sub_batch must be >= 1");
  return run_flow(net, data, config, true, "finetune");
}

double eval_fm_loss(const VelocityNet& net, const FlowData& data, const FlowTrainConfig& config, std::uint64_t seed,
                    int draws) {
  if (data.samples.empty()) throw Error("eval_fm_loss: empty dataset");
  Rng rng(seed);
  double total = 0.0;
  for (const EncodedSample& s : data.samples)
    for (int d = 0; d < draws; ++d) {
      const Mat z0 = boundary_init(s.history.step(-1), s.future.steps, config.anchor_sigma, rng, config.anchor);
      const double t = sample_time(rng, config.time);
      const Interpolant it = interpolate(z0, s.future.values, t, config.tube_sigma, rng);
      ad::Tape tape;
      const std::vector<Var> p = net.params().bind_frozen(tape);
      Var v = net.forward(p, tape.constant(it.z_t), t, s.condition());
      total += fm_loss(v, tape.constant(it.u_t), s.weights).scalar();
    }
  return total / (static_cast<double>(data.samples.size()) * draws);
}

double endpoint_error(const VelocityNet& net, const FlowData& data, int euler_steps, std::uint64_t seed,
                      double anchor_sigma, AnchorMode anchor) {
  if (data.samples.empty()) throw Error("endpoint_error: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const EncodedSample& s = data.samples[i];
    Rng rng(seed + i);
    const Mat z0 = boundary_init(s.history.step(-1), s.future.steps, anchor_sigma, rng, anchor);
    const FlowCondition cond = s.condition();
    const Mat z1 = euler_sample([&](const Mat& z, double t) { return net.evaluate(z, t, cond); }, z0, euler_steps);
    total += (z1 - s.future.values).squaredNorm() / static_cast<double>(z1.size());
  }
  return total / static_cast<double>(data.samples.size());
}

// ---- visibility ------------------------------------------------------------

namespace {

Mat flat_target(const VisibilitySample& s) {
  if (s.target.rows() != s.latent.steps || s.target.cols() != s.latent.tokens)
    throw ShapeError("visibility: target " + shape_str(s.target.rows(), s.target.cols()) + " for latent " +
                     shape_str(s.latent.steps, s.latent.tokens));
  return Eigen::Map<const Mat>(s.target.data(), s.target.size(), 1);
}

}  // namespace

std::vector<double> train_visibility(VisibilityHead& head, std::span<const VisibilitySample> data,
                                     const VisibilityTrainConfig& config) {
  require_data(data.size(), config.batch, "train_visibility");
  Rng rng(config.seed);
  OptimState state(head.params(), config.optim);
  std::vector<double> curve;
  for (int step = 0; step < config.steps; ++step) {
    ad::Tape tape;
    const std::vector<Var> p = head.params().bind(tape);
    Var loss = tape.scalar_constant(0.0);
    for (std::size_t i : draw_batch(rng, data.size(), config.batch)) {
      const VisibilitySample& s = data[i];
      Var l = head.logits(p, tape.constant(s.latent.values), s.latent.steps, s.latent.tokens);
      loss = ad::add(loss, ad::scale(bce_logits(l, flat_target(s)), 1.0 / config.batch));
    }
    require_finite(loss.scalar(), "train_visibility", step);
    curve.push_back(loss.scalar());
    optim_step(head.params(), tape.gradient(loss, p), state);
  }
  return curve;
}

double visibility_accuracy(const VisibilityHead& head, std::span<const VisibilitySample> data) {
  if (data.empty()) throw Error("visibility_accuracy: empty dataset");
  double hit = 0.0, total = 0.0;
  for (const VisibilitySample& s : data) {
    flat_target(s);
    const Mat pred = head.predict(s.latent).mask;
    hit += static_cast<double>((pred.array() == s.target.array()).count());
    total += static_cast<double>(s.target.size());
  }
  return hit / total;
}

// ---- sampling --------------------------------------------------------------

FutureSample sample_future(const OffsetField<double>& history, const Pipeline& pl, const SamplerSpec& sampler,
                           std::uint64_t seed) {
  if (!pl.vae || !pl.velocity) throw Error("sample_future: pipeline needs a VAE and a velocity network");
  const TrajectoryVae& vae = *pl.vae;
  const VaeConfig& vc = vae.config();
  const LatentTensor h = vae.encode_mean(history);
  const FlowCondition cond{LatentTensor(h.steps, h.tokens, pl.stats.normalize(h.values)),
                           pool_visibility_mean(history.points, vc.token_grid())};
  const int steps = pl.velocity->config().steps;
  if (steps != vc.latent_steps())
    throw ShapeError("sample_future: velocity net predicts " + std::to_string(steps) + " latent steps, VAE decodes " +
                     std::to_string(vc.latent_steps()));
  Rng rng(seed);
  const Mat z0 = boundary_init(cond.history.step(-1), steps, pl.anchor_sigma, rng, pl.anchor);
  const VelocityFn v = [&](const Mat& z, double t) { return pl.velocity->evaluate(z, t, cond); };
  Mat z1;
  switch (sampler.kind) {
    case SamplerSpec::Kind::euler:
      z1 = euler_sample(v, z0, sampler.steps);
      break;
    case SamplerSpec::Kind::dopri5:
      z1 = dopri5_sample(v, z0, {sampler.rtol, sampler.atol}).state;
      break;
    case SamplerSpec::Kind::dopri5_fixed:
      z1 = dopri5_fixed(v, z0, sampler.steps);
      break;
  }
  FutureSample out;
  out.latent = LatentTensor(steps, vc.tokens(), pl.stats.denormalize(z1));
  out.future = vae.decode(out.latent);
  out.token_visibility =
      pl.visibility ? pl.visibility->predict(LatentTensor(steps, vc.tokens(), z1)).mask : Mat::Ones(steps, vc.tokens());
  GridSeries<double>& f = out.future.points;
  const int tc = vc.width / vc.patch;
  for (int t = 0; t < f.frames; ++t)
    for (int y = 0; y < f.rows; ++y)
      for (int x = 0; x < f.cols; ++x)
        f.mask[f.index(t, y, x)] = out.token_visibility(t / vc.ratio, (y / vc.patch) * tc + x / vc.patch) > 0.5;
  return out;
}

}  // namespace trajloom
