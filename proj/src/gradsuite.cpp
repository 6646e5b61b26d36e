#include "trajloom/gradsuite.hpp"

#include <memory>

#include "trajloom/flow.hpp"
#include "trajloom/losses.hpp"
#include "trajloom/models.hpp"

namespace trajloom {

using ad::Var;

namespace {

Mask random_mask(Rng& rng, Index n, double p_visible = 0.8) {
  Mask m(n);
  for (Index i = 0; i < n; ++i) m[i] = rng.uniform() < p_visible;
  return m;
}

std::vector<Mat> jittered(const ParamSet& params, Rng& rng) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back(params[i] + 0.1 * rng.draw_normal(params[i].rows(), params[i].cols()));
  return out;
}

// Scalar probe of a matrix-valued output: sum(W .* out) with fixed random W.
Var probe(const Var& out, const Mat& w) { return ad::weighted_sum(out, w); }

}  // namespace

std::vector<GradCase> grad_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;

  const SegmentLayout layout{3, 5, 5};
  const Index rows = layout.size();
  const Mat target = rng.draw_normal(rows, 2);
  const Mask mask = random_mask(rng, rows);
  const NeighborSpec spec;

  cases.push_back({"recon_loss",
                   [=](ad::Tape& t, std::span<const Var> in) { return recon_loss(in[0], t.constant(target), mask, 1.0); },
                   {target + 1.5 * rng.draw_normal(rows, 2)}});
  cases.push_back({"temporal_loss",
                   [=](ad::Tape& t, std::span<const Var> in) {
                     return temporal_loss(in[0], t.constant(target), mask, layout);
                   },
                   {target + rng.draw_normal(rows, 2)}});
  cases.push_back({"spatial_loss",
                   [=](ad::Tape& t, std::span<const Var> in) {
                     return spatial_loss(in[0], t.constant(target), mask, layout, spec);
                   },
                   {target + rng.draw_normal(rows, 2)}});
  cases.push_back({"st_regularizer",
                   [=](ad::Tape& t, std::span<const Var> in) {
                     return st_regularizer(in[0], t.constant(target), mask, layout, spec, 0.1, 0.2);
                   },
                   {target + rng.draw_normal(rows, 2)}});
  cases.push_back({"kl_loss", [](ad::Tape&, std::span<const Var> in) { return kl_loss(in[0], in[1]); },
                   {rng.draw_normal(6, 3), 0.5 * rng.draw_normal(6, 3)}});

  const int steps = 2, tokens = 3, channels = 4;
  TokenWeights w{steps, tokens, (rng.draw_uniform(steps * tokens, 1).array() + 0.1).matrix()};
  w.weights /= w.weights.sum();
  const Mat u = rng.draw_normal(steps * tokens, channels);
  cases.push_back({"fm_loss",
                   [=](ad::Tape& t, std::span<const Var> in) { return fm_loss(in[0], t.constant(u), w); },
                   {rng.draw_normal(steps * tokens, channels)}});

  const int k = 3;
  std::vector<KStepTargets> targets;
  for (int i = 0; i < k; ++i)
    targets.push_back({rng.draw_normal(steps * tokens, channels), rng.draw_normal(steps * tokens, channels)});
  std::vector<Mat> vel;
  for (int i = 0; i < k; ++i) vel.push_back(rng.draw_normal(steps * tokens, channels));
  cases.push_back({"kstep_loss",
                   [=](ad::Tape&, std::span<const Var> in) { return kstep_loss(in, targets, w, 1.0, 0.5); }, vel});

  // Only the last step is perturbed: earlier implied endpoints enter the
  // objective through stop_gradient, which central differences would see.
  const std::vector<double> times{0.1, 0.4, 0.8};
  std::vector<Mat> states;
  for (int i = 0; i < k; ++i) states.push_back(rng.draw_normal(steps * tokens, channels));
  cases.push_back({"endpoint_consistency",
                   [=](ad::Tape& t, std::span<const Var> in) {
                     std::vector<Var> s, v;
                     for (int i = 0; i < k - 1; ++i) {
                       s.push_back(t.constant(states[i]));
                       v.push_back(t.constant(vel[i]));
                     }
                     s.push_back(in[0]);
                     v.push_back(in[1]);
                     return endpoint_consistency(s, v, times, w, false);
                   },
                   {states[k - 1], vel[k - 1]}});
  const Mat labels = (rng.draw_uniform(7, 1).array() < 0.5).cast<double>().matrix();
  cases.push_back({"bce_logits",
                   [=](ad::Tape&, std::span<const Var> in) { return bce_logits(in[0], labels); },
                   {2.0 * rng.draw_normal(7, 1)}});

  // ---- network forwards at toy sizes ----
  VaeConfig vc;
  vc.height = 8;
  vc.width = 8;
  vc.patch = 4;
  vc.frames = 3;
  vc.ratio = 2;
  vc.channels = 2;
  vc.hidden = 4;
  vc.blocks = 1;
  vc.logvar_bias_init = -1.0;
  auto vae = std::make_shared<TrajectoryVae>(vc, rng.next_u64());
  const std::size_t np = vae->params().size();
  const Index seg_rows = vc.layout().size();
  const Index lat_rows = Index{vc.latent_steps()} * vc.tokens();
  const Mat w_mu = rng.draw_normal(lat_rows, vc.channels), w_lv = rng.draw_normal(lat_rows, vc.channels);
  const Mat w_dec = rng.draw_normal(seg_rows, 2);
  {
    std::vector<Mat> in = jittered(vae->params(), rng);
    in.push_back(0.3 * rng.draw_normal(seg_rows, 2));
    cases.push_back({"vae_encode",
                     [=](ad::Tape&, std::span<const Var> x) {
                       const TrajectoryVae::Posterior post = vae->encode(x.first(np), x[np]);
                       return ad::add(probe(post.mu, w_mu), probe(post.logvar, w_lv));
                     },
                     in});
  }
  {
    std::vector<Mat> in = jittered(vae->params(), rng);
    in.push_back(rng.draw_normal(lat_rows, vc.channels));
    cases.push_back({"vae_decode",
                     [=](ad::Tape&, std::span<const Var> x) { return probe(vae->decode(x.first(np), x[np]), w_dec); },
                     in});
  }
  {
    std::vector<Mat> in = jittered(vae->params(), rng);
    const Mat seg = 0.3 * rng.draw_normal(seg_rows, 2);
    const Mask m = random_mask(rng, seg_rows);
    const std::uint64_t eps_seed = rng.next_u64();
    const SegmentLayout lay = vc.layout();
    cases.push_back({"vae_objective",
                     [=](ad::Tape& t, std::span<const Var> x) {
                       Rng eps(eps_seed);
                       Var s = t.constant(seg);
                       const TrajectoryVae::Posterior post = vae->encode(x, s);
                       Var rec = vae->decode(x, reparameterize(post.mu, post.logvar, eps));
                       Var loss = ad::add(recon_loss(rec, s, m), st_regularizer(rec, s, m, lay, NeighborSpec{}, 0.1, 0.2));
                       return ad::add(loss, ad::scale(kl_loss(post.mu, post.logvar), 5e-5));
                     },
                     in});
  }
  {
    ParamSet ps;
    const MixerBlock block = MixerBlock::create(ps, "m", 6, 4, rng);
    const Mat wm = rng.draw_normal(6, 4);
    std::vector<Mat> in = jittered(ps, rng);
    in.push_back(rng.draw_normal(6, 4));
    cases.push_back({"mixer_block",
                     [=](ad::Tape&, std::span<const Var> x) { return probe(block(x.first(5), x[5]), wm); }, in});
  }
  {
    const Mat wf = rng.draw_normal(3 * 4, 5);
    cases.push_back({"fuse_history",
                     [=](ad::Tape&, std::span<const Var> x) {
                       return probe(fuse_history(x[0], x[1], x[2], x[3], x[4], 3), wf);
                     },
                     {rng.draw_normal(12, 5), rng.draw_normal(4, 5), rng.draw_normal(4, 5), Mat::Constant(1, 1, 0.3),
                      rng.draw_normal(1, 3)}});
  }
  {
    VelocityConfig c;
    c.steps = 2;
    c.tokens = 3;
    c.channels = 2;
    c.history_steps = 2;
    c.hidden = 5;
    c.blocks = 1;
    auto net = std::make_shared<VelocityNet>(c, rng.next_u64());
    const std::size_t n = net->params().size();
    FlowCondition cond{LatentTensor(2, 3, rng.draw_normal(6, 2)), rng.draw_uniform(2, 3)};
    const Mat wv = rng.draw_normal(6, 2);
    std::vector<Mat> in = jittered(net->params(), rng);
    in.push_back(rng.draw_normal(6, 2));
    cases.push_back({"velocity_forward",
                     [=](ad::Tape&, std::span<const Var> x) {
                       return probe(net->forward(x.first(n), x[n], 0.37, cond), wv);
                     },
                     in});
  }
  {
    VisibilityConfig c;
    c.channels = 2;
    c.hidden = 4;
    auto head = std::make_shared<VisibilityHead>(c, rng.next_u64());
    const std::size_t n = head->params().size();
    const Mat labels_v = (rng.draw_uniform(6, 1).array() < 0.5).cast<double>().matrix();
    std::vector<Mat> in = jittered(head->params(), rng);
    in.push_back(rng.draw_normal(6, 2));
    cases.push_back({"visibility_logits",
                     [=](ad::Tape&, std::span<const Var> x) {
                       return bce_logits(head->logits(x.first(n), x[n], 3, 2), labels_v);
                     },
                     in});
  }
  return cases;
}

std::vector<GradResult> run_grad_suite(std::uint64_t seed, double step) {
  std::vector<GradResult> out;
  for (const GradCase& c : grad_cases(seed)) out.push_back({c.name, grad_check(c.f, c.inputs, step)});
  return out;
}

}  // namespace trajloom
