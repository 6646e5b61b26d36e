#include "trajloom/losses.hpp"

#include <algorithm>
#include <cmath>

namespace trajloom {

using ad::Var;

namespace {

void require_rows(const char* op, const Var& a, Index rows) {
  if (a.rows() != rows)
    throw ShapeError(std::string(op) + ": operand " + shape_str(a.rows(), a.cols()) + " does not cover " +
                     std::to_string(rows) + " samples");
}

void require_pair(const char* op, const Var& pred, const Var& target, const Mask& mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError(std::string(op) + ": prediction " + shape_str(pred.rows(), pred.cols()) + " vs target " +
                     shape_str(target.rows(), target.cols()));
  require_rows(op, pred, mask.size());
}

// Masked mean of sum_c |d(a) - d(b)| over index pairs.
Var pair_l1_mean(const Var& diff, const std::vector<Index>& a, const std::vector<Index>& b) {
  Var delta = ad::sub(ad::gather_rows(diff, a), ad::gather_rows(diff, b));
  return ad::scale(ad::sum(ad::abs(delta)), 1.0 / static_cast<double>(a.size()));
}

Mat broadcast_weights(const TokenWeights& w, Index cols) {
  Mat out(w.weights.size(), cols);
  for (Index c = 0; c < cols; ++c) out.col(c) = w.weights;
  return out;
}

}  // namespace

void NeighborSpec::validate() const {
  if (hops.empty() || hops.size() != weights.size()) throw Error("neighbor spec: hops and weights must pair up");
  for (int h : hops)
    if (h <= 0) throw Error("neighbor spec: hops must be positive");
  for (double w : weights)
    if (!(w > 0)) throw Error("neighbor spec: weights must be positive");
}

TokenWeights TokenWeights::uniform(int steps, int tokens) {
  TokenWeights w;
  w.steps = steps;
  w.tokens = tokens;
  w.weights = Vec::Constant(Index{steps} * tokens, 1.0 / (Index{steps} * tokens));
  return w;
}

Var recon_loss(const Var& pred, const Var& target, const Mask& mask, double huber_delta) {
  require_pair("recon_loss", pred, target, mask);
  const double visible = mask.cast<double>().sum();
  if (visible == 0) throw NumericalError("recon_loss: segment has no visible element");
  Mat w(pred.rows(), pred.cols());
  for (Index r = 0; r < w.rows(); ++r) w.row(r).setConstant(mask[r] / visible);
  return ad::weighted_sum(ad::huber(ad::sub(pred, target), huber_delta), w);
}

Var temporal_loss(const Var& pred, const Var& target, const Mask& mask, const SegmentLayout& layout) {
  require_pair("temporal_loss", pred, target, mask);
  require_rows("temporal_loss", pred, layout.size());
  if (layout.frames < 2) throw ShapeError("temporal_loss: need at least 2 frames");
  std::vector<Index> cur, prev;
  for (int t = 1; t < layout.frames; ++t)
    for (int h = 0; h < layout.height; ++h)
      for (int w = 0; w < layout.width; ++w) {
        const Index a = layout.index(t, h, w), b = layout.index(t - 1, h, w);
        if (mask[a] && mask[b]) {
          cur.push_back(a);
          prev.push_back(b);
        }
      }
  if (cur.empty()) throw NumericalError("temporal_loss: no frame pair visible at both ends");
  return pair_l1_mean(ad::sub(pred, target), cur, prev);
}

Var spatial_loss(const Var& pred, const Var& target, const Mask& mask, const SegmentLayout& layout,
                 const NeighborSpec& spec) {
  require_pair("spatial_loss", pred, target, mask);
  require_rows("spatial_loss", pred, layout.size());
  spec.validate();
  const Var diff = ad::sub(pred, target);
  std::vector<Var> terms;
  double alpha_total = 0.0;
  for (std::size_t k = 0; k < spec.hops.size(); ++k) {
    const int d = spec.hops[k];
    std::vector<Index> nb, here;
    for (int t = 0; t < layout.frames; ++t)
      for (int h = 0; h < layout.height; ++h)
        for (int w = 0; w < layout.width; ++w) {
          const Index p = layout.index(t, h, w);
          if (!mask[p]) continue;
          if (w + d < layout.width && mask[layout.index(t, h, w + d)]) {
            nb.push_back(layout.index(t, h, w + d));
            here.push_back(p);
          }
          if (h + d < layout.height && mask[layout.index(t, h + d, w)]) {
            nb.push_back(layout.index(t, h + d, w));
            here.push_back(p);
          }
        }
    if (nb.empty()) continue;
    terms.push_back(ad::scale(pair_l1_mean(diff, nb, here), spec.weights[k]));
    alpha_total += spec.weights[k];
  }
  if (terms.empty()) throw NumericalError("spatial_loss: no valid neighbour pair at any hop");
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / alpha_total);
}

Var st_regularizer(const Var& pred, const Var& target, const Mask& mask, const SegmentLayout& layout,
                   const NeighborSpec& spec, double lambda_temporal, double lambda_spatial) {
  Var reg = pred.tape().scalar_constant(0.0);
  if (lambda_temporal != 0.0)
    reg = ad::add(reg, ad::scale(temporal_loss(pred, target, mask, layout), lambda_temporal));
  if (lambda_spatial != 0.0)
    reg = ad::add(reg, ad::scale(spatial_loss(pred, target, mask, layout, spec), lambda_spatial));
  return reg;
}

Var kl_loss(const Var& mu, const Var& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
    throw ShapeError("kl_loss: mu " + shape_str(mu.rows(), mu.cols()) + " vs logvar " +
                     shape_str(logvar.rows(), logvar.cols()));
  Var inner = ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::shift(logvar, 1.0));
  return ad::scale(ad::mean(inner), 0.5);
}

TokenWeights token_weights(const GridSeries<double>& future_mask, const TokenGrid& grid, double floor) {
  if (future_mask.frames == 0 || future_mask.rows == 0 || future_mask.cols == 0)
    throw ShapeError("token_weights: empty mask grid");
  if (future_mask.rows % grid.patch != 0 || future_mask.cols % grid.patch != 0)
    throw ShapeError("token_weights: patch " + std::to_string(grid.patch) + " does not divide " +
                     shape_str(future_mask.rows, future_mask.cols));
  const int steps = (future_mask.frames + grid.ratio - 1) / grid.ratio;
  const int tr = future_mask.rows / grid.patch, tc = future_mask.cols / grid.patch;
  TokenWeights out;
  out.steps = steps;
  out.tokens = tr * tc;
  out.weights.resize(Index{steps} * out.tokens);
  for (int k = 0; k < steps; ++k)
    for (int a = 0; a < tr; ++a)
      for (int b = 0; b < tc; ++b) {
        double acc = 0.0;
        int count = 0;
        for (int t = k * grid.ratio; t < std::min(future_mask.frames, (k + 1) * grid.ratio); ++t)
          for (int h = a * grid.patch; h < (a + 1) * grid.patch; ++h)
            for (int w = b * grid.patch; w < (b + 1) * grid.patch; ++w) {
              acc += future_mask.mask[future_mask.index(t, h, w)];
              ++count;
            }
        out.weights[Index{k} * out.tokens + a * tc + b] = std::max(acc / count, floor);
      }
  const double total = out.weights.sum();
  if (!(total > 0)) throw NumericalError("token_weights: all tokens carry zero weight");
  out.weights /= total;
  return out;
}

Var weighted_sq_norm(const Var& f, const TokenWeights& weights) {
  if (f.rows() != weights.weights.size())
    throw ShapeError("weighted_sq_norm: latent " + shape_str(f.rows(), f.cols()) + " vs " +
                     std::to_string(weights.weights.size()) + " token weights");
  return ad::scale(ad::weighted_sum(ad::square(f), broadcast_weights(weights, f.cols())),
                   1.0 / static_cast<double>(f.cols()));
}

Var fm_loss(const Var& v_pred, const Var& u_target, const TokenWeights& weights) {
  return weighted_sq_norm(ad::sub(v_pred, u_target), weights);
}

KStepTargets kstep_targets(const Mat& state, const Mat& z0, const Mat& z1, double t, double denom_clamp) {
  return {(z1 - state) / std::max(1.0 - t, denom_clamp), (state - z0) / std::max(t, denom_clamp)};
}

Var kstep_loss(std::span<const Var> velocities, std::span<const KStepTargets> targets, const TokenWeights& weights,
               double w1, double w0) {
  if (velocities.empty()) throw ShapeError("kstep_loss: need at least one rollout step");
  if (velocities.size() != targets.size())
    throw ShapeError("kstep_loss: " + std::to_string(velocities.size()) + " velocities vs " +
                     std::to_string(targets.size()) + " target sets");
  ad::Tape& tape = velocities[0].tape();
  Var total = tape.scalar_constant(0.0);
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    const Var& v = velocities[i];
    Var d1 = ad::sub(v, tape.constant(targets[i].toward_target));
    Var d0 = ad::sub(v, tape.constant(targets[i].toward_source));
    total = ad::add(total, ad::add(ad::scale(weighted_sq_norm(d1, weights), w1),
                                   ad::scale(weighted_sq_norm(d0, weights), w0)));
  }
  return ad::scale(total, 1.0 / static_cast<double>(velocities.size()));
}

Var endpoint_consistency(std::span<const Var> states, std::span<const Var> velocities, std::span<const double> times,
                         const TokenWeights& weights, bool masked) {
  const std::size_t k = velocities.size();
  if (k < 2) throw ShapeError("endpoint_consistency: need K >= 2 rollout steps");
  if (states.size() < k || times.size() < k)
    throw ShapeError("endpoint_consistency: states/times shorter than the velocity record");
  const TokenWeights w = masked ? weights : TokenWeights::uniform(weights.steps, weights.tokens);
  auto implied = [&](std::size_t i) {
    Var to_target = ad::add(states[i], ad::scale(velocities[i], 1.0 - times[i]));
    Var to_source = ad::sub(states[i], ad::scale(velocities[i], times[i]));
    return std::pair{to_target, to_source};
  };
  ad::Tape& tape = velocities[0].tape();
  Var total = tape.scalar_constant(0.0);
  auto prev = implied(0);
  for (std::size_t i = 1; i < k; ++i) {
    auto cur = implied(i);
    total = ad::add(total, weighted_sq_norm(ad::sub(cur.first, ad::stop_gradient(prev.first)), w));
    total = ad::add(total, weighted_sq_norm(ad::sub(cur.second, ad::stop_gradient(prev.second)), w));
    prev = cur;
  }
  return ad::scale(total, 1.0 / static_cast<double>(k - 1));
}

Var bce_logits(const Var& logits, const Mat& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw ShapeError("bce_logits: logits " + shape_str(logits.rows(), logits.cols()) + " vs targets " +
                     shape_str(targets.rows(), targets.cols()));
  Var tl = ad::mul(logits, logits.tape().constant(targets));
  return ad::mean(ad::sub(ad::softplus(logits), tl));
}

}  // namespace trajloom
