#include "trajloom/motionlab.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace trajloom {

void MotionSpec::validate() const {
  geometry.validate();
  if (frames < 1) throw ConfigError("motion: frames must be >= 1");
  const bool finite = velocity.allFinite() && std::isfinite(angular_rate) && std::isfinite(zoom_rate) &&
                      std::isfinite(shear_rate) && std::isfinite(jitter.amplitude_x) &&
                      std::isfinite(jitter.amplitude_y);
  if (!finite) throw ConfigError("motion: parameters must be finite");
  if (zoom_rate <= -1.0) throw ConfigError("motion: zoom rate must exceed -1");
  for (const Occlusion& o : occlusions) {
    if (!(o.x0 >= 0 && o.x0 < o.x1 && o.x1 <= geometry.width && o.y0 >= 0 && o.y0 < o.y1 && o.y1 <= geometry.height))
      throw ConfigError("motion: occlusion rectangle must lie inside the frame");
    if (o.first_frame < 0 || o.last_frame < o.first_frame)
      throw ConfigError("motion: occlusion frame range is empty");
  }
  if (moving_region) {
    const CellRegion& r = *moving_region;
    if (r.row0 < 0 || r.col0 < 0 || r.row1 > geometry.grid_rows() || r.col1 > geometry.grid_cols() ||
        r.row0 >= r.row1 || r.col0 >= r.col1)
      throw ConfigError("motion: moving region must be a non-empty cell rectangle inside the grid");
  }
}

namespace {

Eigen::Vector2d base_position(const MotionSpec& s, const Eigen::Vector2d& p0, int t) {
  const Eigen::Vector2d c = s.center();
  switch (s.kind) {
    case MotionKind::translation:
      return p0 + t * s.velocity;
    case MotionKind::rotation: {
      const double a = s.angular_rate * t;
      const Eigen::Vector2d q = p0 - c;
      return c + Eigen::Vector2d(std::cos(a) * q.x() - std::sin(a) * q.y(), std::sin(a) * q.x() + std::cos(a) * q.y());
    }
    case MotionKind::zoom:
      return c + std::pow(1.0 + s.zoom_rate, t) * (p0 - c);
    case MotionKind::shear:
      return {p0.x() + t * s.shear_rate * (p0.y() - c.y()), p0.y()};
    case MotionKind::static_scene:
      break;
  }
  return p0;
}

bool occluded(const MotionSpec& s, const Eigen::Vector2d& p, int t) {
  for (const Occlusion& o : s.occlusions)
    if (t >= o.first_frame && t <= o.last_frame && p.x() >= o.x0 && p.x() < o.x1 && p.y() >= o.y0 && p.y() < o.y1)
      return true;
  return false;
}

}  // namespace

SparseTracks<double> generate(const MotionSpec& spec, Rng& rng) {
  spec.validate();
  const FrameGeometry& g = spec.geometry;
  SparseTracks<double> out;
  out.geometry = g;
  out.points = GridSeries<double>(spec.frames, g.grid_rows(), g.grid_cols());
  const double half = (g.stride - 1) / 2.0;
  for (int t = 0; t < spec.frames; ++t) {
    Eigen::Vector2d jit = Eigen::Vector2d::Zero();
    if (spec.jitter.active() && !spec.jitter.random) {
      const double sign = t % 2 == 0 ? 1.0 : -1.0;
      jit = sign * Eigen::Vector2d(spec.jitter.amplitude_x, spec.jitter.amplitude_y);
    }
    for (int i = 0; i < g.grid_rows(); ++i)
      for (int j = 0; j < g.grid_cols(); ++j) {
        const Eigen::Vector2d p0(j * g.stride + half, i * g.stride + half);
        const bool moves = !spec.moving_region || spec.moving_region->contains(i, j);
        Eigen::Vector2d p = moves ? base_position(spec, p0, t) : p0;
        if (spec.jitter.active()) {
          if (spec.jitter.random)
            p += Eigen::Vector2d(spec.jitter.amplitude_x * rng.normal(), spec.jitter.amplitude_y * rng.normal());
          else
            p += jit;
        }
        const Index r = out.points.index(t, i, j);
        out.points.coords.row(r) = p.transpose();
        const bool inside = p.x() >= -0.5 && p.x() < g.width - 0.5 && p.y() >= -0.5 && p.y() < g.height - 0.5;
        out.points.mask[r] = inside && !occluded(spec, p, t);
      }
  }
  return out;
}

MotionSpec random_motion(Rng& rng, const FrameGeometry& geometry, int frames, const std::vector<MotionKind>& kinds) {
  MotionSpec s;
  s.geometry = geometry;
  s.frames = frames;
  const double scale = std::min(geometry.width, geometry.height) / 32.0;
  static const std::vector<MotionKind> all{MotionKind::translation, MotionKind::rotation, MotionKind::zoom,
                                           MotionKind::shear, MotionKind::static_scene};
  const std::vector<MotionKind>& pool = kinds.empty() ? all : kinds;
  const MotionKind kind = pool[rng.next_u64() % pool.size()];
  const double mag = 0.2 + 0.8 * rng.uniform();
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  switch (kind) {
    case MotionKind::translation: {
      s.kind = MotionKind::translation;
      const double a = 2.0 * std::numbers::pi * rng.uniform();
      s.velocity = mag * scale * Eigen::Vector2d(std::cos(a), std::sin(a));
      break;
    }
    case MotionKind::rotation:
      s.kind = MotionKind::rotation;
      s.angular_rate = sign * 0.04 * mag;
      break;
    case MotionKind::zoom:
      s.kind = MotionKind::zoom;
      s.zoom_rate = sign * 0.04 * mag;
      break;
    case MotionKind::shear:
      s.kind = MotionKind::shear;
      s.shear_rate = sign * 0.04 * mag;
      break;
    case MotionKind::static_scene:
      s.kind = MotionKind::static_scene;
      break;
  }
  return s;
}

ToyPair toy_1d_pair(double b, int frames, int grid) {
  if (frames < 3) throw ShapeError("toy_1d_pair: need at least 3 frames");
  if (grid < 1) throw ShapeError("toy_1d_pair: grid must be >= 1");
  ToyPair out;
  for (OffsetField<double>* f : {&out.truth, &out.smooth, &out.jitter}) f->points = GridSeries<double>(frames, grid, grid);
  for (int t = 0; t < frames; ++t) {
    const double sign = t % 2 == 0 ? 1.0 : -1.0;
    for (Index p = 0; p < out.truth.points.points(); ++p) {
      const Index r = Index{t} * out.truth.points.points() + p;
      out.truth.points.coords(r, 0) = t;
      out.smooth.points.coords(r, 0) = t + b;
      out.jitter.points.coords(r, 0) = t + b * sign;
    }
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

CameraStats estimate_camera(const SparseTracks<double>& tracks) {
  const GridSeries<double>& s = tracks.points;
  s.validate();
  if (s.frames < 2) throw ShapeError("estimate_camera: need at least 2 frames");
  const Eigen::Vector2d c((tracks.geometry.width - 1) / 2.0, (tracks.geometry.height - 1) / 2.0);
  CameraStats out;
  out.width = tracks.geometry.width;
  out.height = tracks.geometry.height;
  for (int t = 1; t < s.frames; ++t) {
    std::vector<Index> rows;
    for (Index p = 0; p < s.points(); ++p) {
      const Index a = Index{t - 1} * s.points() + p, b = Index{t} * s.points() + p;
      if (s.mask[a] && s.mask[b]) rows.push_back(p);
    }
    if (rows.size() < 4)
      throw NumericalError("estimate_camera: fewer than 4 visible tracks between frames " + std::to_string(t - 1) +
                           " and " + std::to_string(t));
    auto prev = [&](Index p) { return Eigen::Vector2d(s.coords.row(Index{t - 1} * s.points() + p).transpose()); };
    auto cur = [&](Index p) { return Eigen::Vector2d(s.coords.row(Index{t} * s.points() + p).transpose()); };
    std::vector<double> dx, dy;
    for (Index p : rows) {
      const Eigen::Vector2d d = cur(p) - prev(p);
      dx.push_back(d.x());
      dy.push_back(d.y());
    }
    const Eigen::Vector2d tr(median(dx), median(dy));
    std::vector<double> zooms, rolls;
    for (Index p : rows) {
      const Eigen::Vector2d q = prev(p) - c;
      if (q.norm() < 0.5) continue;
      const Eigen::Vector2d q1 = cur(p) - tr - c;
      const std::complex<double> ratio = std::complex<double>(q1.x(), q1.y()) / std::complex<double>(q.x(), q.y());
      zooms.push_back(std::abs(ratio) - 1.0);
      rolls.push_back(std::arg(ratio));
    }
    const double zoom = zooms.empty() ? 0.0 : median(zooms);
    const double roll = rolls.empty() ? 0.0 : median(rolls);
    const std::complex<double> model = (1.0 + zoom) * std::polar(1.0, roll);
    double sq = 0.0;
    for (Index p : rows) {
      const Eigen::Vector2d q = prev(p) - c;
      const std::complex<double> mq = model * std::complex<double>(q.x(), q.y());
      const Eigen::Vector2d predicted = c + tr + Eigen::Vector2d(mq.real(), mq.imag());
      sq += (cur(p) - predicted).squaredNorm();
    }
    out.translation += tr;
    out.zoom += zoom;
    out.roll += roll;
    out.shake += std::sqrt(sq / static_cast<double>(rows.size()));
  }
  const double pairs = s.frames - 1;
  out.translation /= pairs;
  out.zoom /= pairs;
  out.roll /= pairs;
  out.shake /= pairs;
  return out;
}

std::string caption(const CameraStats& stats, const CaptionThresholds& th) {
  if (stats.width <= 0 || stats.height <= 0) throw ShapeError("caption: frame size must be positive");
  const Eigen::Vector2d tn(2.0 * stats.translation.x() / stats.width, 2.0 * stats.translation.y() / stats.height);
  const double trans = tn.norm();
  const double zoom = std::abs(stats.zoom);
  const double roll = std::abs(stats.roll);
  const double shake = 2.0 * stats.shake / stats.width;
  const double systematic = std::max({trans, zoom, roll});
  if (shake > th.shake_floor && shake > th.shake_ratio * systematic) return "handheld camera";

  const double scores[] = {trans / th.translation, zoom / th.zoom, roll / th.roll};
  const int best = static_cast<int>(std::max_element(std::begin(scores), std::end(scores)) - std::begin(scores));
  if (!(scores[best] > 1.0)) return "static camera";
  std::string phrase;
  bool fast = false;
  if (best == 0) {
    if (std::abs(tn.x()) >= std::abs(tn.y()))
      phrase = tn.x() > 0 ? "camera pans right" : "camera pans left";
    else
      phrase = tn.y() > 0 ? "camera tilts down" : "camera tilts up";
    fast = trans >= th.fast_translation;
  } else if (best == 1) {
    phrase = stats.zoom > 0 ? "camera zooms in" : "camera zooms out";
    fast = zoom >= th.fast_zoom;
  } else {
    phrase = stats.roll > 0 ? "camera rolls clockwise" : "camera rolls counterclockwise";
    fast = roll >= th.fast_roll;
  }
  return phrase + (fast ? ", fast" : ", slow");
}

}  // namespace trajloom
