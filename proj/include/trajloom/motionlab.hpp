#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trajloom/rng.hpp"
#include "trajloom/trajfield.hpp"

namespace trajloom {

enum class MotionKind { translation, rotation, zoom, shear, static_scene };

// Pixel rectangle [x0, x1) x [y0, y1) hiding points during frames
// [first_frame, last_frame].
struct Occlusion {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int first_frame = 0;
  int last_frame = 0;
};

// b (-1)^t per axis, or i.i.d. N(0, b^2) per coordinate and frame when random.
struct JitterSpec {
  double amplitude_x = 0.0;
  double amplitude_y = 0.0;
  bool random = false;

  bool active() const { return amplitude_x != 0.0 || amplitude_y != 0.0; }
};

// Grid-cell rectangle [row0, row1) x [col0, col1); cells outside stay put.
struct CellRegion {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;

  bool contains(int i, int j) const { return i >= row0 && i < row1 && j >= col0 && j < col1; }
};

struct MotionSpec {
  MotionKind kind = MotionKind::static_scene;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // px / frame
  double angular_rate = 0.0;                           // rad / frame
  double zoom_rate = 0.0;                              // 1 / frame
  double shear_rate = 0.0;                             // 1 / frame, x += t k (y - cy)
  int frames = 8;
  FrameGeometry geometry{32, 32, 4};
  std::vector<Occlusion> occlusions;
  JitterSpec jitter;
  std::optional<CellRegion> moving_region;

  void validate() const;
  // Image centre in pixel coordinates.
  Eigen::Vector2d center() const {
    return {(geometry.width - 1) / 2.0, (geometry.height - 1) / 2.0};
  }
};

// Tracks start at cell centres j * s + (s - 1) / 2. A point is invisible
// while an occluder covers it or it lies outside [-0.5, W - 0.5) x [-0.5, H - 0.5).
SparseTracks<double> generate(const MotionSpec& spec, Rng& rng);

// Random single-primitive smooth motion with magnitudes suited to a small frame.
// `kinds` restricts the draw; empty means every kind.
MotionSpec random_motion(Rng& rng, const FrameGeometry& geometry, int frames, const std::vector<MotionKind>& kinds = {});

struct ToyPair {
  OffsetField<double> truth;   // x = t
  OffsetField<double> smooth;  // x = t + b
  OffsetField<double> jitter;  // x = t + b (-1)^t
};

// One-coordinate sequences replicated over a grid x grid frame with full
// visibility; the second coordinate is zero.
ToyPair toy_1d_pair(double b, int frames, int grid = 2);

struct CameraStats {
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();  // px / frame
  double zoom = 0.0;                                      // 1 / frame
  double roll = 0.0;                                      // rad / frame, clockwise on screen
  double shake = 0.0;                                     // residual RMS, px
  int width = 0;
  int height = 0;
};

CameraStats estimate_camera(const SparseTracks<double>& tracks);

struct CaptionThresholds {
  double translation = 0.002;  // normalized units / frame
  double zoom = 0.003;
  double roll = 0.003;
  double fast_translation = 0.01;
  double fast_zoom = 0.015;
  double fast_roll = 0.015;
  double shake_ratio = 1.5;    // times the largest systematic magnitude
  double shake_floor = 0.002;  // normalized units
};

std::string caption(const CameraStats& stats, const CaptionThresholds& thresholds = {});

}  // namespace trajloom
