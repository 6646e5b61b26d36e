#pragma once

#include <cmath>
#include <utility>

#include "trajloom/core.hpp"

namespace trajloom {

// Frame size and tracking-grid stride, in pixels.
struct FrameGeometry {
  int height = 0;
  int width = 0;
  int stride = 32;

  int grid_rows() const { return height / stride; }
  int grid_cols() const { return width / stride; }
  int track_count() const { return grid_rows() * grid_cols(); }
  void validate() const;
  bool operator==(const FrameGeometry&) const = default;
};

// T x rows x cols samples of 2-d coordinates with a binary mask.
// Sample (t, i, j) lives at row (t * rows + i) * cols + j.
template <typename Scalar>
struct GridSeries {
  int frames = 0;
  int rows = 0;
  int cols = 0;
  Coords<Scalar> coords;
  Mask mask;

  GridSeries() = default;
  GridSeries(int t, int r, int c)
      : frames(t), rows(r), cols(c), coords(Coords<Scalar>::Zero(Index{t} * r * c, 2)), mask(Mask::Ones(Index{t} * r * c)) {}

  Index points() const { return Index{rows} * cols; }
  Index index(int t, int i, int j) const { return (Index{t} * rows + i) * cols + j; }
  Index size() const { return coords.rows(); }
  void validate() const;

  template <typename Other>
  GridSeries<Other> cast() const {
    GridSeries<Other> out;
    out.frames = frames;
    out.rows = rows;
    out.cols = cols;
    out.coords = coords.template cast<Other>();
    out.mask = mask;
    return out;
  }
  bool operator==(const GridSeries& o) const {
    return frames == o.frames && rows == o.rows && cols == o.cols && coords == o.coords && (mask == o.mask).all();
  }
};

// Per-grid-cell point tracks in pixel coordinates (x, y).
template <typename Scalar>
struct SparseTracks {
  FrameGeometry geometry;
  GridSeries<Scalar> points;  // rows = H/s, cols = W/s

  int frames() const { return points.frames; }
  Index track_count() const { return points.points(); }
};

// Dense normalized coordinate field D and mask M on the pixel grid.
// `stride` is the cell size over which the field is piecewise constant.
template <typename Scalar>
struct DenseField {
  GridSeries<Scalar> points;  // rows = H, cols = W
  int stride = 1;

  int frames() const { return points.frames; }
  int height() const { return points.rows; }
  int width() const { return points.cols; }
};

// Offsets X = D - G from the pixel-center anchors.
template <typename Scalar>
struct OffsetField {
  GridSeries<Scalar> points;
  int stride = 1;

  int frames() const { return points.frames; }
  int height() const { return points.rows; }
  int width() const { return points.cols; }
};

// Normalized pixel-center anchors G(h, w) for an H x W frame.
struct AnchorGrid {
  int height = 0;
  int width = 0;
  Coords<double> anchors;  // row h * W + w

  static AnchorGrid make(int height, int width);
  Eigen::RowVector2d operator()(int h, int w) const { return anchors.row(Index{h} * width + w); }
};

// 1-based coarse-grid track index: floor(h/s) * W_c + floor(w/s) + 1.
int track_index(int h, int w, const FrameGeometry& geometry);

inline double normalize_coord(double pixel, int extent) { return 2.0 * (pixel + 0.5) / extent - 1.0; }
inline double pixel_coord(double normalized, int extent) { return (normalized + 1.0) * extent / 2.0 - 0.5; }

// Normalized anchor of the centre of an s x s cell (i, j); equals G for s = 1.
Eigen::RowVector2d cell_anchor(int i, int j, int stride, int height, int width);

// Smallest-ulp search for an offset whose re-addition restores `absolute`
// exactly in Scalar precision; falls back to the rounded difference.
template <typename Scalar>
Scalar encode_offset(Scalar absolute, double anchor) {
  const Scalar first = static_cast<Scalar>(static_cast<double>(absolute) - anchor);
  auto restores = [&](Scalar x) { return static_cast<Scalar>(static_cast<double>(x) + anchor) == absolute; };
  if (restores(first)) return first;
  Scalar up = first, down = first;
  for (int k = 0; k < 8; ++k) {
    up = std::nextafter(up, std::numeric_limits<Scalar>::infinity());
    if (restores(up)) return up;
    down = std::nextafter(down, -std::numeric_limits<Scalar>::infinity());
    if (restores(down)) return down;
  }
  return first;
}

template <typename Scalar>
Scalar decode_offset(Scalar offset, double anchor) {
  return static_cast<Scalar>(static_cast<double>(offset) + anchor);
}

// Coordinates of a (possibly coarse) grid series relative to cell anchors.
// `forward` maps absolute-normalized -> offset; otherwise the inverse.
template <typename Scalar>
GridSeries<Scalar> apply_cell_anchors(const GridSeries<Scalar>& in, int stride, int height, int width, bool forward) {
  GridSeries<Scalar> out = in;
  for (int i = 0; i < in.rows; ++i)
    for (int j = 0; j < in.cols; ++j) {
      const Eigen::RowVector2d g = cell_anchor(i, j, stride, height, width);
      for (int t = 0; t < in.frames; ++t) {
        const Index r = in.index(t, i, j);
        for (int c = 0; c < 2; ++c)
          out.coords(r, c) = forward ? encode_offset<Scalar>(in.coords(r, c), g[c])
                                     : decode_offset<Scalar>(in.coords(r, c), g[c]);
      }
    }
  return out;
}

template <typename Scalar>
DenseField<Scalar> rasterize(const SparseTracks<Scalar>& tracks) {
  const FrameGeometry& g = tracks.geometry;
  g.validate();
  tracks.points.validate();
  if (tracks.points.rows != g.grid_rows() || tracks.points.cols != g.grid_cols())
    throw ShapeError("rasterize: track grid " + shape_str(tracks.points.rows, tracks.points.cols) +
                     " does not match geometry " + shape_str(g.grid_rows(), g.grid_cols()));
  DenseField<Scalar> out;
  out.stride = g.stride;
  out.points = GridSeries<Scalar>(tracks.frames(), g.height, g.width);
  const int wc = g.grid_cols();
  for (int t = 0; t < tracks.frames(); ++t)
    for (int h = 0; h < g.height; ++h)
      for (int w = 0; w < g.width; ++w) {
        const int n = track_index(h, w, g) - 1;
        const Index src = tracks.points.index(t, n / wc, n % wc);
        const Index dst = out.points.index(t, h, w);
        out.points.coords(dst, 0) = static_cast<Scalar>(normalize_coord(tracks.points.coords(src, 0), g.width));
        out.points.coords(dst, 1) = static_cast<Scalar>(normalize_coord(tracks.points.coords(src, 1), g.height));
        out.points.mask[dst] = tracks.points.mask[src];
      }
  return out;
}

template <typename Scalar>
OffsetField<Scalar> to_offsets(const DenseField<Scalar>& field) {
  return {apply_cell_anchors(field.points, 1, field.height(), field.width(), true), field.stride};
}

template <typename Scalar>
DenseField<Scalar> to_absolute(const OffsetField<Scalar>& offsets) {
  return {apply_cell_anchors(offsets.points, 1, offsets.height(), offsets.width(), false), offsets.stride};
}

// Frame-contiguous split into [0, past) and [past, past + future).
template <typename Scalar>
std::pair<GridSeries<Scalar>, GridSeries<Scalar>> split_frames(const GridSeries<Scalar>& s, int past, int future) {
  if (past <= 0 || future <= 0 || past + future != s.frames)
    throw ShapeError("split_windows: " + std::to_string(past) + " + " + std::to_string(future) + " != " +
                     std::to_string(s.frames) + " frames (both windows must be non-empty)");
  auto take = [&](int first, int count) {
    GridSeries<Scalar> out(count, s.rows, s.cols);
    const Index n = s.points();
    out.coords = s.coords.middleRows(first * n, count * n);
    out.mask = s.mask.segment(first * n, count * n);
    return out;
  };
  return {take(0, past), take(past, future)};
}

template <typename Field>
std::pair<Field, Field> split_windows(const Field& field, int past, int future) {
  auto [a, b] = split_frames(field.points, past, future);
  return {Field{std::move(a), field.stride}, Field{std::move(b), field.stride}};
}

template <typename Scalar>
GridSeries<Scalar> concat_frames(const GridSeries<Scalar>& a, const GridSeries<Scalar>& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("concat_frames: grids " + shape_str(a.rows, a.cols) + " vs " + shape_str(b.rows, b.cols));
  GridSeries<Scalar> out(a.frames + b.frames, a.rows, a.cols);
  out.coords << a.coords, b.coords;
  out.mask << a.mask, b.mask;
  return out;
}

// Normalized dense field -> per-cell mean positions in pixels on the stride
// grid. A cell is visible when any of its pixels is.
SparseTracks<double> cell_tracks(const DenseField<double>& field, int stride);

// Pixel tracks -> normalized coordinates on the same coarse grid.
GridSeries<double> normalized_tracks(const SparseTracks<double>& tracks);

template <typename Scalar>
void GridSeries<Scalar>::validate() const {
  const Index n = Index{frames} * rows * cols;
  if (coords.rows() != n || mask.size() != n)
    throw ShapeError("grid series: expected " + std::to_string(n) + " samples, have " + std::to_string(coords.rows()) +
                     " coords / " + std::to_string(mask.size()) + " mask");
  if ((mask > 1).any()) throw Error("grid series: mask must be binary");
}

}  // namespace trajloom
