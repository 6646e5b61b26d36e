#include "trajloom/trajfield.hpp"

namespace trajloom {

void FrameGeometry::validate() const {
  if (height <= 0 || width <= 0 || stride <= 0) throw ShapeError("frame geometry: extents and stride must be positive");
  if (height % stride != 0 || width % stride != 0)
    throw ShapeError("frame geometry: " + shape_str(height, width) + " not divisible by stride " +
                     std::to_string(stride));
}

AnchorGrid AnchorGrid::make(int height, int width) {
  AnchorGrid g;
  g.height = height;
  g.width = width;
  g.anchors.resize(Index{height} * width, 2);
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) g.anchors.row(Index{h} * width + w) = cell_anchor(h, w, 1, height, width);
  return g;
}

int track_index(int h, int w, const FrameGeometry& geometry) {
  return (h / geometry.stride) * geometry.grid_cols() + (w / geometry.stride) + 1;
}

Eigen::RowVector2d cell_anchor(int i, int j, int stride, int height, int width) {
  const double half = 0.5 * stride;
  return {2.0 * (j * stride + half) / width - 1.0, 2.0 * (i * stride + half) / height - 1.0};
}

SparseTracks<double> cell_tracks(const DenseField<double>& field, int stride) {
  FrameGeometry g{field.height(), field.width(), stride};
  g.validate();
  SparseTracks<double> out{g, GridSeries<double>(field.frames(), g.grid_rows(), g.grid_cols())};
  out.points.mask.setZero();
  const double area = static_cast<double>(stride) * stride;
  for (int t = 0; t < field.frames(); ++t)
    for (int i = 0; i < g.grid_rows(); ++i)
      for (int j = 0; j < g.grid_cols(); ++j) {
        Eigen::RowVector2d acc = Eigen::RowVector2d::Zero();
        std::uint8_t vis = 0;
        for (int dh = 0; dh < stride; ++dh)
          for (int dw = 0; dw < stride; ++dw) {
            const Index r = field.points.index(t, i * stride + dh, j * stride + dw);
            acc += field.points.coords.row(r);
            vis = std::max(vis, field.points.mask[r]);
          }
        acc /= area;
        const Index dst = out.points.index(t, i, j);
        out.points.coords(dst, 0) = pixel_coord(acc[0], g.width);
        out.points.coords(dst, 1) = pixel_coord(acc[1], g.height);
        out.points.mask[dst] = vis;
      }
  return out;
}

GridSeries<double> normalized_tracks(const SparseTracks<double>& tracks) {
  GridSeries<double> out = tracks.points;
  for (Index r = 0; r < out.size(); ++r) {
    out.coords(r, 0) = normalize_coord(tracks.points.coords(r, 0), tracks.geometry.width);
    out.coords(r, 1) = normalize_coord(tracks.points.coords(r, 1), tracks.geometry.height);
  }
  return out;
}

}  // namespace trajloom
