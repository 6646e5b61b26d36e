#pragma once

#include "trajloom/trajfield.hpp"

namespace trajloom {

// Frame-to-frame displacement f_t = p_t - p_{t-1} on the coarse grid, for
// t = 1 .. T-1 (stored at frame index t - 1). valid = vis(t) AND vis(t-1).
struct GridFlow {
  GridSeries<double> flow;  // mask holds validity

  int frames() const { return flow.frames; }
};

GridFlow flow_from_positions(const GridSeries<double>& positions);

// Time-average of TV_x + TV_y, forward differences divided by the grid
// spacing, each averaged over valid neighbour pairs (an empty average is 0).
double flow_tv(const GridSeries<double>& positions, double spacing);

// Time-average of masked mean div^2 + curl^2. With `literal_scaling` the
// forward differences are divided by the spacing and div/curl again.
double div_curl_energy(const GridSeries<double>& positions, double spacing, bool literal_scaling = true);

// Visibility-weighted mean Euclidean endpoint error, in the coordinates'
// units (pixels for pixel tracks).
double vepe(const Coords<double>& predicted, const Coords<double>& truth, const Mask& visibility);

struct ExplainedVariance {
  double x = 0.0;  // percent
  double y = 0.0;
};

// Between-location share of coordinate variance, per axis, with
// visibility-weighted per-cell means and variances over time.
ExplainedVariance explained_variance(const GridSeries<double>& values);

}  // namespace trajloom
