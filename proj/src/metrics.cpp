#include "trajloom/metrics.hpp"

#include <cmath>

namespace trajloom {

GridFlow flow_from_positions(const GridSeries<double>& positions) {
  positions.validate();
  if (positions.frames < 2) throw ShapeError("flow_from_positions: need at least 2 frames");
  GridFlow out{GridSeries<double>(positions.frames - 1, positions.rows, positions.cols)};
  for (int t = 1; t < positions.frames; ++t)
    for (int i = 0; i < positions.rows; ++i)
      for (int j = 0; j < positions.cols; ++j) {
        const Index a = positions.index(t, i, j), b = positions.index(t - 1, i, j);
        const Index dst = out.flow.index(t - 1, i, j);
        out.flow.coords.row(dst) = positions.coords.row(a) - positions.coords.row(b);
        out.flow.mask[dst] = positions.mask[a] && positions.mask[b];
      }
  return out;
}

namespace {

void require_pairs(bool any, const char* op) {
  if (!any) throw NumericalError(std::string(op) + ": no valid neighbour pair at any frame");
}

}  // namespace

double flow_tv(const GridSeries<double>& positions, double spacing) {
  const GridFlow gf = flow_from_positions(positions);
  const GridSeries<double>& f = gf.flow;
  if (f.rows < 2 && f.cols < 2) throw ShapeError("flow_tv: grid must have a neighbour in some direction");
  double total = 0.0;
  bool any = false;
  for (int t = 0; t < f.frames; ++t) {
    double sx = 0.0, sy = 0.0;
    long nx = 0, ny = 0;
    for (int i = 0; i < f.rows; ++i)
      for (int j = 0; j < f.cols; ++j) {
        const Index p = f.index(t, i, j);
        if (!f.mask[p]) continue;
        if (j + 1 < f.cols && f.mask[f.index(t, i, j + 1)]) {
          sx += ((f.coords.row(f.index(t, i, j + 1)) - f.coords.row(p)) / spacing).cwiseAbs().sum();
          ++nx;
        }
        if (i + 1 < f.rows && f.mask[f.index(t, i + 1, j)]) {
          sy += ((f.coords.row(f.index(t, i + 1, j)) - f.coords.row(p)) / spacing).cwiseAbs().sum();
          ++ny;
        }
      }
    any = any || nx > 0 || ny > 0;
    total += (nx ? sx / nx : 0.0) + (ny ? sy / ny : 0.0);
  }
  require_pairs(any, "flow_tv");
  return total / f.frames;
}

double div_curl_energy(const GridSeries<double>& positions, double spacing, bool literal_scaling) {
  const GridFlow gf = flow_from_positions(positions);
  const GridSeries<double>& f = gf.flow;
  const double outer = literal_scaling ? spacing : 1.0;
  double total = 0.0;
  bool any = false;
  for (int t = 0; t < f.frames; ++t) {
    double acc = 0.0;
    long n = 0;
    for (int i = 0; i + 1 < f.rows; ++i)
      for (int j = 0; j + 1 < f.cols; ++j) {
        const Index p = f.index(t, i, j), px = f.index(t, i, j + 1), py = f.index(t, i + 1, j);
        if (!(f.mask[p] && f.mask[px] && f.mask[py])) continue;
        const double dxu = (f.coords(px, 0) - f.coords(p, 0)) / spacing;
        const double dxv = (f.coords(px, 1) - f.coords(p, 1)) / spacing;
        const double dyu = (f.coords(py, 0) - f.coords(p, 0)) / spacing;
        const double dyv = (f.coords(py, 1) - f.coords(p, 1)) / spacing;
        const double div = (dxu + dyv) / outer;
        const double curl = (dxv - dyu) / outer;
        acc += div * div + curl * curl;
        ++n;
      }
    any = any || n > 0;
    total += n ? acc / n : 0.0;
  }
  require_pairs(any, "div_curl_energy");
  return total / f.frames;
}

double vepe(const Coords<double>& predicted, const Coords<double>& truth, const Mask& visibility) {
  if (predicted.rows() != truth.rows() || visibility.size() != truth.rows())
    throw ShapeError("vepe: " + std::to_string(predicted.rows()) + " predicted, " + std::to_string(truth.rows()) +
                     " reference, " + std::to_string(visibility.size()) + " visibility entries");
  double num = 0.0, den = 0.0;
  for (Index r = 0; r < truth.rows(); ++r) {
    if (!visibility[r]) continue;
    num += (predicted.row(r) - truth.row(r)).norm();
    den += 1.0;
  }
  if (den == 0) throw NumericalError("vepe: no visible point");
  return num / den;
}

ExplainedVariance explained_variance(const GridSeries<double>& values) {
  values.validate();
  ExplainedVariance out;
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> means, variances;
    for (int i = 0; i < values.rows; ++i)
      for (int j = 0; j < values.cols; ++j) {
        double w = 0.0, s = 0.0;
        for (int t = 0; t < values.frames; ++t) {
          const Index r = values.index(t, i, j);
          if (!values.mask[r]) continue;
          w += 1.0;
          s += values.coords(r, axis);
        }
        if (w == 0) continue;
        const double mu = s / w;
        double v = 0.0;
        for (int t = 0; t < values.frames; ++t) {
          const Index r = values.index(t, i, j);
          if (!values.mask[r]) continue;
          const double d = values.coords(r, axis) - mu;
          v += d * d;
        }
        means.push_back(mu);
        variances.push_back(v / w);
      }
    if (means.size() < 2) throw NumericalError("explained_variance: need at least 2 cells with visible samples");
    const double n = static_cast<double>(means.size());
    double grand = 0.0, within = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
      grand += means[k];
      within += variances[k];
    }
    grand /= n;
    within /= n;
    double between = 0.0;
    for (double m : means) between += (m - grand) * (m - grand);
    between /= n;
    const double total = between + within;
    (axis == 0 ? out.x : out.y) = total > 0 ? 100.0 * between / total : 0.0;
  }
  return out;
}

}  // namespace trajloom
