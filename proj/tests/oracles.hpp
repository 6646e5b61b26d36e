#pragma once

// Naive reference implementations used to check the library. They work on
// plain nested vectors and share no code with src/.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "trajloom/trajfield.hpp"

namespace oracle {

struct Sample {
  double x = 0, y = 0;
  bool visible = true;
};

// field[t][i][j]
using Field = std::vector<std::vector<std::vector<Sample>>>;

inline Field unpack(const trajloom::GridSeries<double>& s) {
  Field f(s.frames, std::vector<std::vector<Sample>>(s.rows, std::vector<Sample>(s.cols)));
  for (int t = 0; t < s.frames; ++t)
    for (int i = 0; i < s.rows; ++i)
      for (int j = 0; j < s.cols; ++j) {
        const auto r = s.index(t, i, j);
        f[t][i][j] = {s.coords(r, 0), s.coords(r, 1), s.mask[r] != 0};
      }
  return f;
}

inline Field flow(const Field& p) {
  Field f;
  for (std::size_t t = 1; t < p.size(); ++t) {
    f.push_back(p[t]);
    for (std::size_t i = 0; i < p[t].size(); ++i)
      for (std::size_t j = 0; j < p[t][i].size(); ++j) {
        f.back()[i][j].x = p[t][i][j].x - p[t - 1][i][j].x;
        f.back()[i][j].y = p[t][i][j].y - p[t - 1][i][j].y;
        f.back()[i][j].visible = p[t][i][j].visible && p[t - 1][i][j].visible;
      }
  }
  return f;
}

inline double flow_tv(const trajloom::GridSeries<double>& positions, double s) {
  const Field f = flow(unpack(positions));
  double sum = 0;
  int pairs = 0;
  for (const auto& frame : f) {
    double tvx = 0, tvy = 0;
    int nx = 0, ny = 0;
    const std::size_t rows = frame.size(), cols = frame[0].size();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j + 1 < cols; ++j) {
        const Sample &a = frame[i][j], &b = frame[i][j + 1];
        if (!a.visible || !b.visible) continue;
        tvx += std::abs(b.x - a.x) / s + std::abs(b.y - a.y) / s;
        ++nx;
      }
    for (std::size_t i = 0; i + 1 < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const Sample &a = frame[i][j], &b = frame[i + 1][j];
        if (!a.visible || !b.visible) continue;
        tvy += std::abs(b.x - a.x) / s + std::abs(b.y - a.y) / s;
        ++ny;
      }
    if (nx) sum += tvx / nx;
    if (ny) sum += tvy / ny;
    pairs += nx + ny;
  }
  if (!pairs) throw std::runtime_error("oracle flow_tv: no pairs");
  return sum / f.size();
}

inline double div_curl(const trajloom::GridSeries<double>& positions, double s, bool literal) {
  const Field f = flow(unpack(positions));
  double sum = 0;
  int cells = 0;
  for (const auto& frame : f) {
    double e = 0;
    int n = 0;
    for (std::size_t i = 0; i + 1 < frame.size(); ++i)
      for (std::size_t j = 0; j + 1 < frame[i].size(); ++j) {
        const Sample &c = frame[i][j], &r = frame[i][j + 1], &d = frame[i + 1][j];
        if (!c.visible || !r.visible || !d.visible) continue;
        double div = (r.x - c.x) / s + (d.y - c.y) / s;
        double curl = (r.y - c.y) / s - (d.x - c.x) / s;
        if (literal) {
          div /= s;
          curl /= s;
        }
        e += div * div + curl * curl;
        ++n;
      }
    if (n) sum += e / n;
    cells += n;
  }
  if (!cells) throw std::runtime_error("oracle div_curl: no cells");
  return sum / f.size();
}

inline double vepe(const trajloom::Coords<double>& a, const trajloom::Coords<double>& b, const trajloom::Mask& m) {
  double num = 0;
  int n = 0;
  for (int r = 0; r < a.rows(); ++r)
    if (m[r]) {
      num += std::hypot(a(r, 0) - b(r, 0), a(r, 1) - b(r, 1));
      ++n;
    }
  return num / n;
}

// Explained variance through the law of total variance on the pooled
// cell-balanced sample: between = Var(mu_n), within = E[sigma_n^2].
inline double explained(const trajloom::GridSeries<double>& s, int axis) {
  const Field f = unpack(s);
  std::vector<double> mu, var;
  for (int i = 0; i < s.rows; ++i)
    for (int j = 0; j < s.cols; ++j) {
      std::vector<double> xs;
      for (int t = 0; t < s.frames; ++t)
        if (f[t][i][j].visible) xs.push_back(axis == 0 ? f[t][i][j].x : f[t][i][j].y);
      if (xs.empty()) continue;
      double m = 0;
      for (double x : xs) m += x;
      m /= xs.size();
      double v = 0;
      for (double x : xs) v += (x - m) * (x - m);
      mu.push_back(m);
      var.push_back(v / xs.size());
    }
  double g = 0, w = 0, b = 0;
  for (std::size_t k = 0; k < mu.size(); ++k) g += mu[k] / mu.size();
  for (std::size_t k = 0; k < mu.size(); ++k) {
    b += (mu[k] - g) * (mu[k] - g) / mu.size();
    w += var[k] / mu.size();
  }
  return b + w > 0 ? 100.0 * b / (b + w) : 0.0;
}

}  // namespace oracle
