#include <gtest/gtest.h>

#include "oracles.hpp"
#include "trajloom/metrics.hpp"
#include "trajloom/rng.hpp"

using namespace trajloom;

namespace {

GridSeries<double> random_positions(Rng& rng, int frames, int rows, int cols, double p_visible = 0.8) {
  GridSeries<double> s(frames, rows, cols);
  s.coords = 50.0 * rng.draw_uniform(s.size(), 2);
  for (Index r = 0; r < s.size(); ++r) s.mask[r] = rng.uniform() < p_visible;
  return s;
}

GridSeries<double> moving(int frames, int rows, int cols, double s, Eigen::RowVector2d (*f)(double, double, int)) {
  GridSeries<double> p(frames, rows, cols);
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) p.coords.row(p.index(t, i, j)) = f(j * s + 1.5, i * s + 1.5, t);
  return p;
}

}  // namespace

TEST(Flow, StaticAndLinear) {
  const GridSeries<double> still = moving(4, 3, 3, 8, [](double x, double y, int) { return Eigen::RowVector2d(x, y); });
  EXPECT_EQ(flow_from_positions(still).flow.coords, Coords<double>::Zero(27, 2));
  const GridSeries<double> lin =
      moving(4, 3, 3, 8, [](double x, double y, int t) { return Eigen::RowVector2d(x + 2 * t, y); });
  const GridFlow f = flow_from_positions(lin);
  EXPECT_EQ(f.frames(), 3);
  EXPECT_TRUE((f.flow.coords.col(0).array() == 2.0).all());
  EXPECT_TRUE((f.flow.coords.col(1).array() == 0.0).all());
}

TEST(Flow, VisibilityHoleInvalidatesBothAdjacentFlows) {
  GridSeries<double> p(5, 2, 2);
  p.mask[p.index(2, 1, 0)] = 0;
  const GridFlow f = flow_from_positions(p);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const bool hole = i == 1 && j == 0 && (t == 1 || t == 2);
        EXPECT_EQ(f.flow.mask[f.flow.index(t, i, j)], hole ? 0 : 1);
      }
}

TEST(Flow, NeedsTwoFrames) { EXPECT_THROW(flow_from_positions(GridSeries<double>(1, 2, 2)), ShapeError); }

TEST(FlowTV, UniformTranslationIsZero) {
  const GridSeries<double> p =
      moving(5, 4, 4, 8, [](double x, double y, int t) { return Eigen::RowVector2d(x + 1.3 * t, y - 0.7 * t); });
  EXPECT_NEAR(flow_tv(p, 8), 0.0, 1e-14);
  EXPECT_NEAR(div_curl_energy(p, 8), 0.0, 1e-28);
}

TEST(FlowTV, ShearClosedForm) {
  const GridSeries<double> p =
      moving(2, 4, 4, 32, [](double x, double y, int t) { return Eigen::RowVector2d(x + 0.1 * x * t, y); });
  EXPECT_NEAR(flow_tv(p, 32), 0.1, 1e-12);
}

TEST(DivCurl, RotationClosedFormAndSingleScaling) {
  const GridSeries<double> p = moving(2, 4, 4, 32, [](double x, double y, int t) {
    return Eigen::RowVector2d(x - 0.32 * y * t, y + 0.32 * x * t);
  });
  EXPECT_NEAR(div_curl_energy(p, 32, true), 4e-4, 1e-12);
  EXPECT_NEAR(div_curl_energy(p, 32, false), 4e-4 * 32 * 32, 1e-9);
}

TEST(Metrics, MatchBruteForceOnTwentyFields) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const GridSeries<double> p = random_positions(rng, 5, 6, 8);
    const GridSeries<double> q = random_positions(rng, 5, 6, 8);
    const double s = 0.5 + 10 * rng.uniform();
    EXPECT_NEAR(flow_tv(p, s), oracle::flow_tv(p, s), 1e-9);
    EXPECT_NEAR(div_curl_energy(p, s), oracle::div_curl(p, s, true), 1e-9);
    EXPECT_NEAR(div_curl_energy(p, s, false), oracle::div_curl(p, s, false), 1e-9);
    EXPECT_NEAR(vepe(p.coords, q.coords, p.mask), oracle::vepe(p.coords, q.coords, p.mask), 1e-9);
    const ExplainedVariance ev = explained_variance(p);
    EXPECT_NEAR(ev.x, oracle::explained(p, 0), 1e-9);
    EXPECT_NEAR(ev.y, oracle::explained(p, 1), 1e-9);
  }
}

TEST(Metrics, InvariantToInvisiblePoints) {
  Rng rng(5);
  GridSeries<double> p = random_positions(rng, 5, 6, 6, 0.7);
  GridSeries<double> q = p;
  for (Index r = 0; r < q.size(); ++r)
    if (!q.mask[r]) q.coords.row(r) << 1e6, -1e6;
  EXPECT_EQ(flow_tv(p, 4), flow_tv(q, 4));
  EXPECT_EQ(div_curl_energy(p, 4), div_curl_energy(q, 4));
  EXPECT_EQ(vepe(p.coords, Coords<double>::Zero(p.size(), 2), p.mask),
            vepe(q.coords, Coords<double>::Zero(q.size(), 2), q.mask));
  EXPECT_EQ(explained_variance(p).x, explained_variance(q).x);
}

TEST(Metrics, InvariantToConstantDisplacement) {
  Rng rng(6);
  const GridSeries<double> p = random_positions(rng, 4, 5, 5);
  GridSeries<double> q = p;
  q.coords.col(0).array() += 17.0;
  q.coords.col(1).array() -= 3.0;
  EXPECT_NEAR(flow_tv(p, 4), flow_tv(q, 4), 1e-12);
  EXPECT_NEAR(div_curl_energy(p, 4), div_curl_energy(q, 4), 1e-12);
}

TEST(Metrics, NoValidPairIsAnError) {
  GridSeries<double> p(3, 2, 2);
  p.mask.setZero();
  EXPECT_THROW(flow_tv(p, 4), NumericalError);
  EXPECT_THROW(div_curl_energy(p, 4), NumericalError);
}

TEST(Vepe, ClosedFormsAndSymmetry) {
  Coords<double> a = Coords<double>::Zero(2, 2), b = a;
  EXPECT_EQ(vepe(a, b, Mask::Ones(2)), 0.0);
  b.row(0) << 3, 0;
  b.row(1) << 100, 0;
  Mask m(2);
  m << 1, 0;
  EXPECT_EQ(vepe(a, b, m), 3.0);
  Rng rng(7);
  const Coords<double> x = rng.draw_normal(10, 2), y = rng.draw_normal(10, 2);
  EXPECT_EQ(vepe(x, y, Mask::Ones(10)), vepe(y, x, Mask::Ones(10)));
  EXPECT_THROW(vepe(x, y, Mask::Zero(10)), NumericalError);
}

TEST(ExplainedVariance, Extremes) {
  GridSeries<double> distinct(4, 2, 3);
  for (Index r = 0; r < distinct.size(); ++r) distinct.coords.row(r) << r % 6, 2.0 * (r % 6);
  EXPECT_NEAR(explained_variance(distinct).x, 100.0, 1e-9);
  EXPECT_NEAR(explained_variance(distinct).y, 100.0, 1e-9);
  GridSeries<double> same(4, 2, 3);
  for (Index r = 0; r < same.size(); ++r) same.coords.row(r) << r / 6, 0.5 * (r / 6);
  EXPECT_EQ(explained_variance(same).x, 0.0);
  GridSeries<double> dark(2, 2, 2);
  dark.mask.setZero();
  EXPECT_THROW(explained_variance(dark), NumericalError);
}
