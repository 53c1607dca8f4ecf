#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ifg/kernels.hpp"
#include "ifg/pointops.hpp"
#include "oracle.hpp"

using ifg::PointCloud;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  PointCloud c(n);
  for (auto& p : c) p = {u(rng), u(rng), u(rng)};
  return c;
}

double min_dist(const PointCloud& c, const std::vector<std::size_t>& chosen, std::size_t upto, std::size_t i) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < upto; ++k) d = std::min(d, ifg::squared_distance(c[chosen[k]], c[i]));
  return d;
}

}  // namespace

TEST(Fps, ForcedByDistances) {
  const PointCloud c{{0, 0, 0}, {1, 0, 0}, {10, 0, 0}};
  EXPECT_EQ(ifg::farthest_point_sampling(c, 2), (std::vector<std::size_t>{0, 2}));
}

TEST(Fps, ExhaustionReturnsAll) {
  const auto c = random_cloud(50, 1);
  auto idx = ifg::farthest_point_sampling(c, 50);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(idx[i], i);
  EXPECT_EQ(ifg::farthest_point_sampling(c, 80).size(), 50u);
}

TEST(Fps, EachStepIsFarthest) {
  const auto c = random_cloud(256, 2);
  const auto sel = ifg::farthest_point_sampling(c, 32);
  ASSERT_EQ(sel.size(), 32u);
  EXPECT_EQ(sel[0], 0u);
  for (std::size_t step = 1; step < sel.size(); ++step) {
    const double chosen = min_dist(c, sel, step, sel[step]);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::find(sel.begin(), sel.begin() + static_cast<long>(step) + 1, i) != sel.begin() + static_cast<long>(step) + 1)
        continue;
      EXPECT_GE(chosen, min_dist(c, sel, step, i)) << "step " << step << " point " << i;
    }
  }
}

TEST(Fps, PermutationKeepsFullSet) {
  auto c = random_cloud(40, 3);
  auto p = c;
  std::reverse(p.begin(), p.end());
  EXPECT_EQ(ifg::farthest_point_sampling(c, 40).size(), ifg::farthest_point_sampling(p, 40).size());
}

TEST(Fps, EmptyCloudThrows) { EXPECT_THROW(ifg::farthest_point_sampling({}, 3), std::invalid_argument); }

TEST(BallQuery, RadiusThreshold) {
  const PointCloud c{{0.5, 0, 0}, {2, 0, 0}};
  EXPECT_EQ(ifg::ball_query(c, {0, 0, 0}, 1.0, 8), std::vector<std::size_t>{0});
}

TEST(BallQuery, TruncatesInIndexOrder) {
  const auto c = random_cloud(10, 4, 0.1);
  EXPECT_EQ(ifg::ball_query(c, {0, 0, 0}, 1.0, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(BallQuery, EmptyBallRepeatsNearest) {
  const auto c = random_cloud(30, 5, 5.0);
  const ifg::Point3 q{20, 20, 20};
  std::size_t nearest = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (ifg::squared_distance(c[i], q) < ifg::squared_distance(c[nearest], q)) nearest = i;
  EXPECT_EQ(ifg::ball_query(c, q, 0.5, 6), std::vector<std::size_t>(6, nearest));
}

TEST(BallQuery, AllResultsSatisfyPredicate) {
  const auto c = random_cloud(300, 6);
  for (const auto& center : {c[0], c[10], c[100]}) {
    for (auto i : ifg::ball_query(c, center, 0.4, 32)) EXPECT_LE(std::sqrt(ifg::squared_distance(c[i], center)), 0.4);
  }
}

TEST(BallQuery, EmptyCloudThrows) { EXPECT_THROW(ifg::ball_query({}, {0, 0, 0}, 1.0, 4), std::invalid_argument); }

TEST(PointsInBox, CenterAndFar) {
  const auto b = ifg::make_box(1, 2, 3, 4, 2, 1.5, 0.6);
  EXPECT_TRUE(ifg::point_in_box(b, {1, 2, 3}));
  EXPECT_FALSE(ifg::point_in_box(b, {1 + 2 * 4 * std::cos(0.6), 2 + 2 * 4 * std::sin(0.6), 3}));
}

TEST(PointsInBox, MatchesLocalFrameOracle) {
  const auto b = ifg::make_box(0.3, -0.2, 0.1, 1.6, 0.9, 1.2, 0.9);
  const auto c = random_cloud(1000, 7);
  for (double margin : {1.0, 1.3}) {
    std::vector<std::size_t> expected;
    const double co = std::cos(b.theta), si = std::sin(b.theta);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double dx = c[i].x - b.x, dy = c[i].y - b.y, dz = c[i].z - b.z;
      const double lx = co * dx + si * dy, ly = -si * dx + co * dy;
      if (std::abs(lx) <= 0.5 * margin * b.l && std::abs(ly) <= 0.5 * margin * b.w && std::abs(dz) <= 0.5 * margin * b.h)
        expected.push_back(i);
    }
    EXPECT_FALSE(expected.empty());
    EXPECT_EQ(ifg::points_in_box(c, b, margin), expected);
  }
}

TEST(RequireFinite, RejectsNan) {
  EXPECT_THROW(ifg::require_finite({{0, NAN, 0}}), std::invalid_argument);
  EXPECT_NO_THROW(ifg::require_finite({{0, 1, 0}}));
}

TEST(Kernels, ParallelMatchesSerial) {
  std::mt19937_64 rng(8);
  std::vector<ifg::Box3D> a, b;
  for (int i = 0; i < 60; ++i) a.push_back(oracle::random_box(rng, 3));
  for (int i = 0; i < 40; ++i) b.push_back(oracle::random_box(rng, 3));
  for (auto kind : {ifg::kernels::IouKind::kBev, ifg::kernels::IouKind::k3d}) {
    const auto p = ifg::kernels::iou_table(a, b, kind);
    const auto s = ifg::kernels::serial::iou_table(a, b, kind);
    EXPECT_EQ(p.values, s.values);
    EXPECT_EQ(p.rows, 60u);
    EXPECT_EQ(p.cols, 40u);
  }
  const auto cloud = random_cloud(2000, 9, 3.0);
  EXPECT_EQ(ifg::kernels::points_in_boxes(cloud, a, 1.2), ifg::kernels::serial::points_in_boxes(cloud, a, 1.2));
  const auto centers = ifg::farthest_point_sampling(cloud, 64);
  EXPECT_EQ(ifg::kernels::group_points(cloud, centers, 0.4, 16),
            ifg::kernels::serial::group_points(cloud, centers, 0.4, 16));
  std::vector<double> scores(a.size());
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& s : scores) s = u(rng);
  EXPECT_EQ(ifg::kernels::nms(a, scores, 0.2, 30), ifg::kernels::serial::nms(a, scores, 0.2, 30));
  EXPECT_EQ(ifg::kernels::nms(a, scores, 0.2, 30), ifg::nms(a, scores, 0.2, 30));
  EXPECT_GE(ifg::kernels::max_threads(), 1);
}
