#pragma once

#include <cstddef>
#include <vector>

#include "ifg/geom.hpp"

namespace ifg {

using PointCloud = std::vector<Point3>;

/// Throws std::invalid_argument if any coordinate is NaN or infinite.
void require_finite(const PointCloud& cloud);

/// Greedy farthest point sampling seeded at index 0. Ties go to the lower
/// index. With m >= |cloud| every index is returned: the FPS order first, then
/// whatever remains in index order.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t m);

/// Indices within `radius` of `center` (inclusive), in index order, truncated
/// to k_max. An empty ball yields the nearest point repeated k_max times.
std::vector<std::size_t> ball_query(const PointCloud& cloud, Point3 center, double radius,
                                    std::size_t k_max);

bool point_in_box(const Box3D& box, Point3 p, double margin = 1.0);

/// Points inside `box` scaled by `margin` about its center.
std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box, double margin = 1.0);

}  // namespace ifg
