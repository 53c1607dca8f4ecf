#include "ifg/pointops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ifg {

void require_finite(const PointCloud& cloud) {
  for (const auto& p : cloud) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw std::invalid_argument("point cloud contains non-finite coordinates");
    }
  }
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t m) {
  if (cloud.empty()) throw std::invalid_argument("farthest_point_sampling: empty input");
  if (m == 0) throw std::invalid_argument("farthest_point_sampling: m must be >= 1");

  const std::size_t n = cloud.size();
  const std::size_t take = std::min(m, n);
  std::vector<std::size_t> selected;
  selected.reserve(m >= n ? n : m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> used(n, 0);

  std::size_t current = 0;
  for (std::size_t step = 0; step < take; ++step) {
    selected.push_back(current);
    used[current] = 1;
    if (step + 1 == take) break;
    const Point3 c = cloud[current];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(cloud[i], c);
      if (d < min_d2[i]) min_d2[i] = d;
      if (!used[i] && min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  // Exhaustion: duplicates of the seed can leave unselected points at distance 0.
  if (m >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i]) selected.push_back(i);
    }
  }
  return selected;
}

std::vector<std::size_t> ball_query(const PointCloud& cloud, Point3 center, double radius,
                                    std::size_t k_max) {
  if (cloud.empty()) throw std::invalid_argument("ball_query: empty input");
  if (!(radius > 0.0) || k_max == 0) throw std::invalid_argument("ball_query: radius and k_max must be positive");
  const double r2 = radius * radius;
  std::vector<std::size_t> out;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = squared_distance(cloud[i], center);
    if (d <= r2) {
      out.push_back(i);
      if (out.size() == k_max) return out;
    }
    if (d < nearest_d) {
      nearest_d = d;
      nearest = i;
    }
  }
  if (out.empty()) out.assign(k_max, nearest);
  return out;
}

bool point_in_box(const Box3D& box, Point3 p, double margin) {
  const Point3 q = to_box_frame(box, p);
  return std::abs(q.x) <= 0.5 * box.l * margin && std::abs(q.y) <= 0.5 * box.w * margin &&
         std::abs(q.z) <= 0.5 * box.h * margin;
}

std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box, double margin) {
  if (margin < 1.0) throw std::invalid_argument("points_in_box: margin must be >= 1");
  std::vector<std::size_t> out;
  const double reach = 0.5 * margin * std::sqrt(box.l * box.l + box.w * box.w + box.h * box.h);
  const double reach2 = reach * reach;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (squared_distance(cloud[i], box.center()) > reach2) continue;
    if (point_in_box(box, cloud[i], margin)) out.push_back(i);
  }
  return out;
}

}  // namespace ifg
