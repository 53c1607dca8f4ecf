#pragma once

// Brute-force reference implementations shared by the unit tests.

#include <cmath>
#include <random>
#include <vector>

#include "ifg/geom.hpp"

namespace oracle {

inline bool inside_bev(const ifg::Box3D& b, double x, double y) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double dx = x - b.x, dy = y - b.y;
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}

// Cell-center sampling over the union bounding square.
inline double bev_iou_grid(const ifg::Box3D& a, const ifg::Box3D& b, int n) {
  const double ra = 0.5 * std::hypot(a.l, a.w), rb = 0.5 * std::hypot(b.l, b.w);
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 0.5) * (x1 - x0) / n;
    for (int j = 0; j < n; ++j) {
      const double y = y0 + (j + 0.5) * (y1 - y0) / n;
      const bool ia = inside_bev(a, x, y), ib = inside_bev(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double iou3d_grid(const ifg::Box3D& a, const ifg::Box3D& b, int n) {
  const double ra = 0.5 * std::hypot(a.l, a.w), rb = 0.5 * std::hypot(b.l, b.w);
  const double x0 = std::min(a.x - ra, b.x - rb), x1 = std::max(a.x + ra, b.x + rb);
  const double y0 = std::min(a.y - ra, b.y - rb), y1 = std::max(a.y + ra, b.y + rb);
  const double z0 = std::min(a.bottom(), b.bottom()), z1 = std::max(a.top(), b.top());
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (i + 0.5) * (x1 - x0) / n;
    for (int j = 0; j < n; ++j) {
      const double y = y0 + (j + 0.5) * (y1 - y0) / n;
      const bool fa = inside_bev(a, x, y), fb = inside_bev(b, x, y);
      if (!fa && !fb) continue;
      for (int k = 0; k < n; ++k) {
        const double z = z0 + (k + 0.5) * (z1 - z0) / n;
        const bool ia = fa && z >= a.bottom() && z <= a.top();
        const bool ib = fb && z >= b.bottom() && z <= b.top();
        inter += ia && ib;
        uni += ia || ib;
      }
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline ifg::Box3D random_box(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), dim(0.5, 3.0), ang(-ifg::kPi, ifg::kPi);
  return ifg::make_box(pos(rng), pos(rng), 0.5 * pos(rng), dim(rng), dim(rng), dim(rng), ang(rng));
}

}  // namespace oracle
