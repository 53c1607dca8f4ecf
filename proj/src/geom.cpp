#include "ifg/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ifg {

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * kPi;
  double t = theta - two_pi * std::floor((theta + kPi) / two_pi);
  if (t >= kPi) t -= two_pi;
  if (t < -kPi) t += two_pi;
  return t;
}

bool is_valid(const Box3D& b) {
  const bool finite = std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.z) &&
                      std::isfinite(b.l) && std::isfinite(b.w) && std::isfinite(b.h) &&
                      std::isfinite(b.theta);
  return finite && b.l > 0.0 && b.w > 0.0 && b.h > 0.0;
}

Box3D make_box(double x, double y, double z, double l, double w, double h, double theta) {
  Box3D b{x, y, z, l, w, h, wrap_angle(theta)};
  if (!is_valid(b)) throw std::invalid_argument("box dims must be positive and finite");
  return b;
}

Point3 to_box_frame(const Box3D& box, Point3 p) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = p.x - box.x, dy = p.y - box.y;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - box.z};
}

Point3 from_box_frame(const Box3D& box, Point3 q) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  return {box.x + c * q.x - s * q.y, box.y + s * q.x + c * q.y, box.z + q.z};
}

std::array<Point2, 4> bev_footprint(const Box3D& box) {
  const double hl = 0.5 * box.l, hw = 0.5 * box.w;
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  constexpr std::array<std::array<double, 2>, 4> signs{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const double lx = signs[i][0] * hl, ly = signs[i][1] * hw;
    out[i] = {box.x + c * lx - s * ly, box.y + s * lx + c * ly};
  }
  return out;
}

std::array<Point3, 8> box_corners(const Box3D& box) {
  const auto fp = bev_footprint(box);
  std::array<Point3, 8> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {fp[i].x, fp[i].y, box.bottom()};
    out[i + 4] = {fp[i].x, fp[i].y, box.top()};
  }
  return out;
}

double polygon_area(std::span<const Point2> poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    acc += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
  }
  return 0.5 * acc;
}

namespace {

double side(Point2 a, Point2 b, Point2 p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

Point2 line_intersect(Point2 p, Point2 q, double sp, double sq) {
  const double t = sp / (sp - sq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip) {
  std::vector<Point2> out(subject.begin(), subject.end());
  std::vector<Point2> input;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % clip.size()];
    input.swap(out);
    out.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2 cur = input[i];
      const Point2 prev = input[(i + input.size() - 1) % input.size()];
      const double sc = side(a, b, cur);
      const double sp = side(a, b, prev);
      if (sc >= 0.0) {
        if (sp < 0.0) out.push_back(line_intersect(prev, cur, sp, sc));
        out.push_back(cur);
      } else if (sp >= 0.0) {
        out.push_back(line_intersect(prev, cur, sp, sc));
      }
    }
  }
  return out;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  // Bounding-circle reject keeps disjoint pairs exact zeros.
  const double ra = 0.5 * std::hypot(a.l, a.w), rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.x - b.x, a.y - b.y) > ra + rb) return 0.0;
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const auto poly = clip_convex(fa, fb);
  const double area = polygon_area(poly);
  return area > kGeomEps ? area : 0.0;
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.l * a.w + b.l * b.w - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double dz = std::min(a.top(), b.top()) - std::max(a.bottom(), b.bottom());
  if (dz <= 0.0) return 0.0;
  const double area = bev_intersection_area(a, b);
  const double inter = area * dz;
  if (inter <= kGeomEps) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

RegressionTarget RegressionTarget::from_array(std::span<const double> v) {
  if (v.size() != kSize) throw std::invalid_argument("regression target needs 7 values");
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

RegressionTarget encode_box(const Box3D& gt, const Box3D& anchor) {
  const double diag = std::hypot(anchor.l, anchor.w);
  return {
      (gt.x - anchor.x) / diag,
      (gt.y - anchor.y) / diag,
      (gt.z - anchor.z) / anchor.h,
      std::log(gt.w / anchor.w),
      std::log(gt.l / anchor.l),
      std::log(gt.h / anchor.h),
      wrap_angle(gt.theta - anchor.theta),
  };
}

Box3D decode_box(const RegressionTarget& t, const Box3D& anchor) {
  const double diag = std::hypot(anchor.l, anchor.w);
  Box3D out;
  out.x = t.tx * diag + anchor.x;
  out.y = t.ty * diag + anchor.y;
  out.z = t.tz * anchor.h + anchor.z;
  out.w = std::exp(t.tw) * anchor.w;
  out.l = std::exp(t.tl) * anchor.l;
  out.h = std::exp(t.th) * anchor.h;
  out.theta = wrap_angle(anchor.theta + t.ttheta);
  return out;
}

Box3D closest_heading(const Box3D& box, double ref_theta) {
  if (std::abs(wrap_angle(box.theta - ref_theta)) <= 0.5 * kPi) return box;
  Box3D flipped = box;
  flipped.theta = wrap_angle(box.theta + kPi);
  return flipped;
}

std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, std::size_t max_keep) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: boxes/scores size mismatch");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> keep;
  std::vector<char> removed(boxes.size(), 0);
  for (std::size_t oi = 0; oi < order.size() && keep.size() < max_keep; ++oi) {
    const std::size_t i = order[oi];
    if (removed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!removed[j] && bev_iou(boxes[i], boxes[j]) > iou_threshold) removed[j] = 1;
    }
  }
  return keep;
}

}  // namespace ifg
