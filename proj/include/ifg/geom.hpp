#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace ifg {

inline constexpr double kPi = 3.14159265358979323846;

// Area/volume floor below which an intersection is treated as empty.
inline constexpr double kGeomEps = 1e-12;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Point3 operator*(double s, Point3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double squared_distance(Point3 a, Point3 b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

/// Oriented box: center (x, y, z), extents along its local x (l), y (w) and
/// z (h) axes, yaw theta about +z. All lengths in meters.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;

  Point3 center() const { return {x, y, z}; }
  double volume() const { return l * w * h; }
  double bottom() const { return z - 0.5 * h; }
  double top() const { return z + 0.5 * h; }
};

/// Validates dims (> 0, finite) and wraps theta. Throws std::invalid_argument.
Box3D make_box(double x, double y, double z, double l, double w, double h, double theta);
bool is_valid(const Box3D& box);

/// Corners 0..3 on the bottom face, 4..7 on the top face, both counter-clockwise
/// starting at local (+l/2, +w/2).
std::array<Point3, 8> box_corners(const Box3D& box);

/// Footprint rectangle in the ground plane, counter-clockwise.
std::array<Point2, 4> bev_footprint(const Box3D& box);

/// Maps a world point into the box frame (origin at center, +x along heading).
Point3 to_box_frame(const Box3D& box, Point3 p);
Point3 from_box_frame(const Box3D& box, Point3 local);

double polygon_area(std::span<const Point2> poly);

/// Sutherland-Hodgman clip of `subject` against the convex, counter-clockwise
/// polygon `clip`.
std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);
double iou3d(const Box3D& a, const Box3D& b);

/// Residuals of a box against an anchor. Centers are normalized by the anchor's
/// bottom diagonal (x, y) and height (z), dims are log ratios, angle is wrapped.
struct RegressionTarget {
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double tw = 0.0;
  double tl = 0.0;
  double th = 0.0;
  double ttheta = 0.0;

  static constexpr std::size_t kSize = 7;
  std::array<double, kSize> to_array() const { return {tx, ty, tz, tw, tl, th, ttheta}; }
  static RegressionTarget from_array(std::span<const double> v);
};

RegressionTarget encode_box(const Box3D& gt, const Box3D& anchor);
Box3D decode_box(const RegressionTarget& t, const Box3D& anchor);

/// Returns `box` or its half-turn twin, whichever heading is closer to `ref`.
/// Both describe the same solid, so IoU against anything is unchanged.
Box3D closest_heading(const Box3D& box, double ref_theta);

/// Greedy BEV-IoU suppression. Returns kept indices in descending score order
/// (ties by lower index); a box is dropped when its IoU with a kept box
/// exceeds `iou_threshold`.
std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, std::size_t max_keep);

}  // namespace ifg
