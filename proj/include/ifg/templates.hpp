#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ifg/geom.hpp"
#include "ifg/pointops.hpp"

namespace ifg {

enum class ObjectClass : int { kCar = 1, kPedestrian = 2, kCyclist = 3 };

inline constexpr std::array<ObjectClass, 3> kAllClasses{ObjectClass::kCar, ObjectClass::kPedestrian,
                                                        ObjectClass::kCyclist};

/// Throws std::invalid_argument for ids outside {1, 2, 3}.
ObjectClass class_from_id(int id);
inline int class_id(ObjectClass c) { return static_cast<int>(c); }
inline std::size_t class_index(ObjectClass c) { return static_cast<std::size_t>(c) - 1; }
std::string_view class_name(ObjectClass c);
/// KITTI type string ("Car", "Pedestrian", "Cyclist"); nullopt for anything else.
std::optional<ObjectClass> class_from_name(std::string_view name);

struct Dims {
  double l = 1.0;
  double w = 1.0;
  double h = 1.0;
};

/// Typical per-class box size; also the canonical template size.
Dims canonical_dims(ObjectClass c);

/// Canonical per-class point set: centered at the origin, heading along +x,
/// with an axis-aligned bounding box of exactly `dims`.
struct Template {
  ObjectClass cls = ObjectClass::kCar;
  PointCloud points;
  Dims dims;
};

/// One surface primitive of a template shape, in pre-normalization canonical
/// coordinates.
struct Primitive {
  enum class Kind { kBox, kCylinder, kCapsule, kEllipsoid, kTorus };
  Kind kind = Kind::kBox;
  std::string part;    // "body", "wheel", "head", "limb", ...
  Point3 a;            // center (box, cylinder, ellipsoid, torus) or first endpoint (capsule)
  Point3 b;            // half extents (box), radii (ellipsoid), second endpoint (capsule)
  Point3 axis{0, 0, 1};  // cylinder / torus axis (unit)
  double radius = 0.0;   // cylinder, capsule, torus tube
  double length = 0.0;   // cylinder half-length, torus major radius

  double surface_area() const;
  /// True if p lies inside the solid, with every size inflated by `scale`.
  bool contains(Point3 p, double scale = 1.0) const;
};

std::vector<Primitive> template_primitives(ObjectClass c);

/// Area-weighted stratified surface sample of the class shape, rescaled so its
/// extents match canonical_dims. Requires k >= 64.
Template generate_template(ObjectClass c, std::size_t k, std::uint64_t seed);

/// Scales template points by (L/L', W/W', H/H'), rotates by gt.theta and moves
/// them to the gt center.
PointCloud adjust_template(const Template& t, const Box3D& gt);

/// ASCII PLY with `comment class <id>` and `comment dims <L> <W> <H>` lines.
void write_template_ply(std::ostream& os, const Template& t);
void write_template_ply(const std::filesystem::path& path, const Template& t);
/// Throws ParseError naming the offending line.
Template read_template_ply(std::istream& is);
Template read_template_ply(const std::filesystem::path& path);

/// One template per class, indexed by class_index().
using TemplateLibrary = std::array<Template, 3>;
TemplateLibrary make_template_library(std::size_t k, std::uint64_t seed);

}  // namespace ifg
