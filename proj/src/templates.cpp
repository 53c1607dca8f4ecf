#include "ifg/templates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ifg/error.hpp"

namespace ifg {

ObjectClass class_from_id(int id) {
  if (id < 1 || id > 3) throw std::invalid_argument("unknown class id " + std::to_string(id));
  return static_cast<ObjectClass>(id);
}

std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return "Car";
    case ObjectClass::kPedestrian: return "Pedestrian";
    case ObjectClass::kCyclist: return "Cyclist";
  }
  return "?";
}

std::optional<ObjectClass> class_from_name(std::string_view name) {
  for (auto c : kAllClasses) {
    if (class_name(c) == name) return c;
  }
  return std::nullopt;
}

Dims canonical_dims(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return {3.9, 1.6, 1.56};
    case ObjectClass::kPedestrian: return {0.8, 0.6, 1.73};
    case ObjectClass::kCyclist: return {1.76, 0.6, 1.73};
  }
  throw std::invalid_argument("unknown class");
}

namespace {

double dot(Point3 a, Point3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Point3 a) { return std::sqrt(dot(a, a)); }
Point3 cross(Point3 a, Point3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Two unit vectors completing `axis` to an orthonormal frame.
std::pair<Point3, Point3> basis(Point3 axis) {
  const Point3 helper = std::abs(axis.x) < 0.9 ? Point3{1, 0, 0} : Point3{0, 1, 0};
  Point3 e1 = cross(axis, helper);
  e1 = (1.0 / norm(e1)) * e1;
  return {e1, cross(axis, e1)};
}

Primitive box(std::string part, Point3 center, Point3 half) {
  Primitive p;
  p.kind = Primitive::Kind::kBox;
  p.part = std::move(part);
  p.a = center;
  p.b = half;
  return p;
}

Primitive cylinder(std::string part, Point3 center, Point3 axis, double radius, double half_len) {
  Primitive p;
  p.kind = Primitive::Kind::kCylinder;
  p.part = std::move(part);
  p.a = center;
  p.axis = axis;
  p.radius = radius;
  p.length = half_len;
  return p;
}

Primitive capsule(std::string part, Point3 a, Point3 b, double radius) {
  Primitive p;
  p.kind = Primitive::Kind::kCapsule;
  p.part = std::move(part);
  p.a = a;
  p.b = b;
  p.radius = radius;
  return p;
}

Primitive ellipsoid(std::string part, Point3 center, Point3 radii) {
  Primitive p;
  p.kind = Primitive::Kind::kEllipsoid;
  p.part = std::move(part);
  p.a = center;
  p.b = radii;
  return p;
}

Primitive torus(std::string part, Point3 center, Point3 axis, double major, double tube) {
  Primitive p;
  p.kind = Primitive::Kind::kTorus;
  p.part = std::move(part);
  p.a = center;
  p.axis = axis;
  p.length = major;
  p.radius = tube;
  return p;
}

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Point3 unit_sphere(Rng& rng) {
  const double z = uniform(rng, -1.0, 1.0);
  const double phi = uniform(rng, 0.0, 2.0 * kPi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Point3 sample_surface(const Primitive& p, Rng& rng) {
  using K = Primitive::Kind;
  switch (p.kind) {
    case K::kBox: {
      const double ax = 2 * p.b.x, ay = 2 * p.b.y, az = 2 * p.b.z;
      const double axy = ax * ay, axz = ax * az, ayz = ay * az;
      const double pick = uniform(rng, 0.0, axy + axz + ayz);
      const double u = uniform(rng, -1.0, 1.0), v = uniform(rng, -1.0, 1.0);
      const double sgn = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      Point3 local;
      if (pick < axy) {
        local = {u * p.b.x, v * p.b.y, sgn * p.b.z};
      } else if (pick < axy + axz) {
        local = {u * p.b.x, sgn * p.b.y, v * p.b.z};
      } else {
        local = {sgn * p.b.x, u * p.b.y, v * p.b.z};
      }
      return p.a + local;
    }
    case K::kCylinder: {
      const auto [e1, e2] = basis(p.axis);
      const double lateral = 2.0 * kPi * p.radius * 2.0 * p.length;
      const double caps = 2.0 * kPi * p.radius * p.radius;
      const double phi = uniform(rng, 0.0, 2.0 * kPi);
      if (uniform(rng, 0.0, lateral + caps) < lateral) {
        const double t = uniform(rng, -p.length, p.length);
        return p.a + p.radius * std::cos(phi) * e1 + p.radius * std::sin(phi) * e2 + t * p.axis;
      }
      const double r = p.radius * std::sqrt(uniform(rng, 0.0, 1.0));
      const double t = uniform(rng, 0.0, 1.0) < 0.5 ? -p.length : p.length;
      return p.a + r * std::cos(phi) * e1 + r * std::sin(phi) * e2 + t * p.axis;
    }
    case K::kCapsule: {
      const Point3 seg = p.b - p.a;
      const double len = norm(seg);
      const Point3 axis = (1.0 / len) * seg;
      const double lateral = 2.0 * kPi * p.radius * len;
      const double sphere = 4.0 * kPi * p.radius * p.radius;
      if (uniform(rng, 0.0, lateral + sphere) < lateral) {
        const auto [e1, e2] = basis(axis);
        const double phi = uniform(rng, 0.0, 2.0 * kPi);
        const double t = uniform(rng, 0.0, len);
        return p.a + t * axis + p.radius * std::cos(phi) * e1 + p.radius * std::sin(phi) * e2;
      }
      const Point3 d = unit_sphere(rng);
      return (dot(d, axis) >= 0.0 ? p.b : p.a) + p.radius * d;
    }
    case K::kEllipsoid: {
      // Rejection on the surface-area element of the scaled sphere.
      const double a = p.b.x, b = p.b.y, c = p.b.z;
      const double bound = std::max({b * c, a * c, a * b});
      for (;;) {
        const Point3 u = unit_sphere(rng);
        const double g = std::sqrt((b * c * u.x) * (b * c * u.x) + (a * c * u.y) * (a * c * u.y) +
                                   (a * b * u.z) * (a * b * u.z));
        if (uniform(rng, 0.0, bound) <= g) return p.a + Point3{a * u.x, b * u.y, c * u.z};
      }
    }
    case K::kTorus: {
      const auto [e1, e2] = basis(p.axis);
      for (;;) {
        const double tube_angle = uniform(rng, 0.0, 2.0 * kPi);
        const double ring = p.length + p.radius * std::cos(tube_angle);
        if (uniform(rng, 0.0, p.length + p.radius) > ring) continue;
        const double phi = uniform(rng, 0.0, 2.0 * kPi);
        return p.a + ring * std::cos(phi) * e1 + ring * std::sin(phi) * e2 +
               p.radius * std::sin(tube_angle) * p.axis;
      }
    }
  }
  throw std::logic_error("unhandled primitive kind");
}

}  // namespace

double Primitive::surface_area() const {
  switch (kind) {
    case Kind::kBox: return 8.0 * (b.x * b.y + b.x * b.z + b.y * b.z);
    case Kind::kCylinder: return 2.0 * kPi * radius * 2.0 * length + 2.0 * kPi * radius * radius;
    case Kind::kCapsule: return 2.0 * kPi * radius * norm(b - a) + 4.0 * kPi * radius * radius;
    case Kind::kEllipsoid: {
      // Knud Thomsen's approximation, relative error < 1.1%.
      constexpr double p = 1.6075;
      const double ap = std::pow(b.x, p), bp = std::pow(b.y, p), cp = std::pow(b.z, p);
      return 4.0 * kPi * std::pow((ap * bp + ap * cp + bp * cp) / 3.0, 1.0 / p);
    }
    case Kind::kTorus: return 4.0 * kPi * kPi * length * radius;
  }
  return 0.0;
}

bool Primitive::contains(Point3 p, double scale) const {
  switch (kind) {
    case Kind::kBox: {
      const Point3 d = p - a;
      return std::abs(d.x) <= b.x * scale && std::abs(d.y) <= b.y * scale && std::abs(d.z) <= b.z * scale;
    }
    case Kind::kCylinder: {
      const Point3 d = p - a;
      const double t = dot(d, axis);
      const Point3 radial = d - t * axis;
      return std::abs(t) <= length * scale && norm(radial) <= radius * scale;
    }
    case Kind::kCapsule: {
      const Point3 seg = b - a;
      const double t = std::clamp(dot(p - a, seg) / dot(seg, seg), 0.0, 1.0);
      return norm(p - (a + t * seg)) <= radius * scale;
    }
    case Kind::kEllipsoid: {
      const Point3 d = p - a;
      const double q = (d.x * d.x) / (b.x * b.x) + (d.y * d.y) / (b.y * b.y) + (d.z * d.z) / (b.z * b.z);
      return q <= scale * scale;
    }
    case Kind::kTorus: {
      const Point3 d = p - a;
      const double t = dot(d, axis);
      const double rho = norm(d - t * axis);
      const double r = radius * scale;
      return (rho - length) * (rho - length) + t * t <= r * r;
    }
  }
  return false;
}

std::vector<Primitive> template_primitives(ObjectClass c) {
  const Point3 y_axis{0, 1, 0};
  switch (c) {
    case ObjectClass::kCar: {
      // Body slab, cabin, four wheels on axles along +y.
      std::vector<Primitive> parts{
          box("body", {0.0, 0.0, -0.225}, {1.95, 0.8, 0.375}),
          box("body", {-0.05, 0.0, 0.465}, {0.95, 0.7, 0.315}),
      };
      for (double x : {-1.3, 1.3}) {
        for (double y : {-0.675, 0.675}) parts.push_back(cylinder("wheel", {x, y, -0.43}, y_axis, 0.35, 0.125));
      }
      return parts;
    }
    case ObjectClass::kPedestrian: {
      std::vector<Primitive> parts{
          ellipsoid("head", {0.0, 0.0, 0.745}, {0.1, 0.09, 0.12}),
          capsule("body", {0.0, 0.0, 0.02}, {0.0, 0.0, 0.45}, 0.17),
      };
      for (double s : {-1.0, 1.0}) {
        parts.push_back(capsule("limb", {0.0, 0.1 * s, -0.05}, {0.2 * s, 0.12 * s, -0.805}, 0.06));
        parts.push_back(capsule("limb", {0.0, 0.22 * s, 0.5}, {-0.35 * s, 0.25 * s, 0.05}, 0.05));
      }
      return parts;
    }
    case ObjectClass::kCyclist: {
      std::vector<Primitive> parts{
          torus("wheel", {-0.55, 0.0, -0.505}, y_axis, 0.33, 0.03),
          torus("wheel", {0.55, 0.0, -0.505}, y_axis, 0.33, 0.03),
          capsule("frame", {-0.55, 0.0, -0.3}, {0.5, 0.0, -0.1}, 0.03),
          capsule("body", {-0.15, 0.0, -0.1}, {0.0, 0.0, 0.5}, 0.15),
          ellipsoid("head", {0.05, 0.0, 0.745}, {0.11, 0.09, 0.12}),
      };
      for (double s : {-1.0, 1.0}) {
        parts.push_back(capsule("limb", {0.0, 0.18 * s, 0.5}, {0.45, 0.25 * s, 0.15}, 0.05));
        parts.push_back(capsule("limb", {-0.1, 0.1 * s, -0.1}, {0.05, 0.12 * s, -0.6}, 0.06));
      }
      return parts;
    }
  }
  throw std::invalid_argument("unknown class");
}

Template generate_template(ObjectClass c, std::size_t k, std::uint64_t seed) {
  if (k < 64) throw std::invalid_argument("generate_template: k must be >= 64");
  const auto parts = template_primitives(c);

  // Largest-remainder apportionment: each primitive gets its area share +-1 point.
  std::vector<double> areas;
  for (const auto& p : parts) areas.push_back(p.surface_area());
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  std::vector<std::size_t> counts(parts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double share = static_cast<double>(k) * areas[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(share));
    assigned += counts[i];
    remainders.emplace_back(share - std::floor(share), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < k; ++r, ++assigned) ++counts[remainders[r].second];

  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(class_id(c))));
  PointCloud pts;
  pts.reserve(k);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t n = 0; n < counts[i]; ++n) pts.push_back(sample_surface(parts[i], rng));
  }

  // Rescale so the bounding box is exactly the canonical size, centered at 0.
  Point3 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
            std::numeric_limits<double>::max()};
  Point3 hi{-lo.x, -lo.y, -lo.z};
  for (const auto& p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const Dims dims = canonical_dims(c);
  const Point3 mid = 0.5 * (lo + hi);
  const double sx = dims.l / (hi.x - lo.x), sy = dims.w / (hi.y - lo.y), sz = dims.h / (hi.z - lo.z);
  for (auto& p : pts) p = {(p.x - mid.x) * sx, (p.y - mid.y) * sy, (p.z - mid.z) * sz};

  return Template{c, std::move(pts), dims};
}

PointCloud adjust_template(const Template& t, const Box3D& gt) {
  const double sx = gt.l / t.dims.l, sy = gt.w / t.dims.w, sz = gt.h / t.dims.h;
  PointCloud out;
  out.reserve(t.points.size());
  for (const auto& p : t.points) out.push_back(from_box_frame(gt, {p.x * sx, p.y * sy, p.z * sz}));
  return out;
}

void write_template_ply(std::ostream& os, const Template& t) {
  os << "ply\nformat ascii 1.0\n";
  os << "comment class " << class_id(t.cls) << '\n';
  os << std::setprecision(9) << "comment dims " << t.dims.l << ' ' << t.dims.w << ' ' << t.dims.h << '\n';
  os << "element vertex " << t.points.size() << '\n';
  os << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : t.points) {
    os << static_cast<float>(p.x) << ' ' << static_cast<float>(p.y) << ' ' << static_cast<float>(p.z) << '\n';
  }
}

void write_template_ply(const std::filesystem::path& path, const Template& t) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_template_ply(os, t);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Template read_template_ply(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* expect) -> std::string& {
    if (!std::getline(is, line)) throw ParseError(lineno + 1, std::string("unexpected end of file, expected ") + expect);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next("'ply'") != "ply") throw ParseError(lineno, "missing 'ply' magic");
  if (next("format") != "format ascii 1.0") throw ParseError(lineno, "only 'format ascii 1.0' is supported");

  std::optional<int> cls;
  std::optional<Dims> dims;
  std::optional<std::size_t> count;
  std::vector<std::string> props;
  for (;;) {
    std::istringstream ss(next("end_header"));
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "comment") {
      std::string tag;
      ss >> tag;
      if (tag == "class") {
        int id = 0;
        if (!(ss >> id)) throw ParseError(lineno, "bad class comment");
        try {
          class_from_id(id);
        } catch (const std::invalid_argument& e) {
          throw ParseError(lineno, e.what());
        }
        cls = id;
      } else if (tag == "dims") {
        Dims d;
        if (!(ss >> d.l >> d.w >> d.h) || d.l <= 0 || d.w <= 0 || d.h <= 0) {
          throw ParseError(lineno, "bad dims comment");
        }
        dims = d;
      }
    } else if (key == "element") {
      std::string name;
      long long n = -1;
      if (!(ss >> name >> n) || name != "vertex" || n < 0) throw ParseError(lineno, "bad element line");
      count = static_cast<std::size_t>(n);
    } else if (key == "property") {
      std::string type, name;
      if (!(ss >> type >> name) || type != "float") throw ParseError(lineno, "bad property line");
      props.push_back(name);
    } else {
      throw ParseError(lineno, "unexpected header line '" + line + "'");
    }
  }
  if (!cls) throw ParseError(lineno, "missing 'comment class'");
  if (!dims) throw ParseError(lineno, "missing 'comment dims'");
  if (!count) throw ParseError(lineno, "missing 'element vertex'");
  if (props != std::vector<std::string>{"x", "y", "z"}) throw ParseError(lineno, "properties must be float x, y, z");

  Template t{class_from_id(*cls), {}, *dims};
  t.points.reserve(*count);
  for (std::size_t i = 0; i < *count; ++i) {
    std::istringstream ss(next("vertex"));
    float x, y, z;
    std::string extra;
    if (!(ss >> x >> y >> z) || (ss >> extra)) throw ParseError(lineno, "vertex line must hold 3 floats");
    t.points.push_back({x, y, z});
  }
  require_finite(t.points);
  return t;
}

Template read_template_ply(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_template_ply(is);
}

TemplateLibrary make_template_library(std::size_t k, std::uint64_t seed) {
  return {generate_template(ObjectClass::kCar, k, seed), generate_template(ObjectClass::kPedestrian, k, seed),
          generate_template(ObjectClass::kCyclist, k, seed)};
}

}  // namespace ifg
