#include "ifg/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace ifg {

namespace {

using Rng = std::mt19937_64;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool inside_extents(const SceneGenConfig& cfg, const Box3D& box) {
  for (const auto& c : bev_footprint(box)) {
    if (c.x < cfg.x_min || c.x > cfg.x_max || c.y < cfg.y_min || c.y > cfg.y_max) return false;
  }
  return true;
}

// Drops far-side points, thins with distance, adds noise.
void observe(const SceneGenConfig& cfg, Point2 center, PointCloud& pts, Rng& rng) {
  const double d = std::max(std::hypot(center.x, center.y), 1e-6);
  const double ux = center.x / d, uy = center.y / d;
  const double front = center.x * ux + center.y * uy;
  const double keep = std::min(1.0, (cfg.decay_distance / d) * (cfg.decay_distance / d));
  std::bernoulli_distribution coin(keep);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  PointCloud out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    if (p.x * ux + p.y * uy > front) continue;
    if (!coin(rng)) continue;
    out.push_back(p);
  }
  if (cfg.noise_sigma > 0.0) {
    for (auto& p : out) p = {p.x + noise(rng), p.y + noise(rng), p.z + noise(rng)};
  }
  pts = std::move(out);
}

}  // namespace

void SceneGenConfig::validate() const {
  if (!(x_min < x_max && y_min < y_max && z_min < z_max)) throw std::invalid_argument("scene: degenerate extents");
  if (ground_z < z_min || ground_z > z_max) throw std::invalid_argument("scene: ground_z outside z extents");
  if (min_objects > max_objects) throw std::invalid_argument("scene: min_objects > max_objects");
  if (poles_min > poles_max) throw std::invalid_argument("scene: poles_min > poles_max");
  if (!(decay_distance > 0.0) || !(ground_density >= 0.0) || template_points < 64) {
    throw std::invalid_argument("scene: densities must be positive and template_points >= 64");
  }
  if (!(occlusion_keep_min > 0.0 && occlusion_keep_min <= 1.0) || occlusion_prob < 0.0 || occlusion_prob > 1.0) {
    throw std::invalid_argument("scene: occlusion parameters out of range");
  }
  if (noise_sigma < 0.0 || dims_jitter < 0.0 || min_range < 0.0) {
    throw std::invalid_argument("scene: negative noise, jitter or range");
  }
}

std::vector<LabeledBox> SceneSample::labels() const {
  std::vector<LabeledBox> out;
  for (std::size_t i = 0; i < gt_boxes.size(); ++i) out.push_back({gt_boxes[i], gt_classes[i], std::nullopt});
  return out;
}

std::vector<SceneObject> sample_layout(const SceneGenConfig& cfg, std::size_t count, std::uint64_t seed) {
  Rng rng(mix(seed, 0x4c41594fULL));
  std::vector<SceneObject> objects;
  std::normal_distribution<double> jitter(0.0, cfg.dims_jitter);
  for (std::size_t n = 0; n < count; ++n) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const auto cls = kAllClasses[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
      const Dims base = canonical_dims(cls);
      const double l = base.l * std::exp(jitter(rng));
      const double w = base.w * std::exp(jitter(rng));
      const double h = base.h * std::exp(jitter(rng));
      const double x = uniform(rng, cfg.x_min, cfg.x_max);
      const double y = uniform(rng, cfg.y_min, cfg.y_max);
      const double yaw = uniform(rng, -kPi, kPi);
      const Box3D box = make_box(x, y, cfg.ground_z + 0.5 * h, l, w, h, yaw);
      if (std::hypot(x, y) < cfg.min_range || !inside_extents(cfg, box)) continue;
      const bool clear = std::none_of(objects.begin(), objects.end(), [&](const SceneObject& o) {
        return bev_intersection_area(o.box, box) > 0.0;
      });
      if (!clear) continue;
      objects.push_back({box, cls});
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("scene config infeasible: could not place object " + std::to_string(n + 1) + " of " +
                               std::to_string(count));
    }
  }
  return objects;
}

PointCloud sample_object_points(const SceneGenConfig& cfg, const Template& tmpl, const Box3D& box,
                                std::uint64_t seed) {
  Rng rng(seed);
  PointCloud pts = adjust_template(tmpl, box);
  observe(cfg, {box.x, box.y}, pts, rng);

  // Occluder: keep only the part of the object below a cut along one local axis.
  if (!pts.empty() && uniform(rng, 0.0, 1.0) < cfg.occlusion_prob) {
    const double keep = uniform(rng, cfg.occlusion_keep_min, 1.0);
    const int axis = std::uniform_int_distribution<int>(0, 3)(rng);
    std::vector<double> coord;
    coord.reserve(pts.size());
    for (const auto& p : pts) {
      const Point3 q = to_box_frame(box, p);
      const double c = (axis < 2) ? q.x : q.y;
      coord.push_back((axis % 2 == 0) ? c : -c);
    }
    std::vector<double> sorted = coord;
    const auto kth = static_cast<std::size_t>(std::floor(keep * static_cast<double>(sorted.size())));
    if (kth < sorted.size()) {
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(kth), sorted.end());
      const double cut = sorted[kth];
      PointCloud kept;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (coord[i] < cut) kept.push_back(pts[i]);
      }
      pts = std::move(kept);
    }
  }
  return pts;
}

SceneSample render_scene(const SceneGenConfig& cfg, const std::vector<SceneObject>& objects,
                         const TemplateLibrary& templates, std::uint64_t seed) {
  SceneSample scene;
  scene.seed = seed;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& obj = objects[i];
    auto pts = sample_object_points(cfg, templates[class_index(obj.cls)], obj.box, mix(seed, 100 + i));
    if (pts.empty()) {
      scene.diagnostics.push_back("dropped " + std::string(class_name(obj.cls)) + " at distance " +
                                  std::to_string(std::hypot(obj.box.x, obj.box.y)) + " m: no points");
      continue;
    }
    scene.cloud.insert(scene.cloud.end(), pts.begin(), pts.end());
    scene.gt_boxes.push_back(obj.box);
    scene.gt_classes.push_back(obj.cls);
  }

  auto near_object = [&](double x, double y, double pad) {
    return std::any_of(objects.begin(), objects.end(), [&](const SceneObject& o) {
      Box3D grown = o.box;
      grown.l += 2 * pad;
      grown.w += 2 * pad;
      const Point3 q = to_box_frame(grown, {x, y, o.box.z});
      return std::abs(q.x) <= 0.5 * grown.l && std::abs(q.y) <= 0.5 * grown.w;
    });
  };

  Rng rng(mix(seed, 0x47524f55ULL));
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  const double area = (cfg.x_max - cfg.x_min) * (cfg.y_max - cfg.y_min);
  const auto ground = static_cast<std::size_t>(std::llround(cfg.ground_density * area));
  for (std::size_t i = 0; i < ground; ++i) {
    const double x = uniform(rng, cfg.x_min, cfg.x_max);
    const double y = uniform(rng, cfg.y_min, cfg.y_max);
    const double dz = cfg.noise_sigma > 0.0 ? noise(rng) : 0.0;
    if (near_object(x, y, 0.0)) continue;
    scene.cloud.push_back({x, y, cfg.ground_z + dz});
  }

  const auto poles = std::uniform_int_distribution<std::size_t>(cfg.poles_min, cfg.poles_max)(rng);
  for (std::size_t p = 0; p < poles; ++p) {
    double x = 0, y = 0;
    bool ok = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
      x = uniform(rng, cfg.x_min + 1.0, cfg.x_max - 1.0);
      y = uniform(rng, cfg.y_min + 1.0, cfg.y_max - 1.0);
      ok = std::hypot(x, y) >= cfg.min_range && !near_object(x, y, 0.5);
    }
    if (!ok) continue;
    const double radius = uniform(rng, 0.05, 0.15);
    const double height = uniform(rng, 1.2, 2.8);
    PointCloud pts;
    pts.reserve(cfg.pole_points);
    for (std::size_t k = 0; k < cfg.pole_points; ++k) {
      const double a = uniform(rng, 0.0, 2.0 * kPi);
      pts.push_back({x + radius * std::cos(a), y + radius * std::sin(a), cfg.ground_z + uniform(rng, 0.0, height)});
    }
    Rng obs(mix(seed, 0x504f4c45ULL + p));
    observe(cfg, {x, y}, pts, obs);
    scene.cloud.insert(scene.cloud.end(), pts.begin(), pts.end());
  }
  return scene;
}

SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed, const TemplateLibrary& templates) {
  cfg.validate();
  Rng rng(mix(seed, 0x434f554eULL));
  const auto count = std::uniform_int_distribution<std::size_t>(cfg.min_objects, cfg.max_objects)(rng);
  const auto objects = sample_layout(cfg, count, seed);
  return render_scene(cfg, objects, templates, seed);
}

SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed) {
  return generate_scene(cfg, seed, make_template_library(cfg.template_points, cfg.template_seed));
}

std::vector<SceneSample> generate_scenes(const SceneGenConfig& cfg, std::uint64_t first_seed, std::size_t count) {
  cfg.validate();
  const auto templates = make_template_library(cfg.template_points, cfg.template_seed);
  std::vector<SceneSample> out(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = generate_scene(cfg, first_seed + static_cast<std::uint64_t>(i), templates);
  }
  return out;
}

void write_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& p : cloud) {
    for (double v : {p.x, p.y, p.z}) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
      os.write(b, 4);
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

PointCloud read_cloud_bin(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % 12 != 0) throw std::runtime_error("cloud file size is not a multiple of 12 bytes");
  PointCloud cloud;
  cloud.reserve(bytes.size() / 12);
  auto f = [&](std::size_t off) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    return static_cast<double>(std::bit_cast<float>(bits));
  };
  for (std::size_t off = 0; off < bytes.size(); off += 12) cloud.push_back({f(off), f(off + 4), f(off + 8)});
  return cloud;
}

}  // namespace ifg
