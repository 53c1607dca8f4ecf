#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ifg/eval.hpp"
#include "ifg/geom.hpp"
#include "ifg/pointops.hpp"
#include "ifg/templates.hpp"

namespace ifg {

/// Synthetic LiDAR-like scenes: template-sampled objects seen from a sensor
/// at the origin, plus ground returns and upright pole confusers.
struct SceneGenConfig {
  double x_min = 0.0, x_max = 40.0;
  double y_min = -20.0, y_max = 20.0;
  double z_min = -1.5, z_max = 1.5;
  double ground_z = -1.4;
  std::size_t min_objects = 1;
  std::size_t max_objects = 8;
  double min_range = 4.0;         // no objects closer to the sensor than this
  double dims_jitter = 0.05;      // relative sigma on each box dimension
  double decay_distance = 10.0;   // d0: keep probability min(1, (d0 / d)^2)
  std::size_t template_points = 1024;
  std::uint64_t template_seed = 0;
  double occlusion_prob = 0.5;     // chance an object is partially occluded
  double occlusion_keep_min = 0.5; // kept fraction of an occluded object, lower bound
  double ground_density = 0.5;     // ground returns per square meter
  std::size_t poles_min = 2;
  std::size_t poles_max = 6;
  std::size_t pole_points = 300;   // before visibility and decay
  double noise_sigma = 0.02;
  std::size_t max_attempts = 500;  // placement retries per object

  void validate() const;
};

struct SceneObject {
  Box3D box;
  ObjectClass cls = ObjectClass::kCar;
};

struct SceneSample {
  PointCloud cloud;
  std::vector<Box3D> gt_boxes;
  std::vector<ObjectClass> gt_classes;
  std::uint64_t seed = 0;
  std::vector<std::string> diagnostics;  // e.g. objects dropped for having no points

  std::vector<LabeledBox> labels() const;
};

/// Random non-overlapping layout; throws std::runtime_error when an object
/// cannot be placed within the retry budget.
std::vector<SceneObject> sample_layout(const SceneGenConfig& cfg, std::size_t count, std::uint64_t seed);

/// Points of one object: adjusted template, sensor-facing half, distance
/// decay, optional occlusion cut, noise.
PointCloud sample_object_points(const SceneGenConfig& cfg, const Template& tmpl, const Box3D& box,
                                std::uint64_t seed);

/// Renders the given objects plus clutter. Objects left with no points are
/// dropped from the GT with a diagnostic.
SceneSample render_scene(const SceneGenConfig& cfg, const std::vector<SceneObject>& objects,
                         const TemplateLibrary& templates, std::uint64_t seed);

SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed, const TemplateLibrary& templates);
SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed);

/// Scenes seed, seed + 1, ...; generated in parallel.
std::vector<SceneSample> generate_scenes(const SceneGenConfig& cfg, std::uint64_t first_seed, std::size_t count);

/// Little-endian float32 (x, y, z) triplets.
void write_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_cloud_bin(const std::filesystem::path& path);

}  // namespace ifg
