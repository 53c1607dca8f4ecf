#pragma once

// Batched data-parallel kernels. Each kernel has an OpenMP version (the
// default, used by the library) and a serial reference in `serial::` that the
// tests compare against element for element. Results never depend on the
// thread count: every output element is written by exactly one iteration.

#include <cstddef>
#include <span>
#include <vector>

#include "ifg/geom.hpp"
#include "ifg/pointops.hpp"

namespace ifg::kernels {

enum class IouKind { kBev, k3d };

/// Dense row-major |a| x |b| table of pairwise IoU.
struct IouTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

IouTable iou_table(std::span<const Box3D> a, std::span<const Box3D> b, IouKind kind);

/// points_in_box for every box.
std::vector<std::vector<std::size_t>> points_in_boxes(const PointCloud& cloud, std::span<const Box3D> boxes,
                                                      double margin);

/// ball_query around each selected center.
std::vector<std::vector<std::size_t>> group_points(const PointCloud& cloud,
                                                   std::span<const std::size_t> centers, double radius,
                                                   std::size_t k_max);

/// Same contract as ifg::nms; the suppression sweep after each kept box runs in parallel.
std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, std::size_t max_keep);

int max_threads();

namespace serial {

IouTable iou_table(std::span<const Box3D> a, std::span<const Box3D> b, IouKind kind);
std::vector<std::vector<std::size_t>> points_in_boxes(const PointCloud& cloud, std::span<const Box3D> boxes,
                                                      double margin);
std::vector<std::vector<std::size_t>> group_points(const PointCloud& cloud,
                                                   std::span<const std::size_t> centers, double radius,
                                                   std::size_t k_max);
std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, std::size_t max_keep);

}  // namespace serial
}  // namespace ifg::kernels
