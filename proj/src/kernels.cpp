#include "ifg/kernels.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ifg::kernels {

namespace {

double pair_iou(const Box3D& a, const Box3D& b, IouKind kind) {
  return kind == IouKind::kBev ? bev_iou(a, b) : iou3d(a, b);
}

// Small problems are not worth waking the thread team.
constexpr std::ptrdiff_t kParallelMin = 64;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

IouTable iou_table(std::span<const Box3D> a, std::span<const Box3D> b, IouKind kind) {
  IouTable t{a.size(), b.size(), std::vector<double>(a.size() * b.size(), 0.0)};
  const auto total = static_cast<std::ptrdiff_t>(t.values.size());
#pragma omp parallel for schedule(static) if (total >= kParallelMin)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const auto i = static_cast<std::size_t>(k) / t.cols;
    const auto j = static_cast<std::size_t>(k) % t.cols;
    t.values[static_cast<std::size_t>(k)] = pair_iou(a[i], b[j], kind);
  }
  return t;
}

std::vector<std::vector<std::size_t>> points_in_boxes(const PointCloud& cloud, std::span<const Box3D> boxes,
                                                      double margin) {
  std::vector<std::vector<std::size_t>> out(boxes.size());
  const auto n = static_cast<std::ptrdiff_t>(boxes.size());
#pragma omp parallel for schedule(dynamic, 4) if (n * static_cast<std::ptrdiff_t>(cloud.size()) >= 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = ifg::points_in_box(cloud, boxes[static_cast<std::size_t>(i)], margin);
  }
  return out;
}

std::vector<std::vector<std::size_t>> group_points(const PointCloud& cloud,
                                                   std::span<const std::size_t> centers, double radius,
                                                   std::size_t k_max) {
  std::vector<std::vector<std::size_t>> out(centers.size());
  const auto n = static_cast<std::ptrdiff_t>(centers.size());
#pragma omp parallel for schedule(static) if (n >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto c = centers[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = ifg::ball_query(cloud, cloud.at(c), radius, k_max);
  }
  return out;
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
  const auto n = static_cast<std::ptrdiff_t>(order.size());
  for (std::ptrdiff_t oi = 0; oi < n && keep.size() < max_keep; ++oi) {
    const std::size_t i = order[static_cast<std::size_t>(oi)];
    if (removed[i]) continue;
    keep.push_back(i);
    const Box3D kept = boxes[i];
#pragma omp parallel for schedule(static) if (n - oi >= kParallelMin)
    for (std::ptrdiff_t oj = oi + 1; oj < n; ++oj) {
      const std::size_t j = order[static_cast<std::size_t>(oj)];
      if (!removed[j] && bev_iou(kept, boxes[j]) > iou_threshold) removed[j] = 1;
    }
  }
  return keep;
}

namespace serial {

IouTable iou_table(std::span<const Box3D> a, std::span<const Box3D> b, IouKind kind) {
  IouTable t{a.size(), b.size(), std::vector<double>(a.size() * b.size(), 0.0)};
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) t.values[i * t.cols + j] = pair_iou(a[i], b[j], kind);
  }
  return t;
}

std::vector<std::vector<std::size_t>> points_in_boxes(const PointCloud& cloud, std::span<const Box3D> boxes,
                                                      double margin) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(boxes.size());
  for (const auto& box : boxes) out.push_back(ifg::points_in_box(cloud, box, margin));
  return out;
}

std::vector<std::vector<std::size_t>> group_points(const PointCloud& cloud,
                                                   std::span<const std::size_t> centers, double radius,
                                                   std::size_t k_max) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(centers.size());
  for (const auto c : centers) out.push_back(ifg::ball_query(cloud, cloud.at(c), radius, k_max));
  return out;
}

std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, std::size_t max_keep) {
  return ifg::nms(boxes, scores, iou_threshold, max_keep);
}

}  // namespace serial
}  // namespace ifg::kernels
