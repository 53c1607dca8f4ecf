#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ifg/geom.hpp"
#include "ifg/templates.hpp"

namespace ifg {

/// A box with its class and, for detections, a confidence.
struct LabeledBox {
  Box3D box;
  ObjectClass cls = ObjectClass::kCar;
  std::optional<double> score;
};

struct LabelParseResult {
  std::vector<LabeledBox> objects;
  std::vector<std::string> diagnostics;  // skipped lines
};

/// KITTI-style lines: `type trunc occl alpha bx1 by1 bx2 by2 h w l x y z ry [score]`.
/// (x, y, z) is the bottom center; the box center is lifted by h/2. Unknown
/// types are skipped with a diagnostic; malformed lines throw ParseError.
LabelParseResult parse_labels(std::string_view text);
/// Inverse of parse_labels, 6-decimal fixed, 2D fields written as 0.
std::string serialize_labels(std::span<const LabeledBox> objects);

std::vector<LabeledBox> read_label_file(const std::string& path);
void write_label_file(const std::string& path, std::span<const LabeledBox> objects);

/// Detections and ground truth of one scene. Matching never crosses frames.
struct EvalFrame {
  std::vector<LabeledBox> detections;
  std::vector<LabeledBox> gts;
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};

/// Score-ordered greedy matching: a detection is a true positive when the
/// unmatched same-class GT of highest 3D IoU reaches `iou_threshold`. One
/// point per detection of the class. Empty when the class has no GT.
std::vector<PrPoint> pr_curve(std::span<const EvalFrame> frames, ObjectClass cls, double iou_threshold);
std::vector<PrPoint> pr_curve(std::span<const LabeledBox> detections, std::span<const LabeledBox> gts,
                              ObjectClass cls, double iou_threshold);

enum class RecallMode { kR11, kR40 };
std::string_view recall_mode_name(RecallMode mode);

/// Mean interpolated precision over the recall positions (0, 0.1, ..., 1) or
/// (1/40, ..., 1); positions beyond the reached recall contribute 0.
double average_precision(std::span<const PrPoint> curve, RecallMode mode);

struct EvalConfig {
  std::array<double, 3> iou_thresholds{0.7, 0.5, 0.5};  // by class_index()
  RecallMode mode = RecallMode::kR11;
  /// Half-open buckets [edges[i], edges[i+1]) of planar distance from the sensor.
  std::vector<double> bucket_edges{0.0, 20.0, 40.0, std::numeric_limits<double>::infinity()};

  void validate() const;
  std::string bucket_name(std::size_t i) const;
  std::size_t bucket_of(double distance) const;
};

struct ApRow {
  ObjectClass cls = ObjectClass::kCar;
  std::string bucket;  // "all" or e.g. "0-20"
  RecallMode mode = RecallMode::kR11;
  std::optional<double> ap;  // nullopt: no GT of this class (skipped)
  std::size_t num_gt = 0;
  std::size_t num_det = 0;
};

/// Per-class AP over all frames.
std::vector<ApRow> evaluate(std::span<const EvalFrame> frames, const EvalConfig& cfg);

/// Per-class, per-distance-bucket AP. GTs fall in the bucket of their center
/// distance; detections in their matched GT's bucket, or their own if unmatched.
std::vector<ApRow> bucketed_ap(std::span<const EvalFrame> frames, const EvalConfig& cfg);

/// `class,bucket,mode,ap` with an empty ap field for skipped classes.
std::string ap_rows_csv(std::span<const ApRow> rows);

/// Mean AP over the classes that have GT; nullopt if none do.
std::optional<double> mean_ap(std::span<const ApRow> rows);

}  // namespace ifg
