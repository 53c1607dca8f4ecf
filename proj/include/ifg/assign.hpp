#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ifg/geom.hpp"
#include "ifg/templates.hpp"

namespace ifg {

struct AnchorThresholds {
  double pos = 0.6;
  double neg = 0.45;
};

struct AssignmentConfig {
  double fg_threshold = 0.75;  // a
  double bg_threshold = 0.25;  // b
  /// Indexed by class_index(): car, pedestrian, cyclist.
  std::array<AnchorThresholds, 3> anchor{{{0.6, 0.45}, {0.5, 0.35}, {0.5, 0.35}}};
  double train_nms_threshold = 0.8;
  std::size_t train_keep = 128;
  double positive_sample_iou = 0.55;

  /// Throws std::invalid_argument unless 0 <= b < a <= 1 and neg < pos.
  void validate() const;
};

struct GtMatch {
  double iou = 0.0;
  std::optional<std::size_t> gt_index;
};

/// Best 3D IoU over all GTs per proposal (ties to the lower GT index).
std::vector<GtMatch> match_proposals_to_gt(std::span<const Box3D> proposals, std::span<const Box3D> gt_boxes);

struct ProposalLabel {
  static constexpr int kIgnored = -1;
  int class_label = kIgnored;  // 0 background, c >= 1 foreground class, or kIgnored
  std::optional<std::size_t> matched_gt;
  double matched_iou = 0.0;

  bool ignored() const { return class_label == kIgnored; }
  bool foreground() const { return class_label >= 1; }
};

/// Foreground above a, background below b, ignored in between.
std::vector<ProposalLabel> label_proposals(std::span<const GtMatch> matches, std::span<const ObjectClass> gt_classes,
                                           const AssignmentConfig& cfg);

struct AnchorTargets {
  std::vector<int> labels;  // -1 ignored, 0 negative, c >= 1 positive for class c
  std::vector<RegressionTarget> targets;
  std::vector<std::optional<std::size_t>> matched_gt;
  std::vector<double> best_iou;
};

/// Class-aware BEV-IoU assignment: each anchor competes only for GTs of its own
/// class. Positive at >= pos, negative below neg, ignored otherwise; every GT
/// also claims its best anchor(s). Positive targets are encode_box(gt, anchor)
/// with the GT heading taken modulo pi closest to the anchor's.
AnchorTargets anchor_targets(std::span<const Box3D> anchors, std::span<const ObjectClass> anchor_classes,
                             std::span<const Box3D> gt_boxes, std::span<const ObjectClass> gt_classes,
                             const AssignmentConfig& cfg);

/// Up to n/2 positives (matched IoU >= pos_iou) and the remainder negatives,
/// drawn uniformly with the given seed; a scarce side is filled from the other.
/// Returns positives first, then negatives, without duplicates.
std::vector<std::size_t> sample_balanced(std::span<const ProposalLabel> labels, std::size_t n, double pos_iou,
                                         std::uint64_t seed);

}  // namespace ifg
