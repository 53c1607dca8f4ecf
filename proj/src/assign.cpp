#include "ifg/assign.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ifg/kernels.hpp"

namespace ifg {

void AssignmentConfig::validate() const {
  if (!(0.0 <= bg_threshold && bg_threshold < fg_threshold && fg_threshold <= 1.0)) {
    throw std::invalid_argument("assignment: need 0 <= bg_threshold < fg_threshold <= 1");
  }
  for (const auto& t : anchor) {
    if (!(t.neg < t.pos)) throw std::invalid_argument("assignment: anchor neg threshold must be below pos");
  }
  if (train_keep == 0) throw std::invalid_argument("assignment: train_keep must be positive");
}

std::vector<GtMatch> match_proposals_to_gt(std::span<const Box3D> proposals, std::span<const Box3D> gt_boxes) {
  std::vector<GtMatch> out(proposals.size());
  if (gt_boxes.empty()) return out;
  const auto table = kernels::iou_table(proposals, gt_boxes, kernels::IouKind::k3d);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      if (!out[i].gt_index || table(i, g) > out[i].iou) out[i] = {table(i, g), g};
    }
  }
  return out;
}

std::vector<ProposalLabel> label_proposals(std::span<const GtMatch> matches, std::span<const ObjectClass> gt_classes,
                                           const AssignmentConfig& cfg) {
  std::vector<ProposalLabel> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    ProposalLabel l;
    l.matched_gt = m.gt_index;
    l.matched_iou = m.iou;
    if (m.iou > cfg.fg_threshold && m.gt_index) {
      l.class_label = class_id(gt_classes[*m.gt_index]);
    } else if (m.iou < cfg.bg_threshold) {
      l.class_label = 0;
    } else {
      l.class_label = ProposalLabel::kIgnored;
    }
    out.push_back(l);
  }
  return out;
}

AnchorTargets anchor_targets(std::span<const Box3D> anchors, std::span<const ObjectClass> anchor_classes,
                             std::span<const Box3D> gt_boxes, std::span<const ObjectClass> gt_classes,
                             const AssignmentConfig& cfg) {
  if (anchors.size() != anchor_classes.size() || gt_boxes.size() != gt_classes.size()) {
    throw std::invalid_argument("anchor_targets: size mismatch");
  }
  const std::size_t n = anchors.size();
  AnchorTargets out;
  out.labels.assign(n, 0);
  out.targets.assign(n, RegressionTarget{});
  out.matched_gt.assign(n, std::nullopt);
  out.best_iou.assign(n, 0.0);

  // Per GT: best IoU reached by any same-class anchor, for the forced-positive rule.
  std::vector<double> gt_best(gt_boxes.size(), 0.0);
  struct Hit {
    std::size_t anchor;
    std::size_t gt;
    double iou;
  };
  std::vector<Hit> hits;

  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    const Box3D& gt = gt_boxes[g];
    const double gr = 0.5 * std::hypot(gt.l, gt.w);
    for (std::size_t i = 0; i < n; ++i) {
      if (anchor_classes[i] != gt_classes[g]) continue;
      const Box3D& a = anchors[i];
      const double reach = gr + 0.5 * std::hypot(a.l, a.w);
      const double dx = a.x - gt.x, dy = a.y - gt.y;
      if (dx * dx + dy * dy > reach * reach) continue;
      const double iou = bev_iou(a, gt);
      if (iou <= 0.0) continue;
      hits.push_back({i, g, iou});
      gt_best[g] = std::max(gt_best[g], iou);
      if (iou > out.best_iou[i]) {
        out.best_iou[i] = iou;
        out.matched_gt[i] = g;
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& th = cfg.anchor[class_index(anchor_classes[i])];
    const double iou = out.best_iou[i];
    if (iou >= th.pos) {
      out.labels[i] = class_id(gt_classes[*out.matched_gt[i]]);
    } else if (iou < th.neg) {
      out.labels[i] = 0;
    } else {
      out.labels[i] = -1;
    }
  }
  // Lower-bound rule: each GT keeps its best anchor(s) even below threshold.
  for (const auto& h : hits) {
    if (h.iou == gt_best[h.gt] && out.labels[h.anchor] < 1) {
      out.labels[h.anchor] = class_id(gt_classes[h.gt]);
      out.matched_gt[h.anchor] = h.gt;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] >= 1) {
      const Box3D gt = closest_heading(gt_boxes[*out.matched_gt[i]], anchors[i].theta);
      out.targets[i] = encode_box(gt, anchors[i]);
    }
  }
  return out;
}

std::vector<std::size_t> sample_balanced(std::span<const ProposalLabel> labels, std::size_t n, double pos_iou,
                                         std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i].matched_iou >= pos_iou ? pos : neg).push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  std::size_t take_pos = std::min(pos.size(), n / 2);
  const std::size_t take_neg = std::min(neg.size(), n - take_pos);
  take_pos = std::min(pos.size(), n - take_neg);

  std::vector<std::size_t> out(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
  out.insert(out.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
  return out;
}

}  // namespace ifg
