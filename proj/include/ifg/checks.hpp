#pragma once

// Independent oracles and the self-check suites built on them. Used by
// `ifgkit check` and the acceptance test binary.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ifg/eval.hpp"
#include "ifg/geom.hpp"

namespace ifg::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// BEV IoU by counting an n x n grid of cell centers over the pair's bounding rectangle.
double bev_iou_grid(const Box3D& a, const Box3D& b, std::size_t n);
/// 3D IoU on the product of that grid with an n-point grid along z.
double iou3d_grid(const Box3D& a, const Box3D& b, std::size_t n);

/// Repeatedly takes the best remaining box and deletes everything it overlaps.
std::vector<std::size_t> nms_bruteforce(std::span<const Box3D> boxes, std::span<const double> scores,
                                        double iou_threshold, std::size_t max_keep);

/// AP straight from the definition, given score-ordered TP flags and the GT count.
double ap_direct(std::span<const bool> tp_in_score_order, std::size_t num_gt, RecallMode mode);

CheckResult check_geometry(std::uint64_t seed);         // IoU against grid oracles, NMS against brute force
CheckResult check_encoding(std::uint64_t seed);         // encode/decode roundtrip
CheckResult check_gradients(std::uint64_t seed);        // finite differences over every loss and layer
CheckResult check_confidence_labels();                  // soft-label anchor points
CheckResult check_supcon_separation(std::uint64_t seed);
CheckResult check_ap_metric();

/// All of the above in order.
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed);

}  // namespace ifg::checks
