#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ifg/netcore.hpp"

namespace ifg::loss {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;  // d value / d input
};

struct VectorLoss {
  double value = 0.0;
  std::vector<double> grad;
};

/// Sum of 0.5 d^2 (|d| < 1) or |d| - 0.5, d = pred - target.
VectorLoss smooth_l1(std::span<const double> pred, std::span<const double> target);

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

/// -alpha_t (1 - p_t)^gamma log(p_t); gradient w.r.t. p (zero where clamped).
ScalarLoss focal_loss(double p, int label, const FocalParams& params = {});

/// -[y log p + (1 - y) log(1 - p)] for a soft target y in [0, 1].
ScalarLoss bce(double p, double y);

/// Soft confidence target min(1, max(0, 2 iou - 0.5)).
double confidence_label(double iou);

// ---------------------------------------------------------------------------
// Supervised contrastive loss over proposal embeddings.

struct ContrastiveBatch {
  nn::Matrix features;      // N x beta, unit rows
  std::vector<int> labels;  // 0 = background, c >= 1 foreground class
  double tau = 0.1;
};

enum class Reduction {
  kSum,             // sum over anchors, as written
  kMeanOverAnchors  // divided by the number of anchors with a non-empty positive set
};

struct SupConResult {
  double value = 0.0;
  nn::Matrix grad;  // d value / d features
  std::size_t contributing_anchors = 0;
  std::size_t skipped_anchors = 0;  // anchors with no same-label partner
};

/// Throws std::invalid_argument for N < 2, tau <= 0, or label/feature count mismatch.
SupConResult supcon_loss(const ContrastiveBatch& batch, Reduction reduction = Reduction::kSum);

// ---------------------------------------------------------------------------
// Template-guided feature regression.

struct TemplateLossBatch {
  nn::Matrix features;  // N x D predicted proposal features alpha_i
  nn::Matrix targets;   // N x D intrinsic features alpha_i^t (constants)
  std::vector<double> ious;
  double mu = 0.55;
};

struct TemplateLossResult {
  double value = 0.0;
  nn::Matrix grad;  // d value / d features
  std::size_t participating = 0;
};

TemplateLossResult template_loss(const TemplateLossBatch& batch);

// ---------------------------------------------------------------------------
// First-stage anchor loss.

inline constexpr int kIgnoredLabel = -1;

struct AnchorBatch {
  std::vector<double> probs;  // p_i^a
  std::vector<int> labels;    // p_i^t: -1 ignored, 0 background, c >= 1 foreground
  nn::Matrix deltas;          // N x 7, delta_i^a
  nn::Matrix targets;         // N x 7, delta_i^t (rows read only for foreground)
  FocalParams focal;
};

struct RpnLossResult {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  std::size_t num_fg = 0;
  std::vector<double> d_probs;
  nn::Matrix d_deltas;
};

/// (1 / max(1, N_fg)) [sum focal + sum over foreground smooth L1].
RpnLossResult rpn_loss(const AnchorBatch& batch);

// ---------------------------------------------------------------------------
// Second-stage composite loss.

struct RcnnWeights {
  double conf = 1.0;
  double reg = 1.0;
  double temp = 1.0;
  double contra = 1.0;
};

struct ConfidenceTerms {
  std::vector<double> probs;    // predicted confidence
  std::vector<double> targets;  // soft labels from confidence_label
};

struct RegressionTerms {
  nn::Matrix deltas;       // N x 7
  nn::Matrix targets;      // N x 7
  std::vector<char> mask;  // rows that take part
};

struct RcnnLossResult {
  double total = 0.0;
  double conf = 0.0;
  double reg = 0.0;
  double temp = 0.0;
  double contra = 0.0;
  // Gradients of the weighted total.
  std::vector<double> d_probs;
  nn::Matrix d_deltas;
  nn::Matrix d_template_features;
  nn::Matrix d_contrastive_features;
  std::size_t contrastive_skipped = 0;
};

/// BCE averaged over proposals, smooth L1 averaged over masked rows, plus the
/// template and contrastive terms when their batches are given (null = off).
RcnnLossResult rcnn_loss(const ConfidenceTerms& conf, const RegressionTerms& reg, const TemplateLossBatch* temp,
                         const ContrastiveBatch* contra, const RcnnWeights& weights = {},
                         Reduction contra_reduction = Reduction::kSum);

}  // namespace ifg::loss
