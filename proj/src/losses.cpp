#include "ifg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ifg::loss {

namespace {

struct Clamped {
  double p;
  bool active;  // false when the clamp bit, so the gradient is zero
};

Clamped clamp_prob(double p) {
  const double c = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return {c, c == p};
}

double smooth_l1_scalar(double d) { return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5; }
double smooth_l1_grad(double d) { return std::clamp(d, -1.0, 1.0); }

}  // namespace

VectorLoss smooth_l1(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("smooth_l1: shape mismatch");
  VectorLoss out{0.0, std::vector<double>(pred.size())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.value += smooth_l1_scalar(d);
    out.grad[i] = smooth_l1_grad(d);
  }
  return out;
}

ScalarLoss focal_loss(double p, int label, const FocalParams& fp) {
  const auto [q, active] = clamp_prob(p);
  const double g = fp.gamma;
  if (label >= 1) {
    const double w = std::pow(1.0 - q, g);
    const double value = -fp.alpha * w * std::log(q);
    const double grad = -fp.alpha * (-g * std::pow(1.0 - q, g - 1.0) * std::log(q) + w / q);
    return {value, active ? grad : 0.0};
  }
  const double w = std::pow(q, g);
  const double value = -(1.0 - fp.alpha) * w * std::log(1.0 - q);
  const double grad = -(1.0 - fp.alpha) * (g * std::pow(q, g - 1.0) * std::log(1.0 - q) - w / (1.0 - q));
  return {value, active ? grad : 0.0};
}

ScalarLoss bce(double p, double y) {
  const auto [q, active] = clamp_prob(p);
  const double value = -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
  const double grad = -y / q + (1.0 - y) / (1.0 - q);
  return {value, active ? grad : 0.0};
}

double confidence_label(double iou) { return std::min(1.0, std::max(0.0, 2.0 * iou - 0.5)); }

SupConResult supcon_loss(const ContrastiveBatch& batch, Reduction reduction) {
  const auto n = batch.features.rows();
  if (n < 2) throw std::invalid_argument("supcon_loss: need at least 2 features");
  if (static_cast<std::size_t>(n) != batch.labels.size()) throw std::invalid_argument("supcon_loss: label count mismatch");
  if (!(batch.tau > 0.0)) throw std::invalid_argument("supcon_loss: tau must be positive");

  const nn::Matrix logits = (batch.features * batch.features.transpose()) / batch.tau;
  // coeff(i, j) = d L_i / d logits(i, j) before the reduction weight.
  nn::Matrix coeff = nn::Matrix::Zero(n, n);
  SupConResult out;
  std::vector<double> per_anchor(static_cast<std::size_t>(n), 0.0);

  for (nn::Index i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (nn::Index j = 0; j < n; ++j) {
      if (j != i && batch.labels[j] == batch.labels[i]) ++positives;
    }
    if (positives == 0) {
      ++out.skipped_anchors;
      continue;
    }
    ++out.contributing_anchors;

    double mx = -INFINITY;
    for (nn::Index a = 0; a < n; ++a) {
      if (a != i) mx = std::max(mx, logits(i, a));
    }
    double denom = 0.0;
    for (nn::Index a = 0; a < n; ++a) {
      if (a != i) denom += std::exp(logits(i, a) - mx);
    }
    const double log_denom = mx + std::log(denom);

    const double inv_p = 1.0 / static_cast<double>(positives);
    double term = 0.0;
    for (nn::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      coeff(i, j) = std::exp(logits(i, j) - log_denom);
      if (batch.labels[j] == batch.labels[i]) {
        term -= inv_p * (logits(i, j) - log_denom);
        coeff(i, j) -= inv_p;
      }
    }
    per_anchor[static_cast<std::size_t>(i)] = term;
  }

  const double scale = (reduction == Reduction::kMeanOverAnchors && out.contributing_anchors > 0)
                           ? 1.0 / static_cast<double>(out.contributing_anchors)
                           : 1.0;
  for (double t : per_anchor) out.value += t;
  out.value *= scale;
  coeff *= scale;
  out.grad = (coeff + coeff.transpose()) * batch.features / batch.tau;
  return out;
}

TemplateLossResult template_loss(const TemplateLossBatch& batch) {
  const auto n = batch.features.rows();
  if (batch.targets.rows() != n || batch.targets.cols() != batch.features.cols() ||
      batch.ious.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("template_loss: shape mismatch");
  }
  TemplateLossResult out;
  out.grad = nn::Matrix::Zero(n, batch.features.cols());
  double sum = 0.0;
  for (nn::Index i = 0; i < n; ++i) {
    if (!(batch.ious[static_cast<std::size_t>(i)] > batch.mu)) continue;
    ++out.participating;
    for (nn::Index c = 0; c < batch.features.cols(); ++c) {
      const double d = batch.features(i, c) - batch.targets(i, c);
      sum += smooth_l1_scalar(d);
      out.grad(i, c) = smooth_l1_grad(d);
    }
  }
  if (out.participating == 0) return out;
  const double norm = 1.0 / static_cast<double>(out.participating);
  out.value = sum * norm;
  out.grad *= norm;
  return out;
}

RpnLossResult rpn_loss(const AnchorBatch& batch) {
  const std::size_t n = batch.probs.size();
  if (batch.labels.size() != n || static_cast<std::size_t>(batch.deltas.rows()) != n ||
      batch.deltas.rows() != batch.targets.rows() || batch.deltas.cols() != batch.targets.cols()) {
    throw std::invalid_argument("rpn_loss: shape mismatch");
  }
  RpnLossResult out;
  out.d_probs.assign(n, 0.0);
  out.d_deltas = nn::Matrix::Zero(batch.deltas.rows(), batch.deltas.cols());
  for (int label : batch.labels) out.num_fg += label >= 1 ? 1 : 0;
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, out.num_fg));

  for (std::size_t i = 0; i < n; ++i) {
    const int label = batch.labels[i];
    if (label == kIgnoredLabel) continue;
    const auto f = focal_loss(batch.probs[i], label >= 1 ? 1 : 0, batch.focal);
    out.cls += f.value;
    out.d_probs[i] = f.grad * norm;
    if (label >= 1) {
      const auto r = static_cast<nn::Index>(i);
      for (nn::Index c = 0; c < batch.deltas.cols(); ++c) {
        const double d = batch.deltas(r, c) - batch.targets(r, c);
        out.reg += smooth_l1_scalar(d);
        out.d_deltas(r, c) = smooth_l1_grad(d) * norm;
      }
    }
  }
  out.cls *= norm;
  out.reg *= norm;
  out.total = out.cls + out.reg;
  return out;
}

RcnnLossResult rcnn_loss(const ConfidenceTerms& conf, const RegressionTerms& reg, const TemplateLossBatch* temp,
                         const ContrastiveBatch* contra, const RcnnWeights& weights, Reduction contra_reduction) {
  const std::size_t n = conf.probs.size();
  if (conf.targets.size() != n) throw std::invalid_argument("rcnn_loss: confidence size mismatch");
  if (reg.deltas.rows() != reg.targets.rows() || reg.deltas.cols() != reg.targets.cols() ||
      reg.mask.size() != static_cast<std::size_t>(reg.deltas.rows())) {
    throw std::invalid_argument("rcnn_loss: regression shape mismatch");
  }
  RcnnLossResult out;

  out.d_probs.assign(n, 0.0);
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = bce(conf.probs[i], conf.targets[i]);
      out.conf += b.value * inv;
      out.d_probs[i] = weights.conf * b.grad * inv;
    }
  }

  out.d_deltas = nn::Matrix::Zero(reg.deltas.rows(), reg.deltas.cols());
  const auto active = static_cast<std::size_t>(std::count(reg.mask.begin(), reg.mask.end(), 1));
  if (active > 0) {
    const double inv = 1.0 / static_cast<double>(active);
    for (nn::Index i = 0; i < reg.deltas.rows(); ++i) {
      if (!reg.mask[static_cast<std::size_t>(i)]) continue;
      for (nn::Index c = 0; c < reg.deltas.cols(); ++c) {
        const double d = reg.deltas(i, c) - reg.targets(i, c);
        out.reg += smooth_l1_scalar(d) * inv;
        out.d_deltas(i, c) = weights.reg * smooth_l1_grad(d) * inv;
      }
    }
  }

  if (temp) {
    auto t = template_loss(*temp);
    out.temp = t.value;
    out.d_template_features = weights.temp * t.grad;
  }
  if (contra) {
    auto c = supcon_loss(*contra, contra_reduction);
    out.contra = c.value;
    out.d_contrastive_features = weights.contra * c.grad;
    out.contrastive_skipped = c.skipped_anchors;
  }

  out.total = weights.conf * out.conf + weights.reg * out.reg + weights.temp * out.temp + weights.contra * out.contra;
  return out;
}

}  // namespace ifg::loss
