#include "ifg/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ifg/kernels.hpp"

namespace ifg {

namespace {

std::uint64_t derive(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x2545f4914f6cdd1dULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_labels(std::span<const ProposalLabel> labels, const AssignmentConfig& cfg) {
  for (const auto& l : labels) {
    const bool ok = l.foreground()   ? l.matched_iou > cfg.fg_threshold
                    : l.ignored()    ? (l.matched_iou >= cfg.bg_threshold && l.matched_iou <= cfg.fg_threshold)
                                     : (l.class_label == 0 && l.matched_iou < cfg.bg_threshold);
    if (!ok) throw std::logic_error("proposal label inconsistent with its matched IoU");
  }
}

void check_confidence_target(double iou, double y) {
  const bool ok = y >= 0.0 && y <= 1.0 && (iou > 0.25 || y == 0.0) && (iou < 0.75 || y == 1.0);
  if (!ok) throw std::logic_error("confidence target out of contract");
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  extractor.validate();
}

AssignmentConfig assignment_config(const RpnConfig& rpn, const RefineConfig& refine) {
  AssignmentConfig a;
  a.fg_threshold = refine.fg_threshold;
  a.bg_threshold = refine.bg_threshold;
  a.anchor = rpn.anchor;
  a.train_nms_threshold = rpn.train_nms_threshold;
  a.train_keep = rpn.train_keep;
  a.positive_sample_iou = refine.positive_iou;
  a.validate();
  return a;
}

Trainer::Trainer(Detector& detector, std::span<const SceneSample> scenes, const TemplateLibrary& templates,
                 const TrainConfig& cfg, ModuleFlags flags, std::uint64_t seed)
    : det_(detector),
      scenes_(scenes),
      cfg_(cfg),
      flags_(flags),
      seed_(seed),
      assign_(assignment_config(detector.config().rpn, detector.config().refine)),
      adam_(nn::AdamConfig{cfg.lr}) {
  cfg_.validate();
  if (flags_.use_tafe && cfg_.extractor.out_dim != det_.config().refine.feature_dim) {
    throw std::invalid_argument("train: intrinsic feature size differs from the feature-prediction head");
  }
  const auto& anchors = det_.anchors();
  for (const auto& s : scenes_) {
    auto t = anchor_targets(anchors.boxes, anchors.classes, s.gt_boxes, s.gt_classes, assign_);
    nn::Matrix rows = nn::Matrix::Zero(static_cast<nn::Index>(anchors.boxes.size()), 7);
    for (std::size_t i = 0; i < t.targets.size(); ++i) {
      if (t.labels[i] < 1) continue;
      const auto a = t.targets[i].to_array();
      for (nn::Index j = 0; j < 7; ++j) rows(static_cast<nn::Index>(i), j) = a[static_cast<std::size_t>(j)];
    }
    anchor_targets_.push_back(std::move(t));
    anchor_target_rows_.push_back(std::move(rows));
  }
  if (flags_.use_tafe) {
    const IntrinsicFeatureExtractor extractor(cfg_.extractor, cfg_.extractor_seed);
    for (const auto& s : scenes_) {
      nn::Matrix m(static_cast<nn::Index>(s.gt_boxes.size()), static_cast<nn::Index>(cfg_.extractor.out_dim));
      for (std::size_t g = 0; g < s.gt_boxes.size(); ++g) {
        const Box3D& b = s.gt_boxes[g];
        const Box3D local = make_box(0, 0, 0, b.l, b.w, b.h, 0);
        const auto pts = adjust_template(templates[class_index(s.gt_classes[g])], local);
        m.row(static_cast<nn::Index>(g)) = intrinsic_feature(pts, extractor).transpose();
      }
      intrinsic_.push_back(std::move(m));
    }
  }
}

LossTerms Trainer::accumulate(std::size_t scene_index, std::uint64_t sample_seed) {
  const SceneSample& scene = scenes_[scene_index];
  const auto& rcfg = det_.config().refine;
  det_.params().zero_grad();
  LossTerms terms;

  // First stage.
  const auto rpn = det_.rpn_forward(scene.cloud);
  loss::AnchorBatch batch;
  batch.probs = rpn.probs;
  batch.labels = anchor_targets_[scene_index].labels;
  batch.deltas = rpn.deltas;
  batch.targets = anchor_target_rows_[scene_index];
  batch.focal = det_.config().rpn.focal;
  const auto rl = loss::rpn_loss(batch);
  terms.rpn = rl.total;
  det_.rpn_backward(rpn, rl.d_probs, rl.d_deltas);

  // Proposals, optionally topped up with jittered GT boxes.
  std::vector<Box3D> boxes;
  std::vector<ObjectClass> classes;
  for (const auto& p : det_.proposals(rpn, assign_.train_nms_threshold, assign_.train_keep)) {
    boxes.push_back(p.box);
    classes.push_back(p.cls);
  }
  std::mt19937_64 rng(sample_seed);
  if (rcfg.jitter_gt) {
    std::normal_distribution<double> dxyz(0.0, rcfg.jitter_xyz), dth(0.0, rcfg.jitter_theta);
    for (std::size_t g = 0; g < scene.gt_boxes.size(); ++g) {
      for (std::size_t k = 0; k < rcfg.jitter_per_gt; ++k) {
        Box3D b = scene.gt_boxes[g];
        b.x += dxyz(rng);
        b.y += dxyz(rng);
        b.z += dxyz(rng);
        b.theta = wrap_angle(b.theta + dth(rng));
        boxes.push_back(b);
        classes.push_back(scene.gt_classes[g]);
      }
    }
  }
  if (boxes.empty()) {
    terms.total = terms.rpn;
    return terms;
  }

  const auto matches = match_proposals_to_gt(boxes, scene.gt_boxes);
  const auto labels = label_proposals(matches, scene.gt_classes, assign_);
  check_labels(labels, assign_);
  const auto chosen = sample_balanced(labels, rcfg.sample_size, rcfg.positive_iou, rng());

  std::vector<Box3D> sampled;
  for (auto i : chosen) sampled.push_back(boxes[i]);
  const HeadMask heads{flags_.use_tafe, flags_.use_pscl};
  const auto ref = det_.refine_forward(scene.cloud, sampled, heads);
  const auto n = static_cast<nn::Index>(chosen.size());

  loss::ConfidenceTerms conf;
  conf.probs = ref.conf;
  loss::RegressionTerms reg;
  reg.deltas = ref.deltas;
  reg.targets = nn::Matrix::Zero(n, 7);
  reg.mask.assign(chosen.size(), 0);
  std::vector<double> same_class_iou(chosen.size(), 0.0);
  for (std::size_t s = 0; s < chosen.size(); ++s) {
    const auto& m = matches[chosen[s]];
    if (m.gt_index && scene.gt_classes[*m.gt_index] == classes[chosen[s]]) same_class_iou[s] = m.iou;
    const double y = loss::confidence_label(same_class_iou[s]);
    check_confidence_target(same_class_iou[s], y);
    conf.targets.push_back(y);
    if (same_class_iou[s] > rcfg.mu) {
      reg.mask[s] = 1;
      const Box3D gt = closest_heading(scene.gt_boxes[*m.gt_index], sampled[s].theta);
      const auto t = encode_box(gt, sampled[s]).to_array();
      for (nn::Index j = 0; j < 7; ++j) reg.targets(static_cast<nn::Index>(s), j) = t[static_cast<std::size_t>(j)];
    }
  }

  std::optional<loss::TemplateLossBatch> temp;
  if (flags_.use_tafe) {
    temp.emplace();
    temp->features = ref.alpha;
    temp->targets = nn::Matrix::Zero(n, ref.alpha.cols());
    temp->mu = rcfg.mu;
    for (std::size_t s = 0; s < chosen.size(); ++s) {
      const bool active = reg.mask[s] != 0;
      temp->ious.push_back(active ? same_class_iou[s] : 0.0);
      if (active) {
        temp->targets.row(static_cast<nn::Index>(s)) =
            intrinsic_[scene_index].row(static_cast<nn::Index>(*matches[chosen[s]].gt_index));
      }
    }
  }

  std::optional<loss::ContrastiveBatch> contra;
  std::vector<std::size_t> contra_rows;
  if (flags_.use_pscl) {
    for (std::size_t s = 0; s < chosen.size(); ++s) {
      if (!labels[chosen[s]].ignored() && !ref.empty[s]) contra_rows.push_back(s);
    }
    if (contra_rows.size() >= 2) {
      contra.emplace();
      contra->tau = rcfg.tau;
      contra->features.resize(static_cast<nn::Index>(contra_rows.size()), ref.proj.cols());
      for (std::size_t k = 0; k < contra_rows.size(); ++k) {
        contra->features.row(static_cast<nn::Index>(k)) = ref.proj.row(static_cast<nn::Index>(contra_rows[k]));
        contra->labels.push_back(labels[chosen[contra_rows[k]]].class_label);
      }
    }
  }

  const auto rc = loss::rcnn_loss(conf, reg, temp ? &*temp : nullptr, contra ? &*contra : nullptr, cfg_.weights,
                                  loss::Reduction::kMeanOverAnchors);
  terms.conf = rc.conf;
  terms.reg = rc.reg;
  terms.temp = rc.temp;
  terms.contra = rc.contra;
  terms.total = terms.rpn + rc.total;

  nn::Matrix d_proj;
  if (contra) {
    d_proj = nn::Matrix::Zero(ref.proj.rows(), ref.proj.cols());
    for (std::size_t k = 0; k < contra_rows.size(); ++k) {
      d_proj.row(static_cast<nn::Index>(contra_rows[k])) = rc.d_contrastive_features.row(static_cast<nn::Index>(k));
    }
  }
  det_.refine_backward(ref, rc.d_probs, rc.d_deltas, temp ? rc.d_template_features : nn::Matrix{}, d_proj);
  return terms;
}

LossTerms Trainer::step(std::size_t scene, std::uint64_t sample_seed) {
  const auto terms = accumulate(scene, sample_seed);
  if (std::isfinite(terms.total)) adam_.step(det_.params());
  return terms;
}

TrainResult Trainer::run(const std::function<void(const EpochLoss&)>& on_epoch) {
  TrainResult result;
  if (scenes_.empty()) throw std::invalid_argument("train: no scenes");
  std::vector<std::size_t> order(scenes_.size());
  std::map<std::string, nn::Matrix> last_good;
  for (std::size_t e = 1; e <= cfg_.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive(seed_, e));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLoss epoch;
    epoch.epoch = e;
    for (std::size_t k = 0; k < order.size(); ++k) {
      last_good.clear();
      for (const auto& [name, p] : det_.params()) last_good[name] = p.value;
      const auto t = step(order[k], derive(derive(seed_, e), k));
      if (!std::isfinite(t.total)) {
        for (auto& [name, p] : det_.params()) p.value = last_good.at(name);
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(e) + ", scene seed " +
                         std::to_string(scenes_[order[k]].seed) + "; parameters restored to the last good step";
        return result;
      }
      epoch.loss.rpn += t.rpn;
      epoch.loss.conf += t.conf;
      epoch.loss.reg += t.reg;
      epoch.loss.temp += t.temp;
      epoch.loss.contra += t.contra;
      epoch.loss.total += t.total;
    }
    const double inv = 1.0 / static_cast<double>(order.size());
    for (double* v : {&epoch.loss.rpn, &epoch.loss.conf, &epoch.loss.reg, &epoch.loss.temp, &epoch.loss.contra,
                      &epoch.loss.total}) {
      *v *= inv;
    }
    result.log.push_back(epoch);
    if (on_epoch) on_epoch(epoch);
  }
  return result;
}

std::string loss_log_csv(std::span<const EpochLoss> log) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,l_rpn,l_conf,l_reg,l_temp,l_contra,total\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.loss.rpn << ',' << e.loss.conf << ',' << e.loss.reg << ',' << e.loss.temp << ','
       << e.loss.contra << ',' << e.loss.total << '\n';
  }
  return os.str();
}

}  // namespace ifg
