#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifg/assign.hpp"
#include "ifg/detector.hpp"
#include "ifg/extractor.hpp"
#include "ifg/losses.hpp"
#include "ifg/scene.hpp"

namespace ifg {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t scenes = 50;
  std::uint64_t scene_seed = 1000;  // training scenes use seeds scene_seed, scene_seed + 1, ...
  double lr = 1e-3;
  loss::RcnnWeights weights;
  FeatureExtractorConfig extractor;
  std::uint64_t extractor_seed = 7;

  void validate() const;
};

struct ModuleFlags {
  bool use_tafe = true;
  bool use_pscl = true;
};

struct LossTerms {
  double rpn = 0.0;
  double conf = 0.0;
  double reg = 0.0;
  double temp = 0.0;
  double contra = 0.0;
  double total = 0.0;
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  LossTerms loss;         // mean over the epoch's steps
};

struct TrainResult {
  std::vector<EpochLoss> log;
  bool diverged = false;
  std::string message;
};

/// Owns the per-scene caches (anchor targets, intrinsic targets) and runs
/// optimizer steps on a detector. The intrinsic feature extractor receives no
/// gradient, so its targets are computed once per GT box.
class Trainer {
 public:
  Trainer(Detector& detector, std::span<const SceneSample> scenes, const TemplateLibrary& templates,
          const TrainConfig& cfg, ModuleFlags flags, std::uint64_t seed);

  /// Forward and backward on one scene; fills parameter gradients (after
  /// zeroing them) without updating. `sample_seed` drives proposal jitter and sampling.
  LossTerms accumulate(std::size_t scene, std::uint64_t sample_seed);
  /// accumulate() followed by an optimizer step.
  LossTerms step(std::size_t scene, std::uint64_t sample_seed);

  /// Full training run; the loss is checked for finiteness after every step.
  TrainResult run(const std::function<void(const EpochLoss&)>& on_epoch = {});

  const nn::Matrix& intrinsic_targets(std::size_t scene) const { return intrinsic_[scene]; }

 private:
  Detector& det_;
  std::span<const SceneSample> scenes_;
  TrainConfig cfg_;
  ModuleFlags flags_;
  std::uint64_t seed_;
  AssignmentConfig assign_;
  nn::Adam adam_;
  std::vector<AnchorTargets> anchor_targets_;
  std::vector<nn::Matrix> anchor_target_rows_;  // anchors x 7
  std::vector<nn::Matrix> intrinsic_;           // per scene: gts x feature_dim
};

AssignmentConfig assignment_config(const RpnConfig& rpn, const RefineConfig& refine);

/// `epoch,l_rpn,l_conf,l_reg,l_temp,l_contra,total`
std::string loss_log_csv(std::span<const EpochLoss> log);

}  // namespace ifg
