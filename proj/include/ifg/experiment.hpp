#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ifg/config.hpp"
#include "ifg/detector.hpp"
#include "ifg/eval.hpp"
#include "ifg/train.hpp"

namespace ifg {

struct TrainedModel {
  Detector detector;
  TrainResult result;
};

/// Generates the configured training scenes and trains a fresh detector
/// initialized from `seed`.
TrainedModel train_model(const ExperimentConfig& cfg, ModuleFlags flags, std::uint64_t seed,
                         const std::function<void(const EpochLoss&)>& on_epoch = {});

std::vector<LabeledBox> to_labeled(std::span<const Detection> detections);

/// Runs inference on every scene and pairs the detections with the scene GT.
std::vector<EvalFrame> run_inference(const Detector& detector, std::span<const SceneSample> scenes,
                                     const InferConfig& cfg);

struct AblationRow {
  char method = 'A';
  bool tafe = false;
  bool pscl = false;
  std::array<std::optional<double>, 3> ap;  // car, pedestrian, cyclist, in [0, 1]
  std::optional<double> mean;
};

/// The 2 x 2 of {TAFE} x {PSCL}: A = neither, B = TAFE, C = PSCL, D = both.
/// Every arm shares the training scenes, the initialization seeds and the
/// held-out test scenes; APs are averaged over `cfg.ablation.runs` seeds.
/// `on_model` sees every trained detector before it is discarded.
std::vector<AblationRow> run_ablation(
    const ExperimentConfig& cfg, std::uint64_t seed, const std::function<void(const std::string&)>& progress = {},
    const std::function<void(const AblationRow&, std::size_t run, const TrainedModel&)>& on_model = {});

/// `method,tafe,pscl,car_ap,ped_ap,cyc_ap,mean_ap`, AP in percent.
std::string ablation_csv(std::span<const AblationRow> rows);

/// Median wall time, in seconds, of one inference pass over `scenes`.
double time_inference(const Detector& detector, std::span<const SceneSample> scenes, const InferConfig& cfg,
                      std::size_t repeats);

}  // namespace ifg
