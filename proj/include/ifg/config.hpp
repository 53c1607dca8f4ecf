#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ifg/detector.hpp"
#include "ifg/eval.hpp"
#include "ifg/scene.hpp"
#include "ifg/train.hpp"

namespace ifg {

struct AblationConfig {
  bool use_tafe = true;
  bool use_pscl = true;
  std::size_t test_scenes = 200;
  std::uint64_t test_seed = 100000;  // held-out scenes, disjoint from training seeds
  std::size_t runs = 1;              // training seeds per arm, averaged
  RecallMode mode = RecallMode::kR11;
};

/// Everything an experiment needs. JSON sections: scene, rpn, refine, train,
/// infer, ablation; unknown keys are rejected.
struct ExperimentConfig {
  SceneGenConfig scene;
  RpnConfig rpn;
  RefineConfig refine;
  TrainConfig train;
  InferConfig infer;
  AblationConfig ablation;

  DetectorConfig detector() const;
  void validate() const;
};

/// Throws std::invalid_argument naming the offending key.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full effective configuration, pretty-printed.
std::string config_json(const ExperimentConfig& cfg);

}  // namespace ifg
