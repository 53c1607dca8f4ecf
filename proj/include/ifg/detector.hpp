#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ifg/assign.hpp"
#include "ifg/geom.hpp"
#include "ifg/losses.hpp"
#include "ifg/netcore.hpp"
#include "ifg/pointops.hpp"
#include "ifg/scene.hpp"
#include "ifg/templates.hpp"

namespace ifg {

inline constexpr std::size_t kCellStats = 4;                   // log count, mean z, max z, z std
inline constexpr std::size_t kWindowInputs = 9 * kCellStats;   // 3x3 cell window
inline constexpr std::size_t kYawsPerClass = 2;                // 0 and pi/2
inline constexpr std::size_t kAnchorsPerCell = 3 * kYawsPerClass;
inline constexpr std::size_t kAnchorOutputs = 8;               // logit + 7 deltas

/// BEV grid over the scene extents. Cell (ix, iy) has index ix * ny + iy.
struct GridSpec {
  double x_min = 0.0, x_max = 40.0;
  double y_min = -20.0, y_max = 20.0;
  double z_min = -1.5, z_max = 1.5;
  double ground_z = -1.4;
  double cell = 0.4;

  std::size_t nx() const;
  std::size_t ny() const;
  std::size_t cells() const { return nx() * ny(); }
  static GridSpec from_scene(const SceneGenConfig& scene, double cell);
  void validate() const;
};

struct RpnConfig {
  double cell = 0.4;
  std::vector<std::size_t> hidden{64, 64};
  double prior = 0.01;            // initial foreground probability
  std::size_t pre_nms_top = 1024;
  double train_nms_threshold = 0.8;
  std::size_t train_keep = 128;
  std::array<AnchorThresholds, 3> anchor{{{0.6, 0.45}, {0.5, 0.35}, {0.5, 0.35}}};
  loss::FocalParams focal;

  void validate() const;
};

struct RefineConfig {
  double pool_margin = 1.2;
  std::size_t max_points = 128;
  std::vector<std::size_t> encoder{32, 64};
  std::size_t head_hidden = 32;
  std::size_t feature_dim = 16;  // must equal the intrinsic feature size
  std::size_t proj_hidden = 64;
  std::size_t proj_dim = 128;    // beta
  double tau = 0.1;
  double mu = 0.55;
  double fg_threshold = 0.75;
  double bg_threshold = 0.25;
  std::size_t sample_size = 128;
  double positive_iou = 0.55;
  bool jitter_gt = true;  // add noise-perturbed GT boxes to the training proposals
  std::size_t jitter_per_gt = 4;
  double jitter_xyz = 0.1;
  double jitter_theta = 0.1;

  void validate() const;
};

struct InferConfig {
  double nms_threshold = 0.7;
  std::size_t keep = 100;
  double final_nms_threshold = 0.1;
  double score_threshold = 0.0;

  void validate() const;
};

struct DetectorConfig {
  GridSpec grid;
  RpnConfig rpn;
  RefineConfig refine;

  void validate() const;
};

struct Detection {
  Box3D box;
  int class_id = 1;
  double score = 0.0;
};

struct Proposal {
  Box3D box;
  ObjectClass cls = ObjectClass::kCar;
  double score = 0.0;
};

/// Per-cell window statistics, cells x kWindowInputs. Cells outside the grid
/// and empty cells contribute zeros.
nn::Matrix cell_window_features(const PointCloud& cloud, const GridSpec& grid);

/// Anchor boxes in cell -> class -> yaw order, with their classes.
struct AnchorSet {
  std::vector<Box3D> boxes;
  std::vector<ObjectClass> classes;
};
AnchorSet make_anchors(const GridSpec& grid);

/// Box from deltas with the size terms clamped to +-4 before exponentiation.
Box3D decode_clamped(std::span<const double> deltas, const Box3D& anchor);

/// Which optional refinement heads to evaluate.
struct HeadMask {
  bool feature = false;
  bool projection = false;
};

class Detector {
 public:
  struct RpnOutput {
    nn::Matrix inputs;  // cells x kWindowInputs
    nn::Mlp::Cache cache;
    nn::Matrix raw;              // cells x (kAnchorsPerCell * kAnchorOutputs)
    std::vector<double> probs;   // per anchor
    nn::Matrix deltas;           // anchors x 7
  };

  struct RefineOutput {
    std::vector<std::size_t> offsets;  // pooled point ranges per proposal
    nn::Matrix local;                  // stacked canonical coordinates
    nn::Mlp::Cache encoder;
    nn::SegmentMax pooled;
    std::vector<char> empty;  // proposal had no points
    nn::Mlp::Cache conf_cache, reg_cache, feat_cache, proj_cache;
    std::vector<double> conf;  // sigmoid confidence
    nn::Matrix deltas;         // S x 7
    nn::Matrix alpha;          // S x feature_dim, empty unless requested
    nn::Matrix proj_raw;       // S x proj_dim before normalization
    nn::Matrix proj;           // unit rows (zero rows for empty proposals)
  };

  Detector(const DetectorConfig& cfg, std::uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  const AnchorSet& anchors() const { return anchors_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  RpnOutput rpn_forward(const PointCloud& cloud) const;
  /// Accumulates parameter gradients from per-anchor probability and delta gradients.
  void rpn_backward(const RpnOutput& out, std::span<const double> d_probs, const nn::Matrix& d_deltas);

  /// Top-scoring anchors, decoded, then class-agnostic NMS.
  std::vector<Proposal> proposals(const RpnOutput& out, double nms_threshold, std::size_t keep) const;

  RefineOutput refine_forward(const PointCloud& cloud, std::span<const Box3D> proposals, HeadMask heads) const;
  /// Empty gradient matrices / spans mean "head not used".
  void refine_backward(const RefineOutput& out, std::span<const double> d_conf, const nn::Matrix& d_deltas,
                       const nn::Matrix& d_alpha, const nn::Matrix& d_proj);

  std::vector<Detection> infer(const PointCloud& cloud, const InferConfig& cfg) const;

  void save(const std::filesystem::path& path) const { nn::save_checkpoint(path, store_); }
  void load(const std::filesystem::path& path) { nn::load_checkpoint(path, store_); }

 private:
  DetectorConfig cfg_;
  AnchorSet anchors_;
  nn::ParamStore store_;
  nn::Mlp rpn_;
  nn::Mlp encoder_;
  nn::Mlp conf_head_;
  nn::Mlp reg_head_;
  nn::Mlp feat_head_;
  nn::Mlp proj_head_;
};

}  // namespace ifg
