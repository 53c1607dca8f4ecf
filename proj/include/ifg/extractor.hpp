#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ifg/netcore.hpp"
#include "ifg/pointops.hpp"

namespace ifg {

/// Two-radius PointNet-style encoder that turns an adjusted template into a
/// global intrinsic feature.
struct FeatureExtractorConfig {
  std::size_t centers = 128;      // FPS centers m
  double radius1 = 0.2;           // m
  double radius2 = 0.4;           // m
  std::size_t group1 = 16;        // k1
  std::size_t group2 = 32;        // k2
  std::size_t local_hidden = 32;  // shared MLP 3 -> local_hidden -> local_dim
  std::size_t local_dim = 32;     // C
  std::vector<std::size_t> fc_hidden{256, 64};
  std::size_t out_dim = 16;

  void validate() const;
};

struct SetAbstractionCache {
  std::vector<std::size_t> offsets;  // group boundaries into the stacked rows
  nn::Matrix local;                  // stacked (point - center) offsets
  nn::Mlp::Cache mlp;
  nn::SegmentMax pooled;
};

/// Per-center feature: columnwise max of the shared MLP over the group's local
/// offsets. Returns centers x C.
nn::Matrix set_abstraction(const PointCloud& points, std::span<const std::size_t> centers, double radius,
                           std::size_t k_max, const nn::Mlp& mlp, SetAbstractionCache* cache = nullptr);
/// Accumulates MLP parameter gradients; gradient flows only to argmax rows.
void set_abstraction_backward(nn::Mlp& mlp, const SetAbstractionCache& cache, const nn::Matrix& dout);

class IntrinsicFeatureExtractor {
 public:
  struct Cache {
    std::vector<std::size_t> centers;
    SetAbstractionCache sa1;
    SetAbstractionCache sa2;
    nn::Mlp::Cache fc;
  };

  IntrinsicFeatureExtractor(const FeatureExtractorConfig& cfg, std::uint64_t seed);

  /// Throws std::invalid_argument when the cloud has fewer than `centers` points.
  nn::Vector forward(const PointCloud& points, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const nn::Vector& dout);

  const FeatureExtractorConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

 private:
  FeatureExtractorConfig cfg_;
  nn::ParamStore store_;
  nn::Mlp sa1_;
  nn::Mlp sa2_;
  nn::Mlp fc_;
};

nn::Vector intrinsic_feature(const PointCloud& template_points, const IntrinsicFeatureExtractor& extractor);

}  // namespace ifg
