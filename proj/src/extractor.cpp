#include "ifg/extractor.hpp"

#include <stdexcept>

#include "ifg/kernels.hpp"

namespace ifg {

void FeatureExtractorConfig::validate() const {
  if (centers == 0 || group1 == 0 || group2 == 0 || local_hidden == 0 || local_dim == 0 || out_dim == 0) {
    throw std::invalid_argument("feature extractor: counts must be positive");
  }
  if (!(radius1 > 0.0) || !(radius2 > 0.0)) throw std::invalid_argument("feature extractor: radii must be positive");
  for (auto h : fc_hidden) {
    if (h == 0) throw std::invalid_argument("feature extractor: hidden widths must be positive");
  }
}

nn::Matrix set_abstraction(const PointCloud& points, std::span<const std::size_t> centers, double radius,
                           std::size_t k_max, const nn::Mlp& mlp, SetAbstractionCache* cache) {
  const auto groups = kernels::group_points(points, centers, radius, k_max);
  std::vector<std::size_t> offsets{0};
  for (const auto& g : groups) offsets.push_back(offsets.back() + g.size());

  nn::Matrix local(static_cast<nn::Index>(offsets.back()), 3);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const Point3 center = points[centers[c]];
    for (std::size_t j = 0; j < groups[c].size(); ++j) {
      const Point3 d = points[groups[c][j]] - center;
      const auto r = static_cast<nn::Index>(offsets[c] + j);
      local(r, 0) = d.x;
      local(r, 1) = d.y;
      local(r, 2) = d.z;
    }
  }

  SetAbstractionCache scratch;
  SetAbstractionCache& sc = cache ? *cache : scratch;
  const nn::Matrix per_point = mlp.forward(local, cache ? &sc.mlp : nullptr);
  sc.pooled = nn::segment_max(per_point, offsets);
  if (cache) {
    sc.offsets = std::move(offsets);
    sc.local = std::move(local);
  }
  return sc.pooled.values;
}

void set_abstraction_backward(nn::Mlp& mlp, const SetAbstractionCache& cache, const nn::Matrix& dout) {
  const nn::Matrix d_points = nn::segment_max_backward(cache.pooled, dout, cache.local.rows());
  mlp.backward(cache.mlp, d_points);
}

IntrinsicFeatureExtractor::IntrinsicFeatureExtractor(const FeatureExtractorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  const auto h = static_cast<nn::Index>(cfg_.local_hidden);
  const auto c = static_cast<nn::Index>(cfg_.local_dim);
  sa1_ = nn::Mlp(store_, "tafe.sa1", {3, h, c}, true, rng);
  sa2_ = nn::Mlp(store_, "tafe.sa2", {3, h, c}, true, rng);
  std::vector<nn::Index> widths{static_cast<nn::Index>(cfg_.centers) * 2 * c};
  for (auto w : cfg_.fc_hidden) widths.push_back(static_cast<nn::Index>(w));
  widths.push_back(static_cast<nn::Index>(cfg_.out_dim));
  fc_ = nn::Mlp(store_, "tafe.fc", widths, false, rng);
}

nn::Vector IntrinsicFeatureExtractor::forward(const PointCloud& points, Cache* cache) const {
  if (points.size() < cfg_.centers) {
    throw std::invalid_argument("intrinsic_feature: need at least " + std::to_string(cfg_.centers) + " points, got " +
                                std::to_string(points.size()));
  }
  auto centers = farthest_point_sampling(points, cfg_.centers);
  centers.resize(cfg_.centers);

  const nn::Matrix f1 =
      set_abstraction(points, centers, cfg_.radius1, cfg_.group1, sa1_, cache ? &cache->sa1 : nullptr);
  const nn::Matrix f2 =
      set_abstraction(points, centers, cfg_.radius2, cfg_.group2, sa2_, cache ? &cache->sa2 : nullptr);

  // m x 2C, flattened row-major (center by center).
  const auto c = static_cast<nn::Index>(cfg_.local_dim);
  nn::Matrix flat(1, f1.rows() * 2 * c);
  for (nn::Index r = 0; r < f1.rows(); ++r) {
    flat.block(0, r * 2 * c, 1, c) = f1.row(r);
    flat.block(0, r * 2 * c + c, 1, c) = f2.row(r);
  }
  const nn::Matrix out = fc_.forward(flat, cache ? &cache->fc : nullptr);
  if (cache) cache->centers = std::move(centers);
  return out.row(0).transpose();
}

void IntrinsicFeatureExtractor::backward(const Cache& cache, const nn::Vector& dout) {
  const nn::Matrix d_flat = fc_.backward(cache.fc, dout.transpose());
  const auto c = static_cast<nn::Index>(cfg_.local_dim);
  const auto m = static_cast<nn::Index>(cache.centers.size());
  nn::Matrix d1(m, c), d2(m, c);
  for (nn::Index r = 0; r < m; ++r) {
    d1.row(r) = d_flat.block(0, r * 2 * c, 1, c);
    d2.row(r) = d_flat.block(0, r * 2 * c + c, 1, c);
  }
  set_abstraction_backward(sa1_, cache.sa1, d1);
  set_abstraction_backward(sa2_, cache.sa2, d2);
}

nn::Vector intrinsic_feature(const PointCloud& template_points, const IntrinsicFeatureExtractor& extractor) {
  return extractor.forward(template_points);
}

}  // namespace ifg
