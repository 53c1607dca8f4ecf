#include "ifg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ifg/kernels.hpp"

namespace ifg {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<nn::Index> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<nn::Index> w{static_cast<nn::Index>(in)};
  for (auto h : hidden) w.push_back(static_cast<nn::Index>(h));
  w.push_back(static_cast<nn::Index>(out));
  return w;
}

constexpr double kDeltaClamp = 4.0;

}  // namespace

std::size_t GridSpec::nx() const { return static_cast<std::size_t>(std::ceil((x_max - x_min) / cell - 1e-9)); }
std::size_t GridSpec::ny() const { return static_cast<std::size_t>(std::ceil((y_max - y_min) / cell - 1e-9)); }

GridSpec GridSpec::from_scene(const SceneGenConfig& s, double cell) {
  return {s.x_min, s.x_max, s.y_min, s.y_max, s.z_min, s.z_max, s.ground_z, cell};
}

void GridSpec::validate() const {
  if (!(cell > 0.0) || !(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max)) {
    throw std::invalid_argument("grid: degenerate extents or cell size");
  }
}

void RpnConfig::validate() const {
  if (!(cell > 0.0)) throw std::invalid_argument("rpn: cell must be positive");
  if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("rpn: prior must be in (0, 1)");
  if (pre_nms_top == 0 || train_keep == 0) throw std::invalid_argument("rpn: pre_nms_top and train_keep must be positive");
  for (const auto& t : anchor) {
    if (!(t.neg < t.pos)) throw std::invalid_argument("rpn: anchor neg threshold must be below pos");
  }
}

void RefineConfig::validate() const {
  if (!(pool_margin >= 1.0)) throw std::invalid_argument("refine: pool_margin must be >= 1");
  if (max_points == 0 || encoder.empty() || head_hidden == 0 || feature_dim == 0 || proj_dim == 0) {
    throw std::invalid_argument("refine: layer sizes must be positive");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("refine: tau must be positive");
  if (!(0.0 <= bg_threshold && bg_threshold < fg_threshold && fg_threshold <= 1.0)) {
    throw std::invalid_argument("refine: need 0 <= bg_threshold < fg_threshold <= 1");
  }
  if (sample_size == 0) throw std::invalid_argument("refine: sample_size must be positive");
}

void InferConfig::validate() const {
  if (keep == 0) throw std::invalid_argument("infer: keep must be positive");
  if (!(nms_threshold >= 0.0 && nms_threshold <= 1.0 && final_nms_threshold >= 0.0 && final_nms_threshold <= 1.0)) {
    throw std::invalid_argument("infer: NMS thresholds must be in [0, 1]");
  }
}

void DetectorConfig::validate() const {
  grid.validate();
  rpn.validate();
  refine.validate();
}

nn::Matrix cell_window_features(const PointCloud& cloud, const GridSpec& grid) {
  const std::size_t nx = grid.nx(), ny = grid.ny();
  std::vector<double> count(nx * ny, 0.0), sum(nx * ny, 0.0), sumsq(nx * ny, 0.0), zmax(nx * ny, 0.0);
  for (const auto& p : cloud) {
    if (p.x < grid.x_min || p.x >= grid.x_max || p.y < grid.y_min || p.y >= grid.y_max) continue;
    if (p.z < grid.z_min || p.z > grid.z_max) continue;
    const auto ix = std::min(nx - 1, static_cast<std::size_t>((p.x - grid.x_min) / grid.cell));
    const auto iy = std::min(ny - 1, static_cast<std::size_t>((p.y - grid.y_min) / grid.cell));
    const std::size_t c = ix * ny + iy;
    const double z = p.z - grid.ground_z;
    zmax[c] = count[c] == 0.0 ? z : std::max(zmax[c], z);
    count[c] += 1.0;
    sum[c] += z;
    sumsq[c] += z * z;
  }
  nn::Matrix stats(static_cast<nn::Index>(nx * ny), static_cast<nn::Index>(kCellStats));
  stats.setZero();
  for (std::size_t c = 0; c < nx * ny; ++c) {
    if (count[c] == 0.0) continue;
    const double mean = sum[c] / count[c];
    const auto r = static_cast<nn::Index>(c);
    stats(r, 0) = std::log1p(count[c]);
    stats(r, 1) = mean;
    stats(r, 2) = zmax[c];
    stats(r, 3) = std::sqrt(std::max(0.0, sumsq[c] / count[c] - mean * mean));
  }
  nn::Matrix out(static_cast<nn::Index>(nx * ny), static_cast<nn::Index>(kWindowInputs));
  out.setZero();
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const auto row = static_cast<nn::Index>(ix * ny + iy);
      nn::Index col = 0;
      for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy, col += static_cast<nn::Index>(kCellStats)) {
          const long jx = static_cast<long>(ix) + dx, jy = static_cast<long>(iy) + dy;
          if (jx < 0 || jy < 0 || jx >= static_cast<long>(nx) || jy >= static_cast<long>(ny)) continue;
          const auto src = static_cast<nn::Index>(static_cast<std::size_t>(jx) * ny + static_cast<std::size_t>(jy));
          out.block(row, col, 1, static_cast<nn::Index>(kCellStats)) = stats.row(src);
        }
      }
    }
  }
  return out;
}

AnchorSet make_anchors(const GridSpec& grid) {
  AnchorSet set;
  const std::size_t nx = grid.nx(), ny = grid.ny();
  set.boxes.reserve(nx * ny * kAnchorsPerCell);
  set.classes.reserve(nx * ny * kAnchorsPerCell);
  for (std::size_t ix = 0; ix < nx; ++ix) {
    for (std::size_t iy = 0; iy < ny; ++iy) {
      const double x = grid.x_min + (static_cast<double>(ix) + 0.5) * grid.cell;
      const double y = grid.y_min + (static_cast<double>(iy) + 0.5) * grid.cell;
      for (auto cls : kAllClasses) {
        const Dims d = canonical_dims(cls);
        for (std::size_t r = 0; r < kYawsPerClass; ++r) {
          set.boxes.push_back(make_box(x, y, grid.ground_z + 0.5 * d.h, d.l, d.w, d.h, static_cast<double>(r) * kPi / 2));
          set.classes.push_back(cls);
        }
      }
    }
  }
  return set;
}

Box3D decode_clamped(std::span<const double> deltas, const Box3D& anchor) {
  auto t = RegressionTarget::from_array(deltas);
  t.tw = std::clamp(t.tw, -kDeltaClamp, kDeltaClamp);
  t.tl = std::clamp(t.tl, -kDeltaClamp, kDeltaClamp);
  t.th = std::clamp(t.th, -kDeltaClamp, kDeltaClamp);
  return decode_box(t, anchor);
}

Detector::Detector(const DetectorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  anchors_ = make_anchors(cfg_.grid);
  nn::Rng rng(seed);
  const auto& r = cfg_.refine;
  rpn_ = nn::Mlp(store_, "rpn", widths(kWindowInputs, cfg_.rpn.hidden, kAnchorsPerCell * kAnchorOutputs), false, rng);
  const std::vector<std::size_t> enc_hidden(r.encoder.begin(), r.encoder.end() - 1);
  encoder_ = nn::Mlp(store_, "refine.encoder", widths(3, enc_hidden, r.encoder.back()), true, rng);
  const std::size_t feat = r.encoder.back();
  conf_head_ = nn::Mlp(store_, "refine.conf", widths(feat, {r.head_hidden}, 1), false, rng);
  reg_head_ = nn::Mlp(store_, "refine.reg", widths(feat, {r.head_hidden}, RegressionTarget::kSize), false, rng);
  feat_head_ = nn::Mlp(store_, "refine.feature", widths(feat, {r.head_hidden}, r.feature_dim), false, rng);
  proj_head_ = nn::Mlp(store_, "refine.projection", widths(feat, {r.proj_hidden}, r.proj_dim), false, rng);

  // Start every anchor at the foreground prior.
  auto& bias = rpn_.layers().back().bias().value;
  const double logit = std::log(cfg_.rpn.prior / (1.0 - cfg_.rpn.prior));
  for (std::size_t a = 0; a < kAnchorsPerCell; ++a) bias(0, static_cast<nn::Index>(a * kAnchorOutputs)) = logit;
}

Detector::RpnOutput Detector::rpn_forward(const PointCloud& cloud) const {
  RpnOutput out;
  out.inputs = cell_window_features(cloud, cfg_.grid);
  out.raw = rpn_.forward(out.inputs, &out.cache);
  const auto cells = out.raw.rows();
  const auto n = static_cast<nn::Index>(anchors_.boxes.size());
  out.probs.resize(static_cast<std::size_t>(n));
  out.deltas.resize(n, static_cast<nn::Index>(RegressionTarget::kSize));
  for (nn::Index c = 0; c < cells; ++c) {
    for (nn::Index a = 0; a < static_cast<nn::Index>(kAnchorsPerCell); ++a) {
      const nn::Index i = c * static_cast<nn::Index>(kAnchorsPerCell) + a;
      const nn::Index col = a * static_cast<nn::Index>(kAnchorOutputs);
      out.probs[static_cast<std::size_t>(i)] = sigmoid(out.raw(c, col));
      out.deltas.row(i) = out.raw.block(c, col + 1, 1, static_cast<nn::Index>(RegressionTarget::kSize));
    }
  }
  return out;
}

void Detector::rpn_backward(const RpnOutput& out, std::span<const double> d_probs, const nn::Matrix& d_deltas) {
  if (d_probs.size() != out.probs.size() || d_deltas.rows() != out.deltas.rows()) {
    throw std::invalid_argument("rpn_backward: gradient size mismatch");
  }
  nn::Matrix d_raw = nn::Matrix::Zero(out.raw.rows(), out.raw.cols());
  for (nn::Index c = 0; c < out.raw.rows(); ++c) {
    for (nn::Index a = 0; a < static_cast<nn::Index>(kAnchorsPerCell); ++a) {
      const nn::Index i = c * static_cast<nn::Index>(kAnchorsPerCell) + a;
      const nn::Index col = a * static_cast<nn::Index>(kAnchorOutputs);
      const double p = out.probs[static_cast<std::size_t>(i)];
      d_raw(c, col) = d_probs[static_cast<std::size_t>(i)] * p * (1.0 - p);
      d_raw.block(c, col + 1, 1, static_cast<nn::Index>(RegressionTarget::kSize)) = d_deltas.row(i);
    }
  }
  rpn_.backward(out.cache, d_raw);
}

std::vector<Proposal> Detector::proposals(const RpnOutput& out, double nms_threshold, std::size_t keep) const {
  std::vector<std::size_t> order(out.probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t top = std::min(order.size(), cfg_.rpn.pre_nms_top);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return out.probs[a] > out.probs[b] || (out.probs[a] == out.probs[b] && a < b);
                    });
  order.resize(top);
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  boxes.reserve(top);
  scores.reserve(top);
  for (auto i : order) {
    const auto row = out.deltas.row(static_cast<nn::Index>(i));
    const std::array<double, 7> d{row(0), row(1), row(2), row(3), row(4), row(5), row(6)};
    boxes.push_back(decode_clamped(d, anchors_.boxes[i]));
    scores.push_back(out.probs[i]);
  }
  std::vector<Proposal> result;
  for (auto k : kernels::nms(boxes, scores, nms_threshold, keep)) {
    result.push_back({boxes[k], anchors_.classes[order[k]], scores[k]});
  }
  return result;
}

Detector::RefineOutput Detector::refine_forward(const PointCloud& cloud, std::span<const Box3D> proposals,
                                                HeadMask heads) const {
  const auto& r = cfg_.refine;
  RefineOutput out;
  const auto pooled = kernels::points_in_boxes(cloud, proposals, r.pool_margin);
  out.offsets.push_back(0);
  std::vector<Point3> local;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& idx = pooled[i];
    const std::size_t take = std::min(idx.size(), r.max_points);
    for (std::size_t j = 0; j < take; ++j) {
      const Point3 p = cloud[idx[j * idx.size() / take]];
      const Point3 q = to_box_frame(proposals[i], p);
      const Box3D& b = proposals[i];
      local.push_back({q.x / b.l, q.y / b.w, q.z / b.h});
    }
    out.offsets.push_back(local.size());
    out.empty.push_back(take == 0 ? 1 : 0);
  }
  out.local.resize(static_cast<nn::Index>(local.size()), 3);
  for (std::size_t i = 0; i < local.size(); ++i) {
    out.local.row(static_cast<nn::Index>(i)) << local[i].x, local[i].y, local[i].z;
  }
  const nn::Matrix encoded = encoder_.forward(out.local, &out.encoder);
  out.pooled = nn::segment_max(encoded, out.offsets);
  const nn::Matrix& f = out.pooled.values;

  const nn::Matrix logits = conf_head_.forward(f, &out.conf_cache);
  out.conf.resize(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) out.conf[i] = sigmoid(logits(static_cast<nn::Index>(i), 0));
  out.deltas = reg_head_.forward(f, &out.reg_cache);
  if (heads.feature) out.alpha = feat_head_.forward(f, &out.feat_cache);
  if (heads.projection) {
    out.proj_raw = proj_head_.forward(f, &out.proj_cache);
    out.proj = nn::Matrix::Zero(out.proj_raw.rows(), out.proj_raw.cols());
    for (nn::Index i = 0; i < out.proj_raw.rows(); ++i) {
      if (out.empty[static_cast<std::size_t>(i)]) continue;
      const nn::Vector v = out.proj_raw.row(i).transpose();
      out.proj.row(i) = nn::l2_normalize(v).transpose();
    }
  }
  return out;
}

void Detector::refine_backward(const RefineOutput& out, std::span<const double> d_conf, const nn::Matrix& d_deltas,
                               const nn::Matrix& d_alpha, const nn::Matrix& d_proj) {
  const nn::Matrix& f = out.pooled.values;
  nn::Matrix d_f = nn::Matrix::Zero(f.rows(), f.cols());
  if (!d_conf.empty()) {
    nn::Matrix d_logit(f.rows(), 1);
    for (nn::Index i = 0; i < f.rows(); ++i) {
      const double p = out.conf[static_cast<std::size_t>(i)];
      d_logit(i, 0) = d_conf[static_cast<std::size_t>(i)] * p * (1.0 - p);
    }
    d_f += conf_head_.backward(out.conf_cache, d_logit);
  }
  if (d_deltas.size() > 0) d_f += reg_head_.backward(out.reg_cache, d_deltas);
  if (d_alpha.size() > 0) d_f += feat_head_.backward(out.feat_cache, d_alpha);
  if (d_proj.size() > 0) {
    nn::Matrix d_raw = nn::Matrix::Zero(out.proj_raw.rows(), out.proj_raw.cols());
    for (nn::Index i = 0; i < d_raw.rows(); ++i) {
      if (out.empty[static_cast<std::size_t>(i)]) continue;
      d_raw.row(i) = nn::l2_normalize_backward(out.proj_raw.row(i).transpose(), d_proj.row(i).transpose()).transpose();
    }
    d_f += proj_head_.backward(out.proj_cache, d_raw);
  }
  const nn::Matrix d_enc = nn::segment_max_backward(out.pooled, d_f, out.local.rows());
  encoder_.backward(out.encoder, d_enc);
}

std::vector<Detection> Detector::infer(const PointCloud& cloud, const InferConfig& cfg) const {
  if (cloud.empty()) return {};
  const auto rpn = rpn_forward(cloud);
  const auto props = proposals(rpn, cfg.nms_threshold, cfg.keep);
  if (props.empty()) return {};
  std::vector<Box3D> boxes;
  for (const auto& p : props) boxes.push_back(p.box);
  const auto refined = refine_forward(cloud, boxes, {});

  std::vector<Detection> out;
  for (auto cls : kAllClasses) {
    std::vector<Box3D> cb;
    std::vector<double> cs;
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i].cls != cls || refined.conf[i] < cfg.score_threshold) continue;
      const auto row = refined.deltas.row(static_cast<nn::Index>(i));
      const std::array<double, 7> d{row(0), row(1), row(2), row(3), row(4), row(5), row(6)};
      cb.push_back(decode_clamped(d, props[i].box));
      cs.push_back(refined.conf[i]);
    }
    for (auto k : kernels::nms(cb, cs, cfg.final_nms_threshold, cb.size())) {
      out.push_back({cb[k], class_id(cls), cs[k]});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

}  // namespace ifg
