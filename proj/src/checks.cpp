#include "ifg/checks.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "ifg/detector.hpp"
#include "ifg/extractor.hpp"
#include "ifg/kernels.hpp"
#include "ifg/losses.hpp"
#include "ifg/netcore.hpp"

namespace ifg::checks {

namespace {

using Rng = std::mt19937_64;
using nn::Index;
using nn::Matrix;

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Box3D random_box(Rng& rng, double cx, double cy, double spread) {
  return make_box(cx + uni(rng, -spread, spread), cy + uni(rng, -spread, spread), uni(rng, -1, 1), uni(rng, 0.5, 5.0),
                  uni(rng, 0.4, 3.0), uni(rng, 0.5, 2.5), uni(rng, -kPi, kPi));
}

// Rectangle membership by projecting onto the box axes.
bool in_footprint(const Box3D& b, double x, double y) {
  const double dx = x - b.x, dy = y - b.y;
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  return std::abs(dx * c + dy * s) <= 0.5 * b.l && std::abs(-dx * s + dy * c) <= 0.5 * b.w;
}

struct GridCounts {
  double a = 0, b = 0, both = 0;
};

GridCounts bev_counts(const Box3D& a, const Box3D& b, std::size_t n) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto* box : {&a, &b}) {
    for (const auto& p : bev_footprint(*box)) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  GridCounts g;
  const double dx = (x1 - x0) / static_cast<double>(n), dy = (y1 - y0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = x0 + (static_cast<double>(i) + 0.5) * dx;
    for (std::size_t j = 0; j < n; ++j) {
      const double y = y0 + (static_cast<double>(j) + 0.5) * dy;
      const bool ia = in_footprint(a, x, y), ib = in_footprint(b, x, y);
      g.a += ia;
      g.b += ib;
      g.both += ia && ib;
    }
  }
  return g;
}

// One report over many sub-checks.
struct GradSuite {
  double worst = 0.0;
  std::size_t checked = 0;
  std::vector<std::string> failures;

  void add(const std::string& what, const nn::GradCheckReport& r) {
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    if (!r.passed) failures.push_back(what + ": " + r.summary());
  }
};

nn::GradCheckOptions grad_opts(std::uint64_t seed, std::size_t max_entries = 0) {
  nn::GradCheckOptions o;
  o.step = 1e-5;
  o.tolerance = 1e-4;
  o.seed = seed;
  o.max_entries_per_tensor = max_entries;
  return o;
}

Matrix random_matrix(Rng& rng, Index r, Index c, double scale = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> g(0.0, scale);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Smooth L1 residuals kept away from the |d| = 1 switch.
double away_from_kink(Rng& rng) {
  double d = uni(rng, 0.05, 2.0);
  if (std::abs(d - 1.0) < 0.05) d += 0.1;
  return std::bernoulli_distribution(0.5)(rng) ? d : -d;
}

std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

Matrix unflat(std::span<const double> x, Index r, Index c, std::size_t offset = 0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = x[offset + static_cast<std::size_t>(i)];
  return m;
}

void loss_gradients(GradSuite& suite, Rng& rng, std::uint64_t seed) {
  const auto opts = grad_opts(seed);

  {  // smooth L1
    std::vector<double> target(20), x(20);
    for (std::size_t i = 0; i < x.size(); ++i) {
      target[i] = uni(rng, -1, 1);
      x[i] = target[i] + away_from_kink(rng);
    }
    const auto analytic = loss::smooth_l1(x, target).grad;
    suite.add("smooth_l1", nn::grad_check([&](std::span<const double> v) { return loss::smooth_l1(v, target).value; },
                                          x, analytic, opts, "smooth_l1"));
  }
  for (int label : {0, 1}) {  // focal and BCE
    for (double p0 : {0.05, 0.3, 0.62, 0.9}) {
      std::vector<double> x{p0};
      const auto f = loss::focal_loss(p0, label);
      suite.add("focal", nn::grad_check([&](std::span<const double> v) { return loss::focal_loss(v[0], label).value; },
                                        x, std::vector<double>{f.grad}, opts, "focal"));
      const double y = label == 1 ? 0.8 : 0.15;
      const auto b = loss::bce(p0, y);
      suite.add("bce", nn::grad_check([&](std::span<const double> v) { return loss::bce(v[0], y).value; }, x,
                                      std::vector<double>{b.grad}, opts, "bce"));
    }
  }
  {  // supervised contrastive, both reductions, with a singleton class
    loss::ContrastiveBatch batch;
    Matrix f = random_matrix(rng, 12, 8);
    for (Index i = 0; i < f.rows(); ++i) f.row(i).normalize();
    batch.features = f;
    batch.labels = {0, 0, 0, 1, 1, 1, 2, 2, 0, 1, 3, 0};
    for (auto red : {loss::Reduction::kSum, loss::Reduction::kMeanOverAnchors}) {
      auto x = flat(f);
      const auto analytic = flat(loss::supcon_loss(batch, red).grad);
      auto fn = [&](std::span<const double> v) {
        loss::ContrastiveBatch b = batch;
        b.features = unflat(v, f.rows(), f.cols());
        return loss::supcon_loss(b, red).value;
      };
      suite.add("supcon", nn::grad_check(fn, x, analytic, opts, "supcon"));
    }
  }
  {  // template feature regression
    loss::TemplateLossBatch batch;
    batch.targets = random_matrix(rng, 6, 16);
    batch.features = batch.targets;
    for (Index i = 0; i < batch.features.size(); ++i) batch.features.data()[i] += away_from_kink(rng);
    batch.ious = {0.9, 0.4, 0.56, 0.7, 0.2, 0.8};
    auto x = flat(batch.features);
    const auto analytic = flat(loss::template_loss(batch).grad);
    auto fn = [&](std::span<const double> v) {
      auto b = batch;
      b.features = unflat(v, 6, 16);
      return loss::template_loss(b).value;
    };
    suite.add("template", nn::grad_check(fn, x, analytic, opts, "template"));
  }
  {  // first-stage composite over probabilities and deltas
    loss::AnchorBatch batch;
    const Index n = 30;
    batch.targets = random_matrix(rng, n, 7, 0.5);
    batch.deltas = batch.targets;
    for (Index i = 0; i < batch.deltas.size(); ++i) batch.deltas.data()[i] += away_from_kink(rng);
    for (Index i = 0; i < n; ++i) {
      batch.probs.push_back(uni(rng, 0.05, 0.95));
      batch.labels.push_back(static_cast<int>(i % 5) - 1);  // -1, 0, 1, 2, 3
    }
    std::vector<double> x = batch.probs;
    const auto d = flat(batch.deltas);
    x.insert(x.end(), d.begin(), d.end());
    const auto r = loss::rpn_loss(batch);
    std::vector<double> analytic = r.d_probs;
    const auto dd = flat(r.d_deltas);
    analytic.insert(analytic.end(), dd.begin(), dd.end());
    auto fn = [&](std::span<const double> v) {
      auto b = batch;
      b.probs.assign(v.begin(), v.begin() + n);
      b.deltas = unflat(v, n, 7, static_cast<std::size_t>(n));
      return loss::rpn_loss(b).total;
    };
    suite.add("rpn_loss", nn::grad_check(fn, x, analytic, opts, "rpn_loss"));
  }
  {  // second-stage composite: confidence, regression, template and contrastive inputs at once
    const Index n = 8;
    loss::ConfidenceTerms conf;
    loss::RegressionTerms reg;
    loss::TemplateLossBatch temp;
    loss::ContrastiveBatch contra;
    for (Index i = 0; i < n; ++i) {
      conf.probs.push_back(uni(rng, 0.05, 0.95));
      conf.targets.push_back(loss::confidence_label(uni(rng, 0, 1)));
      reg.mask.push_back(i % 3 != 0 ? 1 : 0);
      temp.ious.push_back(i % 3 != 0 ? 0.8 : 0.3);
    }
    reg.targets = random_matrix(rng, n, 7, 0.5);
    reg.deltas = reg.targets;
    for (Index i = 0; i < reg.deltas.size(); ++i) reg.deltas.data()[i] += away_from_kink(rng);
    temp.targets = random_matrix(rng, n, 16);
    temp.features = temp.targets;
    for (Index i = 0; i < temp.features.size(); ++i) temp.features.data()[i] += away_from_kink(rng);
    contra.features = random_matrix(rng, n, 8);
    for (Index i = 0; i < n; ++i) contra.features.row(i).normalize();
    contra.labels = {0, 1, 1, 0, 2, 2, 0, 1};
    const loss::RcnnWeights w{1.0, 2.0, 0.5, 0.7};

    std::vector<double> x = conf.probs;
    for (const Matrix* m : {&reg.deltas, &temp.features, &contra.features}) {
      const auto v = flat(*m);
      x.insert(x.end(), v.begin(), v.end());
    }
    const auto r = loss::rcnn_loss(conf, reg, &temp, &contra, w, loss::Reduction::kMeanOverAnchors);
    std::vector<double> analytic = r.d_probs;
    for (const Matrix* m : {&r.d_deltas, &r.d_template_features, &r.d_contrastive_features}) {
      const auto v = flat(*m);
      analytic.insert(analytic.end(), v.begin(), v.end());
    }
    auto fn = [&](std::span<const double> v) {
      auto c = conf;
      auto g = reg;
      auto t = temp;
      auto k = contra;
      std::size_t off = 0;
      c.probs.assign(v.begin(), v.begin() + n);
      off += static_cast<std::size_t>(n);
      g.deltas = unflat(v, n, 7, off);
      off += static_cast<std::size_t>(n * 7);
      t.features = unflat(v, n, 16, off);
      off += static_cast<std::size_t>(n * 16);
      k.features = unflat(v, n, 8, off);
      return loss::rcnn_loss(c, g, &t, &k, w, loss::Reduction::kMeanOverAnchors).total;
    };
    suite.add("rcnn_loss", nn::grad_check(fn, x, analytic, opts, "rcnn_loss"));
  }
}

void layer_gradients(GradSuite& suite, Rng& rng, std::uint64_t seed) {
  const auto opts = grad_opts(seed);

  {  // dense + ReLU stack with a weighted-sum readout
    nn::ParamStore store;
    nn::Rng init(seed);
    nn::Mlp mlp(store, "mlp", {5, 7, 6, 3}, false, init);
    const Matrix x = random_matrix(rng, 9, 5);
    const Matrix r = random_matrix(rng, 9, 3);
    auto loss = [&] { return mlp.forward(x).cwiseProduct(r).sum(); };
    store.zero_grad();
    nn::Mlp::Cache cache;
    mlp.forward(x, &cache);
    const Matrix dx = mlp.backward(cache, r);
    suite.add("mlp params", nn::grad_check(loss, store, opts));

    auto xv = flat(x);
    auto fn = [&](std::span<const double> v) { return mlp.forward(unflat(v, 9, 5)).cwiseProduct(r).sum(); };
    suite.add("mlp input", nn::grad_check(fn, xv, flat(dx), opts, "mlp.x"));
  }
  {  // segment max over uneven segments, including an empty one
    const Matrix x = random_matrix(rng, 10, 4);
    const std::vector<std::size_t> offsets{0, 3, 3, 7, 10};
    const Matrix r = random_matrix(rng, 4, 4);
    const auto pooled = nn::segment_max(x, offsets);
    const Matrix dx = nn::segment_max_backward(pooled, r, x.rows());
    auto xv = flat(x);
    auto fn = [&](std::span<const double> v) { return nn::segment_max(unflat(v, 10, 4), offsets).values.cwiseProduct(r).sum(); };
    suite.add("segment_max", nn::grad_check(fn, xv, flat(dx), opts, "segment_max"));
  }
  {  // l2 normalization
    const nn::Vector v = random_matrix(rng, 6, 1).col(0);
    const nn::Vector r = random_matrix(rng, 6, 1).col(0);
    const nn::Vector dv = nn::l2_normalize_backward(v, r);
    std::vector<double> xv(v.data(), v.data() + v.size());
    auto fn = [&](std::span<const double> s) {
      nn::Vector u(6);
      for (Index i = 0; i < 6; ++i) u(i) = s[static_cast<std::size_t>(i)];
      return nn::l2_normalize(u).dot(r);
    };
    suite.add("l2_normalize", nn::grad_check(fn, xv, std::vector<double>(dv.data(), dv.data() + dv.size()), opts,
                                             "l2_normalize"));
  }
  {  // intrinsic feature extractor (set abstraction at two radii + FC stack)
    FeatureExtractorConfig cfg;
    cfg.centers = 16;
    cfg.fc_hidden = {24, 12};
    cfg.out_dim = 5;
    IntrinsicFeatureExtractor ex(cfg, seed);
    // Zero biases put every group's center row (offset 0) exactly on the ReLU kink.
    for (auto& [name, p] : ex.params()) {
      if (name.ends_with(".b")) p.value = random_matrix(rng, p.value.rows(), p.value.cols(), 0.1);
    }
    PointCloud pts;
    for (int i = 0; i < 64; ++i) pts.push_back({uni(rng, -0.5, 0.5), uni(rng, -0.3, 0.3), uni(rng, -0.4, 0.4)});
    const nn::Vector r = random_matrix(rng, 5, 1).col(0);
    ex.params().zero_grad();
    IntrinsicFeatureExtractor::Cache cache;
    ex.forward(pts, &cache);
    ex.backward(cache, r);
    auto loss = [&] { return ex.forward(pts).dot(r); };
    suite.add("extractor", nn::grad_check(loss, ex.params(), grad_opts(seed, 40)));
  }
}

void detector_gradients(GradSuite& suite, Rng& rng, std::uint64_t seed) {
  DetectorConfig cfg;
  cfg.grid = {0.0, 6.0, -3.0, 3.0, -1.5, 1.5, -1.4, 0.5};
  cfg.rpn.hidden = {16, 12};
  cfg.refine.encoder = {8, 12};
  cfg.refine.head_hidden = 6;
  cfg.refine.feature_dim = 4;
  cfg.refine.proj_hidden = 6;
  cfg.refine.proj_dim = 5;
  Detector det(cfg, seed);
  // Make the first stage's logits land away from saturation.
  det.params().at("rpn.2.b").value.setZero();

  PointCloud cloud;
  for (int i = 0; i < 300; ++i) cloud.push_back({uni(rng, 0.0, 6.0), uni(rng, -3.0, 3.0), uni(rng, -1.4, 0.4)});

  {  // first stage through the RPN loss
    const auto n = det.anchors().boxes.size();
    loss::AnchorBatch batch;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 7) - 1 > 2 ? 0 : static_cast<int>(i % 7) - 1;
    const Matrix targets = random_matrix(rng, static_cast<Index>(n), 7, 3.0);
    auto eval = [&](bool backward) {
      auto out = det.rpn_forward(cloud);
      loss::AnchorBatch b;
      b.probs = out.probs;
      b.labels = labels;
      b.deltas = out.deltas;
      b.targets = targets;
      const auto r = loss::rpn_loss(b);
      if (backward) det.rpn_backward(out, r.d_probs, r.d_deltas);
      return r.total;
    };
    det.params().zero_grad();
    eval(true);
    suite.add("rpn", nn::grad_check([&] { return eval(false); }, det.params(), grad_opts(seed, 12)));
  }
  {  // second stage through every head
    std::vector<Box3D> props;
    for (int i = 0; i < 6; ++i) props.push_back(random_box(rng, 3.0, 0.0, 1.5));
    const Matrix reg_t = random_matrix(rng, 6, 7, 3.0);
    const Matrix temp_t = random_matrix(rng, 6, 4, 3.0);
    const std::vector<double> conf_t{0.0, 0.3, 1.0, 0.7, 0.0, 1.0};
    const std::vector<int> labels{0, 1, 1, 0, 2, 1};
    auto eval = [&](bool backward) {
      auto out = det.refine_forward(cloud, props, {true, true});
      loss::ConfidenceTerms c{out.conf, conf_t};
      loss::RegressionTerms g{out.deltas, reg_t, {1, 0, 1, 1, 0, 1}};
      loss::TemplateLossBatch t{out.alpha, temp_t, {0.9, 0.1, 0.8, 0.7, 0.2, 0.6}, 0.55};
      loss::ContrastiveBatch k{out.proj, labels, 0.1};
      const auto r = loss::rcnn_loss(c, g, &t, &k, {}, loss::Reduction::kMeanOverAnchors);
      if (backward) det.refine_backward(out, r.d_probs, r.d_deltas, r.d_template_features, r.d_contrastive_features);
      return r.total;
    };
    det.params().zero_grad();
    eval(true);
    suite.add("refine", nn::grad_check([&] { return eval(false); }, det.params(), grad_opts(seed, 12)));
  }
}

template <class F>
CheckResult timed(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

double bev_iou_grid(const Box3D& a, const Box3D& b, std::size_t n) {
  const auto g = bev_counts(a, b, n);
  const double uni_count = g.a + g.b - g.both;
  return uni_count > 0 ? g.both / uni_count : 0.0;
}

double iou3d_grid(const Box3D& a, const Box3D& b, std::size_t n) {
  const auto g = bev_counts(a, b, n);
  const double z0 = std::min(a.z - 0.5 * a.h, b.z - 0.5 * b.h), z1 = std::max(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double dz = (z1 - z0) / static_cast<double>(n);
  double za = 0, zb = 0, zboth = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = z0 + (static_cast<double>(k) + 0.5) * dz;
    const bool ia = std::abs(z - a.z) <= 0.5 * a.h, ib = std::abs(z - b.z) <= 0.5 * b.h;
    za += ia;
    zb += ib;
    zboth += ia && ib;
  }
  const double inter = g.both * zboth;
  const double uni_count = g.a * za + g.b * zb - inter;
  return uni_count > 0 ? inter / uni_count : 0.0;
}

std::vector<std::size_t> nms_bruteforce(std::span<const Box3D> boxes, std::span<const double> scores,
                                        double iou_threshold, std::size_t max_keep) {
  std::vector<char> alive(boxes.size(), 1);
  std::vector<std::size_t> keep;
  while (keep.size() < max_keep) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || scores[i] > scores[best])) best = i;
    }
    if (best == boxes.size()) break;
    keep.push_back(best);
    alive[best] = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && bev_iou(boxes[best], boxes[i]) > iou_threshold) alive[i] = 0;
    }
  }
  return keep;
}

double ap_direct(std::span<const bool> tp, std::size_t num_gt, RecallMode mode) {
  if (num_gt == 0) return 0.0;
  std::vector<double> prec, rec;
  double t = 0, f = 0;
  for (bool hit : tp) {
    (hit ? t : f) += 1;
    prec.push_back(t / (t + f));
    rec.push_back(t / static_cast<double>(num_gt));
  }
  std::vector<double> positions;
  if (mode == RecallMode::kR11) {
    for (int i = 0; i <= 10; ++i) positions.push_back(i / 10.0);
  } else {
    for (int i = 1; i <= 40; ++i) positions.push_back(i / 40.0);
  }
  double sum = 0;
  for (double r : positions) {
    double best = 0;
    for (std::size_t k = 0; k < prec.size(); ++k) {
      if (rec[k] >= r - 1e-12) best = std::max(best, prec[k]);
    }
    sum += best;
  }
  return sum / static_cast<double>(positions.size());
}

CheckResult check_geometry(std::uint64_t seed) {
  return timed("geometry oracles", [&] {
    Rng rng(seed);
    double worst_bev = 0, worst_3d = 0;
    for (int i = 0; i < 1000; ++i) {
      const Box3D a = random_box(rng, 0, 0, 0.0);
      const Box3D b = random_box(rng, a.x, a.y, 2.5);
      worst_bev = std::max(worst_bev, std::abs(bev_iou(a, b) - bev_iou_grid(a, b, 500)));
      worst_3d = std::max(worst_3d, std::abs(iou3d(a, b) - iou3d_grid(a, b, 500)));
    }
    std::size_t nms_mismatch = 0;
    for (int s = 0; s < 500; ++s) {
      const auto n = std::uniform_int_distribution<std::size_t>(0, 40)(rng);
      std::vector<Box3D> boxes;
      std::vector<double> scores;
      for (std::size_t i = 0; i < n; ++i) {
        boxes.push_back(random_box(rng, 0, 0, 4.0));
        scores.push_back(std::round(uni(rng, 0, 1) * 20) / 20);  // coarse, so ties occur
      }
      const double thr = uni(rng, 0.05, 0.8);
      const auto keep = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
      const auto expect = nms_bruteforce(boxes, scores, thr, keep);
      if (nms(boxes, scores, thr, keep) != expect || kernels::nms(boxes, scores, thr, keep) != expect ||
          kernels::serial::nms(boxes, scores, thr, keep) != expect) {
        ++nms_mismatch;
      }
    }
    CheckResult r;
    r.passed = worst_bev <= 0.01 && worst_3d <= 0.01 && nms_mismatch == 0;
    r.detail = "max |bev_iou - grid| " + fmt(worst_bev) + ", max |iou3d - grid| " + fmt(worst_3d) +
               ", nms mismatches " + std::to_string(nms_mismatch) + "/500";
    return r;
  });
}

CheckResult check_encoding(std::uint64_t seed) {
  return timed("encode/decode roundtrip", [&] {
    Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      const Box3D anchor = random_box(rng, uni(rng, 0, 40), uni(rng, -20, 20), 0.0);
      const Box3D gt = random_box(rng, anchor.x, anchor.y, 3.0);
      const Box3D back = decode_box(encode_box(gt, anchor), anchor);
      for (double e : {back.x - gt.x, back.y - gt.y, back.z - gt.z, back.l - gt.l, back.w - gt.w, back.h - gt.h,
                       wrap_angle(back.theta - gt.theta)}) {
        worst = std::max(worst, std::abs(e));
      }
    }
    CheckResult r;
    r.passed = worst < 1e-9;
    r.detail = "max field error " + fmt(worst) + " over 1000 pairs";
    return r;
  });
}

CheckResult check_gradients(std::uint64_t seed) {
  return timed("finite-difference gradients", [&] {
    Rng rng(seed);
    GradSuite suite;
    loss_gradients(suite, rng, seed);
    layer_gradients(suite, rng, seed);
    detector_gradients(suite, rng, seed);
    CheckResult r;
    r.passed = suite.failures.empty();
    r.detail = "max relative error " + fmt(suite.worst) + " over " + std::to_string(suite.checked) + " entries";
    for (const auto& f : suite.failures) r.detail += "; " + f;
    return r;
  });
}

CheckResult check_confidence_labels() {
  return timed("confidence labels", [] {
    CheckResult r;
    const double a = loss::confidence_label(0.25), b = loss::confidence_label(0.5), c = loss::confidence_label(0.75);
    r.passed = a == 0.0 && b == 0.5 && c == 1.0;
    r.detail = "labels at 0.25/0.5/0.75: " + fmt(a) + " " + fmt(b) + " " + fmt(c);
    return r;
  });
}

CheckResult check_supcon_separation(std::uint64_t seed) {
  return timed("contrastive separation", [&] {
    Rng rng(seed);
    const Index n = 30, dim = 32;
    nn::ParamStore store;
    auto& feats = store.add("features", n, dim);
    feats.value = random_matrix(rng, n, dim);
    std::vector<int> labels;
    for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % 3) + 1);
    nn::Adam adam({0.05});

    auto normalized = [&] {
      Matrix f(n, dim);
      for (Index i = 0; i < n; ++i) f.row(i) = nn::l2_normalize(feats.value.row(i).transpose()).transpose();
      return f;
    };
    for (int step = 0; step < 200; ++step) {
      const loss::ContrastiveBatch batch{normalized(), labels, 0.1};
      const auto res = loss::supcon_loss(batch);
      for (Index i = 0; i < n; ++i) {
        feats.grad.row(i) = nn::l2_normalize_backward(feats.value.row(i).transpose(), res.grad.row(i).transpose()).transpose();
      }
      adam.step(store);
    }
    const Matrix f = normalized();
    double intra = 0, inter = 0;
    std::size_t ni = 0, ne = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        const double c = f.row(i).dot(f.row(j));
        if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
          intra += c;
          ++ni;
        } else {
          inter += c;
          ++ne;
        }
      }
    }
    const double gap = intra / static_cast<double>(ni) - inter / static_cast<double>(ne);
    CheckResult r;
    r.passed = gap >= 0.3;
    r.detail = "intra - inter cosine " + fmt(gap) + " after 200 steps";
    return r;
  });
}

CheckResult check_ap_metric() {
  return timed("average precision", [] {
    std::vector<std::string> problems;
    auto expect = [&](bool ok, const std::string& what) {
      if (!ok) problems.push_back(what);
    };
    auto car = [](double x, double y) { return LabeledBox{make_box(x, y, 0, 3.9, 1.6, 1.56, 0), ObjectClass::kCar, {}}; };
    auto det = [&](double x, double y, double s) {
      auto b = car(x, y);
      b.score = s;
      return b;
    };

    // Three GTs; detections by score: hit, miss, hit.
    const std::vector<LabeledBox> gts{car(0, 0), car(10, 0), car(20, 0)};
    const std::vector<LabeledBox> dets{det(0, 0, 0.9), det(30, 10, 0.8), det(10, 0, 0.7)};
    const auto curve = pr_curve(dets, gts, ObjectClass::kCar, 0.7);
    const std::vector<PrPoint> want{{1.0, 1.0 / 3}, {0.5, 1.0 / 3}, {2.0 / 3, 2.0 / 3}};
    bool same = curve.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) {
      same = std::abs(curve[i].precision - want[i].precision) < 1e-12 && std::abs(curve[i].recall - want[i].recall) < 1e-12;
    }
    expect(same, "3-GT PR points");
    const bool flags[] = {true, false, true};
    for (auto mode : {RecallMode::kR11, RecallMode::kR40}) {
      const double got = average_precision(curve, mode), oracle = ap_direct(flags, 3, mode);
      expect(std::abs(got - oracle) < 1e-9, "3-GT " + std::string(recall_mode_name(mode)) + " " + fmt(got) + " vs " + fmt(oracle));
    }
    expect(std::abs(average_precision(curve, RecallMode::kR11) - 6.0 / 11.0) < 1e-9, "3-GT R11 = 6/11");

    std::vector<LabeledBox> perfect;
    for (std::size_t i = 0; i < gts.size(); ++i) perfect.push_back(det(gts[i].box.x, gts[i].box.y, 0.5 + 0.1 * static_cast<double>(i)));
    for (auto mode : {RecallMode::kR11, RecallMode::kR40}) {
      expect(average_precision(pr_curve(perfect, gts, ObjectClass::kCar, 0.7), mode) == 1.0, "perfect detector");
      expect(average_precision(pr_curve(std::span<const LabeledBox>{}, gts, ObjectClass::kCar, 0.7), mode) == 0.0,
             "empty detector");
    }
    const std::vector<LabeledBox> one_gt{car(0, 0)}, miss{det(15, 5, 0.9)};
    const auto miss_curve = pr_curve(miss, one_gt, ObjectClass::kCar, 0.7);
    expect(miss_curve.size() == 1 && miss_curve[0].precision == 0.0 && miss_curve[0].recall == 0.0, "total miss point");

    // Random hit/miss sequences against the direct definition.
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const auto ng = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
      std::vector<LabeledBox> g, d;
      std::vector<bool> hits;
      std::size_t used = 0;
      for (std::size_t i = 0; i < ng; ++i) g.push_back(car(10.0 * static_cast<double>(i), 0));
      const auto nd = std::uniform_int_distribution<std::size_t>(0, 15)(rng);
      for (std::size_t k = 0; k < nd; ++k) {
        const double score = 1.0 - 0.01 * static_cast<double>(k);
        if (used < ng && std::bernoulli_distribution(0.6)(rng)) {
          d.push_back(det(10.0 * static_cast<double>(used++), 0, score));
          hits.push_back(true);
        } else {
          d.push_back(det(5.0 + 10.0 * static_cast<double>(k), 30, score));
          hits.push_back(false);
        }
      }
      std::array<bool, 16> hf{};
      std::copy(hits.begin(), hits.end(), hf.begin());
      const auto c = pr_curve(d, g, ObjectClass::kCar, 0.7);
      for (auto mode : {RecallMode::kR11, RecallMode::kR40}) {
        const double got = average_precision(c, mode), oracle = ap_direct(std::span<const bool>(hf.data(), hits.size()), ng, mode);
        if (std::abs(got - oracle) >= 1e-9) {
          problems.push_back("random fixture " + std::to_string(trial));
          break;
        }
      }
    }
    CheckResult r;
    r.passed = problems.empty();
    r.detail = problems.empty() ? "fixtures, perfect/empty detectors and 200 random sequences agree" : problems.front();
    for (std::size_t i = 1; i < problems.size() && i < 5; ++i) r.detail += "; " + problems[i];
    return r;
  });
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  return {check_geometry(seed),        check_encoding(seed),          check_gradients(seed),
          check_confidence_labels(),   check_supcon_separation(seed), check_ap_metric()};
}

}  // namespace ifg::checks
