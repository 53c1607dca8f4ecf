#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "ifg/config.hpp"
#include "ifg/detector.hpp"
#include "ifg/experiment.hpp"
#include "ifg/scene.hpp"
#include "ifg/train.hpp"

using namespace ifg;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ifg_pipeline_" + name);
}

// Small grid and narrow layers so finite differences stay cheap.
DetectorConfig tiny_detector() {
  DetectorConfig cfg;
  cfg.grid = {0.0, 6.0, -3.0, 3.0, -1.5, 1.5, -1.4, 0.5};
  cfg.rpn.hidden = {16, 12};
  cfg.refine.encoder = {8, 12};
  cfg.refine.head_hidden = 6;
  cfg.refine.feature_dim = 4;
  cfg.refine.proj_hidden = 6;
  cfg.refine.proj_dim = 5;
  return cfg;
}

PointCloud uniform_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> x(0, 6), y(-3, 3), z(-1.4, 0.4);
  PointCloud c(n);
  for (auto& p : c) p = {x(rng), y(rng), z(rng)};
  return c;
}

bool same_scene(const SceneSample& a, const SceneSample& b) {
  if (a.cloud != b.cloud || a.gt_classes != b.gt_classes || a.gt_boxes.size() != b.gt_boxes.size()) return false;
  for (std::size_t i = 0; i < a.gt_boxes.size(); ++i) {
    const auto &p = a.gt_boxes[i], &q = b.gt_boxes[i];
    if (p.x != q.x || p.y != q.y || p.z != q.z || p.l != q.l || p.w != q.w || p.h != q.h || p.theta != q.theta)
      return false;
  }
  return true;
}

ExperimentConfig small_experiment(std::size_t scenes, std::size_t epochs) {
  ExperimentConfig cfg;
  cfg.train.scenes = scenes;
  cfg.train.epochs = epochs;
  return cfg;
}

}  // namespace

TEST(Scene, ZeroObjectsIsClutterOnly) {
  SceneGenConfig cfg;
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  const auto s = generate_scene(cfg, 3);
  EXPECT_TRUE(s.gt_boxes.empty());
  EXPECT_TRUE(s.labels().empty());
  EXPECT_FALSE(s.cloud.empty());
}

TEST(Scene, DeterministicPerSeed) {
  const SceneGenConfig cfg;
  EXPECT_TRUE(same_scene(generate_scene(cfg, 42), generate_scene(cfg, 42)));
  EXPECT_FALSE(same_scene(generate_scene(cfg, 42), generate_scene(cfg, 43)));
  const auto batch = generate_scenes(cfg, 40, 4);
  EXPECT_TRUE(same_scene(batch[2], generate_scene(cfg, 42)));
}

TEST(Scene, ObjectsDoNotOverlapAndHoldPoints) {
  const SceneGenConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate_scene(cfg, seed);
    for (std::size_t i = 0; i < s.gt_boxes.size(); ++i) {
      EXPECT_FALSE(points_in_box(s.cloud, s.gt_boxes[i]).empty());
      for (std::size_t j = i + 1; j < s.gt_boxes.size(); ++j) EXPECT_EQ(bev_iou(s.gt_boxes[i], s.gt_boxes[j]), 0.0);
    }
  }
}

TEST(Scene, DoubleDistanceQuartersPoints) {
  SceneGenConfig cfg;
  cfg.occlusion_prob = 0.0;
  const auto tmpl = generate_template(ObjectClass::kCar, 1024, 0);
  const auto d = canonical_dims(ObjectClass::kCar);
  double near = 0, far = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    near += static_cast<double>(sample_object_points(cfg, tmpl, make_box(12, 3, -0.6, d.l, d.w, d.h, 0.4), seed).size());
    far += static_cast<double>(sample_object_points(cfg, tmpl, make_box(24, 6, -0.6, d.l, d.w, d.h, 0.4), seed).size());
  }
  EXPECT_NEAR(far / near, 0.25, 0.25 * 0.2);
}

TEST(Scene, InfeasibleConfigThrows) {
  SceneGenConfig cfg;
  cfg.x_max = 6.0;
  cfg.y_min = -2.0;
  cfg.y_max = 2.0;
  cfg.min_objects = 8;
  cfg.max_objects = 8;
  cfg.max_attempts = 50;
  EXPECT_THROW(generate_scene(cfg, 0), std::runtime_error);
}

TEST(Scene, CloudBinRoundTrip) {
  const auto s = generate_scene(SceneGenConfig{}, 5);
  const auto path = temp_path("cloud.bin");
  write_cloud_bin(path, s.cloud);
  EXPECT_EQ(std::filesystem::file_size(path), s.cloud.size() * 12);
  const auto back = read_cloud_bin(path);
  ASSERT_EQ(back.size(), s.cloud.size());
  for (std::size_t i = 0; i < back.size(); i += 97) {
    EXPECT_EQ(back[i].x, static_cast<double>(static_cast<float>(s.cloud[i].x)));
    EXPECT_EQ(back[i].z, static_cast<double>(static_cast<float>(s.cloud[i].z)));
  }
  std::filesystem::remove(path);
}

TEST(Detector, EmptyWindowGivesFixedScores) {
  Detector det(tiny_detector(), 1);
  const PointCloud far_away{{100, 100, 0}};
  const auto out = det.rpn_forward(far_away);
  EXPECT_EQ(out.inputs.norm(), 0.0);
  for (std::size_t a = 0; a < out.probs.size(); ++a)
    EXPECT_EQ(out.probs[a], out.probs[a % kAnchorsPerCell]);
  EXPECT_NEAR(out.probs[0], det.config().rpn.prior, 1e-12);
}

TEST(Detector, ProposalCountBounded) {
  Detector det(DetectorConfig{}, 2);
  const auto s = generate_scene(SceneGenConfig{}, 7);
  const auto props = det.proposals(det.rpn_forward(s.cloud), 0.8, 128);
  EXPECT_LE(props.size(), 128u);
  EXPECT_FALSE(props.empty());
}

TEST(Detector, RpnGradient) {
  std::mt19937_64 rng(3);
  Detector det(tiny_detector(), 3);
  det.params().at("rpn.2.b").value.setZero();
  const auto cloud = uniform_cloud(rng, 300);
  const auto n = det.anchors().boxes.size();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 5) - 1;
  std::normal_distribution<double> g(0, 2);
  nn::Matrix targets(static_cast<nn::Index>(n), 7);
  for (nn::Index i = 0; i < targets.size(); ++i) targets.data()[i] = g(rng);
  auto eval = [&](bool backward) {
    const auto out = det.rpn_forward(cloud);
    const auto r = loss::rpn_loss({out.probs, labels, out.deltas, targets, {}});
    if (backward) det.rpn_backward(out, r.d_probs, r.d_deltas);
    return r.total;
  };
  det.params().zero_grad();
  eval(true);
  nn::GradCheckOptions opts;
  opts.max_entries_per_tensor = 10;
  const auto rep = nn::grad_check([&] { return eval(false); }, det.params(), opts);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.summary();
}

TEST(Detector, RefineGradientThroughAllHeads) {
  std::mt19937_64 rng(4);
  Detector det(tiny_detector(), 4);
  const auto cloud = uniform_cloud(rng, 400);
  const std::vector<Box3D> props{make_box(2, 0, -0.5, 2, 1.5, 1.2, 0.3), make_box(4, 1, -0.5, 1.5, 1, 1.2, -1.0),
                                 make_box(3, -2, -0.4, 1.8, 1.2, 1.4, 2.0), make_box(1, 2, -0.5, 1.2, 1.2, 1.5, 0.0)};
  std::normal_distribution<double> g(0, 2);
  nn::Matrix reg_t(4, 7), temp_t(4, 4);
  for (nn::Index i = 0; i < reg_t.size(); ++i) reg_t.data()[i] = g(rng);
  for (nn::Index i = 0; i < temp_t.size(); ++i) temp_t.data()[i] = g(rng);
  auto eval = [&](bool backward) {
    const auto out = det.refine_forward(cloud, props, {true, true});
    const loss::ConfidenceTerms c{out.conf, {0.0, 0.4, 1.0, 0.8}};
    const loss::RegressionTerms r{out.deltas, reg_t, {1, 0, 1, 1}};
    const loss::TemplateLossBatch t{out.alpha, temp_t, {0.9, 0.1, 0.8, 0.7}, 0.55};
    const loss::ContrastiveBatch k{out.proj, {1, 0, 1, 2}, 0.1};
    const auto res = loss::rcnn_loss(c, r, &t, &k, {}, loss::Reduction::kMeanOverAnchors);
    if (backward) det.refine_backward(out, res.d_probs, res.d_deltas, res.d_template_features, res.d_contrastive_features);
    return res.total;
  };
  det.params().zero_grad();
  eval(true);
  nn::GradCheckOptions opts;
  opts.max_entries_per_tensor = 10;
  const auto rep = nn::grad_check([&] { return eval(false); }, det.params(), opts);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.summary();
}

TEST(Detector, HeadShapesAndUnitProjection) {
  Detector det(DetectorConfig{}, 5);
  const auto s = generate_scene(SceneGenConfig{}, 8);
  ASSERT_FALSE(s.gt_boxes.empty());
  std::vector<Box3D> props = s.gt_boxes;
  props.push_back(make_box(39, 19, 0, 1, 1, 1, 0));
  const auto out = det.refine_forward(s.cloud, props, {true, true});
  const auto n = static_cast<nn::Index>(props.size());
  EXPECT_EQ(out.conf.size(), props.size());
  EXPECT_EQ(out.deltas.rows(), n);
  EXPECT_EQ(out.deltas.cols(), 7);
  EXPECT_EQ(out.alpha.cols(), 16);
  EXPECT_EQ(out.proj.cols(), 128);
  for (nn::Index i = 0; i + 1 < n; ++i) {
    EXPECT_FALSE(out.empty[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(out.proj.row(i).norm(), 1.0, 1e-9);
  }
  EXPECT_TRUE(out.empty.back());
  EXPECT_EQ(out.proj.row(n - 1).norm(), 0.0);
  for (double c : out.conf) EXPECT_TRUE(c >= 0.0 && c <= 1.0);

  const auto plain = det.refine_forward(s.cloud, props, {});
  EXPECT_EQ(plain.alpha.size(), 0);
  EXPECT_EQ(plain.proj.size(), 0);
  EXPECT_EQ(plain.conf, out.conf);
}

TEST(Detector, EmptySceneNoDetections) {
  Detector det(DetectorConfig{}, 6);
  EXPECT_TRUE(det.infer({}, InferConfig{}).empty());
}

TEST(Detector, FinalNmsSeparatesEachClass) {
  const auto cfg = small_experiment(6, 2);
  auto model = train_model(cfg, {false, false}, 0);
  ASSERT_FALSE(model.result.diverged);
  std::size_t total = 0;
  for (std::uint64_t seed = 500; seed < 505; ++seed) {
    const auto dets = model.detector.infer(generate_scene(cfg.scene, seed).cloud, cfg.infer);
    total += dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      EXPECT_GE(dets[i].score, 0.0);
      EXPECT_LE(dets[i].score, 1.0);
      for (std::size_t j = i + 1; j < dets.size(); ++j)
        if (dets[i].class_id == dets[j].class_id) EXPECT_LE(bev_iou(dets[i].box, dets[j].box), 0.1);
    }
  }
  EXPECT_GT(total, 0u);
}

TEST(Train, OneEpochCheckpointReadable) {
  const auto cfg = small_experiment(10, 1);
  auto model = train_model(cfg, {true, true}, 1);
  ASSERT_EQ(model.result.log.size(), 1u);
  EXPECT_TRUE(std::isfinite(model.result.log[0].loss.total));
  const auto path = temp_path("ckpt.ifgk");
  model.detector.save(path);
  const auto tensors = nn::read_checkpoint(path);
  EXPECT_EQ(tensors.size(), model.detector.params().size());
  Detector other(cfg.detector(), 99);
  other.load(path);
  for (const auto& [name, p] : model.detector.params()) EXPECT_EQ(p.value, other.params().at(name).value) << name;
  std::filesystem::remove(path);
}

TEST(Train, BaselineTotalIsThreeTerms) {
  const auto cfg = small_experiment(3, 1);
  const auto scenes = generate_scenes(cfg.scene, cfg.train.scene_seed, 3);
  const auto templates = make_template_library(cfg.scene.template_points, cfg.scene.template_seed);
  Detector det(cfg.detector(), 2);
  Trainer trainer(det, scenes, templates, cfg.train, {false, false}, 2);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto t = trainer.accumulate(s, 10 + s);
    EXPECT_EQ(t.temp, 0.0);
    EXPECT_EQ(t.contra, 0.0);
    EXPECT_EQ(t.total, t.rpn + (t.conf + t.reg));
  }
}

TEST(Train, ModuleTermsAppearWhenEnabled) {
  const auto cfg = small_experiment(3, 1);
  const auto scenes = generate_scenes(cfg.scene, cfg.train.scene_seed, 3);
  const auto templates = make_template_library(cfg.scene.template_points, cfg.scene.template_seed);
  Detector det(cfg.detector(), 2);
  Trainer trainer(det, scenes, templates, cfg.train, {true, true}, 2);
  EXPECT_EQ(trainer.intrinsic_targets(0).rows(), static_cast<nn::Index>(scenes[0].gt_boxes.size()));
  EXPECT_EQ(trainer.intrinsic_targets(0).cols(), 16);
  const auto t = trainer.accumulate(0, 11);
  EXPECT_GT(t.temp, 0.0);
  EXPECT_GT(t.contra, 0.0);
  EXPECT_NEAR(t.total, t.rpn + t.conf + t.reg + t.temp + t.contra, 1e-12);
}

TEST(Train, DeterministicLossLog) {
  const auto cfg = small_experiment(4, 2);
  const auto a = train_model(cfg, {true, true}, 5);
  const auto b = train_model(cfg, {true, true}, 5);
  EXPECT_EQ(loss_log_csv(a.result.log), loss_log_csv(b.result.log));
  const auto c = train_model(cfg, {true, true}, 6);
  EXPECT_NE(loss_log_csv(a.result.log), loss_log_csv(c.result.log));
  EXPECT_EQ(loss_log_csv(a.result.log).substr(0, 43), "epoch,l_rpn,l_conf,l_reg,l_temp,l_contra,to");
}

TEST(Train, DisabledHeadsStayAtInitialization) {
  const auto cfg = small_experiment(3, 1);
  const Detector init(cfg.detector(), 8);
  const auto model = train_model(cfg, {false, false}, 8);
  for (const auto& [name, p] : model.detector.params()) {
    const bool module_head = name.starts_with("refine.feature") || name.starts_with("refine.projection");
    if (module_head) EXPECT_EQ(p.value, init.params().at(name).value) << name;
    if (name == "rpn.0.w") EXPECT_NE(p.value, init.params().at(name).value);
  }
}

TEST(Config, RoundTripAndUnknownKey) {
  ExperimentConfig cfg;
  cfg.train.epochs = 7;
  cfg.refine.tau = 0.2;
  cfg.ablation.mode = RecallMode::kR40;
  cfg.rpn.anchor[1].pos = 0.55;
  const auto back = parse_config(config_json(cfg));
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_EQ(back.refine.tau, 0.2);
  EXPECT_EQ(back.ablation.mode, RecallMode::kR40);
  EXPECT_EQ(back.rpn.anchor[1].pos, 0.55);
  EXPECT_EQ(config_json(back), config_json(cfg));
  EXPECT_THROW(parse_config(R"({"train": {"epochz": 3}})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"bogus": {}})"), std::invalid_argument);
  EXPECT_EQ(parse_config("{}").train.epochs, ExperimentConfig{}.train.epochs);
}

TEST(Config, FeatureDimMustMatchExtractor) {
  ExperimentConfig cfg;
  cfg.refine.feature_dim = 8;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
