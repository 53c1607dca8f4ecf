#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ifg/error.hpp"
#include "ifg/eval.hpp"

using namespace ifg;

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

LabeledBox gt(double x, double y, ObjectClass c = ObjectClass::kCar) {
  const auto d = canonical_dims(c);
  return {make_box(x, y, 0, d.l, d.w, d.h, 0.1), c, std::nullopt};
}

LabeledBox det(const LabeledBox& g, double score) { return {g.box, g.cls, score}; }

// Interpolated precision straight from the definition, evaluated at recall r.
double interpolated(std::span<const PrPoint> c, double r) {
  double best = 0;
  for (const auto& p : c)
    if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
  return best;
}

double ap_direct(std::span<const PrPoint> c, RecallMode mode) {
  double sum = 0;
  if (mode == RecallMode::kR11) {
    for (int i = 0; i <= 10; ++i) sum += interpolated(c, i / 10.0);
    return sum / 11;
  }
  for (int i = 1; i <= 40; ++i) sum += interpolated(c, i / 40.0);
  return sum / 40;
}

// Three GTs, detections by score order: hit, miss, hit.
EvalFrame three_gt_frame() {
  EvalFrame f;
  f.gts = {gt(10, 0), gt(20, 5), gt(30, -5)};
  f.detections = {det(f.gts[0], 0.9), det(gt(50, 50), 0.8), det(f.gts[1], 0.7)};
  return f;
}

}  // namespace

TEST(ParseLabels, FieldMapping) {
  const auto r = parse_labels("Car 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 0.0 10.0 0.0 0.9\n");
  ASSERT_EQ(r.objects.size(), 1u);
  const auto& o = r.objects[0];
  EXPECT_EQ(o.cls, ObjectClass::kCar);
  EXPECT_DOUBLE_EQ(o.box.x, 5.0);
  EXPECT_DOUBLE_EQ(o.box.y, 0.0);
  EXPECT_DOUBLE_EQ(o.box.z, 10.75);
  EXPECT_DOUBLE_EQ(o.box.l, 3.9);
  EXPECT_DOUBLE_EQ(o.box.w, 1.6);
  EXPECT_DOUBLE_EQ(o.box.h, 1.5);
  EXPECT_DOUBLE_EQ(o.box.theta, 0.0);
  EXPECT_EQ(o.score, 0.9);
}

TEST(ParseLabels, BottomAtZeroLiftsToHalfHeight) {
  const auto r = parse_labels("Car 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 0.0 0.0 0.0\n");
  EXPECT_DOUBLE_EQ(r.objects[0].box.z, 0.75);
  EXPECT_FALSE(r.objects[0].score);
}

TEST(ParseLabels, WrongFieldCountNamesLine) {
  try {
    parse_labels("Car 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 0.0 10.0 0.0\nCar 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 0.0 10.0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_labels("Car 0 0 0 0 0 0 0 1.5 x 3.9 5.0 0.0 10.0 0.0\n"), ParseError);
}

TEST(ParseLabels, UnknownTypeSkipped) {
  const auto r = parse_labels("Van 0 0 0 0 0 0 0 1.5 1.6 3.9 5.0 0.0 10.0 0.0\nDontCare 0 0 0 0 0 0 0 1 1 1 1 1 1 0\n");
  EXPECT_TRUE(r.objects.empty());
  EXPECT_EQ(r.diagnostics.size(), 2u);
}

TEST(SerializeLabels, EmptyAndShape) {
  EXPECT_EQ(serialize_labels({}), "");
  const std::vector<LabeledBox> one{{make_box(1, 2, 3, 4, 2, 1.5, 0.5), ObjectClass::kCyclist, 0.4}};
  const auto text = serialize_labels(one);
  std::istringstream ss(text);
  std::vector<std::string> fields;
  for (std::string f; ss >> f;) fields.push_back(f);
  EXPECT_EQ(fields.size(), 16u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(fields[0], "Cyclist");
}

TEST(SerializeLabels, FixtureRoundTrip) {
  const auto text = read_all(std::filesystem::path(IFG_FIXTURE_DIR) / "labels.txt");
  const auto parsed = parse_labels(text);
  ASSERT_EQ(parsed.objects.size(), 3u);
  EXPECT_EQ(serialize_labels(parsed.objects), text);
  const auto again = parse_labels(serialize_labels(parsed.objects));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(again.objects[i].box.x, parsed.objects[i].box.x, 1e-6);
    EXPECT_NEAR(again.objects[i].box.z, parsed.objects[i].box.z, 1e-6);
    EXPECT_NEAR(again.objects[i].box.theta, parsed.objects[i].box.theta, 1e-6);
  }
}

TEST(LabelFile, WriteRead) {
  const auto path = (std::filesystem::temp_directory_path() / "ifg_eval_labels.txt").string();
  const std::vector<LabeledBox> objs{gt(3, 4), det(gt(7, 1, ObjectClass::kPedestrian), 0.3)};
  write_label_file(path, objs);
  const auto back = read_label_file(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_NEAR(back[1].box.x, 7, 1e-6);
  EXPECT_EQ(back[1].cls, ObjectClass::kPedestrian);
  std::filesystem::remove(path);
}

TEST(PrCurve, PerfectDetector) {
  EvalFrame f;
  f.gts = {gt(5, 0), gt(10, 3), gt(15, -3)};
  for (std::size_t i = 0; i < 3; ++i) f.detections.push_back(det(f.gts[i], 0.5 + 0.1 * i));
  const std::vector<EvalFrame> frames{f};
  const auto c = pr_curve(frames, ObjectClass::kCar, 0.7);
  ASSERT_EQ(c.size(), 3u);
  for (const auto& p : c) EXPECT_DOUBLE_EQ(p.precision, 1.0);
  EXPECT_DOUBLE_EQ(c.back().recall, 1.0);
  EXPECT_DOUBLE_EQ(average_precision(c, RecallMode::kR11), 1.0);
  EXPECT_DOUBLE_EQ(average_precision(c, RecallMode::kR40), 1.0);
}

TEST(PrCurve, TotalMiss) {
  EvalFrame f;
  f.gts = {gt(5, 0)};
  f.detections = {det(gt(30, 30), 0.9)};
  const std::vector<EvalFrame> frames{f};
  const auto c = pr_curve(frames, ObjectClass::kCar, 0.7);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].precision, 0.0);
  EXPECT_EQ(c[0].recall, 0.0);
  EXPECT_EQ(average_precision(c, RecallMode::kR11), 0.0);
  EXPECT_EQ(average_precision({}, RecallMode::kR40), 0.0);
}

TEST(PrCurve, HitMissHit) {
  const std::vector<EvalFrame> frames{three_gt_frame()};
  const auto c = pr_curve(frames, ObjectClass::kCar, 0.7);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(c[0].recall, 1.0 / 3);
  EXPECT_DOUBLE_EQ(c[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(c[1].recall, 1.0 / 3);
  EXPECT_DOUBLE_EQ(c[2].precision, 2.0 / 3);
  EXPECT_DOUBLE_EQ(c[2].recall, 2.0 / 3);
}

TEST(AveragePrecision, HitMissHitAgainstDefinition) {
  const std::vector<EvalFrame> frames{three_gt_frame()};
  const auto c = pr_curve(frames, ObjectClass::kCar, 0.7);
  // Recall 1/3 covers the positions 0 .. 0.3 at precision 1, recall 2/3 covers 0.4 .. 0.6 at 2/3.
  EXPECT_NEAR(average_precision(c, RecallMode::kR11), 6.0 / 11, 1e-12);
  EXPECT_NEAR(average_precision(c, RecallMode::kR11), ap_direct(c, RecallMode::kR11), 1e-12);
  EXPECT_NEAR(average_precision(c, RecallMode::kR40), 0.541667, 1e-6);
  EXPECT_NEAR(average_precision(c, RecallMode::kR40), ap_direct(c, RecallMode::kR40), 1e-12);
}

TEST(AveragePrecision, RandomSequencesAgainstDefinition) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_gt = 1 + rng() % 10;
    std::vector<PrPoint> curve;
    std::size_t tp = 0;
    for (std::size_t k = 1; k <= 15; ++k) {
      if (tp < n_gt && rng() % 2) ++tp;
      curve.push_back({static_cast<double>(tp) / k, static_cast<double>(tp) / n_gt});
    }
    for (auto mode : {RecallMode::kR11, RecallMode::kR40})
      EXPECT_NEAR(average_precision(curve, mode), ap_direct(curve, mode), 1e-12);
  }
}

TEST(Evaluate, SkipsClassesWithoutGt) {
  const std::vector<EvalFrame> frames{three_gt_frame()};
  const auto rows = evaluate(frames, {});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].ap);
  EXPECT_FALSE(rows[1].ap);
  EXPECT_FALSE(rows[2].ap);
  EXPECT_EQ(rows[0].num_gt, 3u);
  EXPECT_EQ(rows[0].num_det, 3u);
  EXPECT_NEAR(*mean_ap(rows), 6.0 / 11, 1e-12);
  EXPECT_EQ(ap_rows_csv(rows).substr(0, 20), "class,bucket,mode,ap");
}

TEST(Evaluate, MatchingStaysWithinFrame) {
  EvalFrame a, b;
  a.gts = {gt(10, 0)};
  b.detections = {det(a.gts[0], 0.9)};
  b.gts = {gt(30, 0)};
  const std::vector<EvalFrame> frames{a, b};
  EXPECT_EQ(*evaluate(frames, {})[0].ap, 0.0);
}

TEST(Buckets, HalfOpenEdges) {
  const EvalConfig cfg;
  EXPECT_EQ(cfg.bucket_of(10), 0u);
  EXPECT_EQ(cfg.bucket_of(20), 1u);
  EXPECT_EQ(cfg.bucket_of(39.999), 1u);
  EXPECT_EQ(cfg.bucket_of(40), 2u);
  EXPECT_EQ(cfg.bucket_of(1e6), 2u);
  EXPECT_EQ(cfg.bucket_name(0), "0-20");
}

TEST(Buckets, AllAtTenMeters) {
  EvalFrame f;
  f.gts = {gt(10, 0), gt(0, 10, ObjectClass::kPedestrian)};
  f.detections = {det(f.gts[0], 0.8), det(f.gts[1], 0.7)};
  const std::vector<EvalFrame> frames{f};
  for (const auto& r : bucketed_ap(frames, {})) {
    if (r.bucket == "0-20" && r.cls != ObjectClass::kCyclist) {
      EXPECT_EQ(r.ap, 1.0);
    } else {
      EXPECT_FALSE(r.ap) << r.bucket;
      EXPECT_EQ(r.num_gt, 0u);
    }
  }
}

TEST(Buckets, ObjectAtTwentyMeters) {
  EvalFrame f;
  f.gts = {gt(20, 0)};
  f.detections = {det(f.gts[0], 0.8)};
  const std::vector<EvalFrame> frames{f};
  for (const auto& r : bucketed_ap(frames, {}))
    if (r.cls == ObjectClass::kCar) EXPECT_EQ(r.num_gt, r.bucket == "20-40" ? 1u : 0u) << r.bucket;
}

TEST(Buckets, MatchRestrictedEvaluation) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-55, 55), s(0, 1);
  std::vector<EvalFrame> frames(5);
  for (auto& f : frames) {
    for (int i = 0; i < 12; ++i) {
      const auto g = gt(u(rng), u(rng), kAllClasses[rng() % 3]);
      bool clear = true;
      for (const auto& o : f.gts) clear &= std::hypot(o.box.x - g.box.x, o.box.y - g.box.y) > 5;
      if (!clear) continue;
      f.gts.push_back(g);
      if (s(rng) < 0.7) f.detections.push_back(det(g, s(rng)));
    }
    for (int i = 0; i < 6; ++i) f.detections.push_back(det(gt(u(rng) + 200, u(rng), kAllClasses[rng() % 3]), s(rng)));
  }
  const EvalConfig cfg;
  const auto rows = bucketed_ap(frames, cfg);
  for (std::size_t b = 0; b + 1 < cfg.bucket_edges.size(); ++b) {
    std::vector<EvalFrame> restricted;
    for (const auto& f : frames) {
      EvalFrame r;
      auto in = [&](const LabeledBox& o) { return cfg.bucket_of(std::hypot(o.box.x, o.box.y)) == b; };
      std::copy_if(f.gts.begin(), f.gts.end(), std::back_inserter(r.gts), in);
      std::copy_if(f.detections.begin(), f.detections.end(), std::back_inserter(r.detections), in);
      restricted.push_back(r);
    }
    for (const auto& plain : evaluate(restricted, cfg)) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const ApRow& r) {
        return r.cls == plain.cls && r.bucket == cfg.bucket_name(b);
      });
      ASSERT_NE(it, rows.end());
      EXPECT_EQ(it->ap.has_value(), plain.ap.has_value());
      if (plain.ap) EXPECT_NEAR(*it->ap, *plain.ap, 1e-12) << it->bucket;
      EXPECT_EQ(it->num_gt, plain.num_gt);
      EXPECT_EQ(it->num_det, plain.num_det);
    }
  }
}

TEST(EvalConfig, Validate) {
  EvalConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.iou_thresholds[0] = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.bucket_edges = {0, 40, 20};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
