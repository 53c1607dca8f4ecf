// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ifg/checks.hpp"
#include "ifg/config.hpp"
#include "ifg/experiment.hpp"

namespace {

// Tolerances and budgets.
constexpr double kGeometryBudget = 60.0;      // s
constexpr double kGradientBudget = 120.0;     // s
constexpr double kLossRatio = 0.8;            // final / initial total loss must be below this
constexpr double kTrainBudget = 300.0;        // s, per training run
constexpr double kAblationMargin = 0.5;       // AP points, D over A
constexpr double kAblationBudget = 1800.0;    // s
constexpr double kTimingTolerance = 0.05;     // relative inference-time difference
constexpr std::size_t kTimingScenes = 50;
constexpr std::size_t kTimingRepeats = 7;
// Ablation protocol: the largest training set and seed count that fit the budget.
constexpr std::size_t kAblationTrainScenes = 100;
constexpr std::size_t kAblationRuns = 2;

int failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail, double seconds) {
  std::printf("%s  %d %s (%.1f s): %s\n", passed ? "PASS" : "FAIL", id, name.c_str(), seconds, detail.c_str());
  std::fflush(stdout);
  failures += passed ? 0 : 1;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
  return buf;
}

void oracle_criteria() {
  using namespace ifg::checks;
  auto r = check_geometry(0);
  report(1, "geometry oracles", r.passed && r.seconds < kGeometryBudget, r.detail, r.seconds);
  r = check_encoding(0);
  report(2, "encoding bijection", r.passed, r.detail, r.seconds);
  r = check_gradients(0);
  report(3, "gradient suite", r.passed && r.seconds < kGradientBudget, r.detail, r.seconds);
  r = check_confidence_labels();
  report(4, "confidence labels", r.passed, r.detail, r.seconds);
  r = check_supcon_separation(0);
  report(5, "supcon separation", r.passed, r.detail, r.seconds);
  r = check_ap_metric();
  report(6, "AP metric", r.passed, r.detail, r.seconds);
}

void training_smoke() {
  ifg::ExperimentConfig cfg;
  cfg.train.epochs = 20;
  cfg.train.scenes = 50;
  const ifg::ModuleFlags flags{cfg.ablation.use_tafe, cfg.ablation.use_pscl};
  const auto t0 = std::chrono::steady_clock::now();
  const auto first = ifg::train_model(cfg, flags, 0);
  const double first_seconds = since(t0);
  const auto second = ifg::train_model(cfg, flags, 0);
  const double seconds = since(t0);

  const auto& log = first.result.log;
  const bool complete = !first.result.diverged && log.size() == cfg.train.epochs;
  const double initial = complete ? log.front().loss.total : NAN;
  const double final = complete ? log.back().loss.total : NAN;
  const bool same = ifg::loss_log_csv(log) == ifg::loss_log_csv(second.result.log);
  const bool passed = complete && final < kLossRatio * initial && same && first_seconds < kTrainBudget &&
                      seconds - first_seconds < kTrainBudget;
  report(7, "training smoke", passed,
         fmt("total loss %.4f -> %.4f (ratio %.3f, limit %.2f); ", initial, final, final / initial, kLossRatio) +
             (same ? "loss log identical across reruns" : "loss log differs across reruns") +
             fmt("; %.0f s per run", first_seconds),
         seconds);
}

void ablation_and_timing() {
  ifg::ExperimentConfig cfg;
  cfg.ablation.test_scenes = 200;
  cfg.train.scenes = kAblationTrainScenes;
  cfg.ablation.runs = kAblationRuns;
  const auto dir = std::filesystem::temp_directory_path() / "ifg_acceptance";
  std::filesystem::create_directories(dir);

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = ifg::run_ablation(
      cfg, 0, [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); },
      [&](const ifg::AblationRow& row, std::size_t run, const ifg::TrainedModel& model) {
        if (run == 0 && (row.method == 'A' || row.method == 'D'))
          model.detector.save(dir / (std::string(1, row.method) + ".ifgk"));
      });
  const double seconds = since(t0);

  double ap[4];
  for (int i = 0; i < 4; ++i) ap[i] = 100.0 * rows[static_cast<std::size_t>(i)].mean.value_or(0.0);
  const double a = ap[0], b = ap[1], c = ap[2], d = ap[3];
  const bool passed = d >= std::max(b, c) && std::max(b, c) >= a && d - a >= kAblationMargin && seconds < kAblationBudget;
  report(8, "module ablation", passed,
         fmt("mean AP A %.2f, B %.2f, C %.2f, D %.2f; D - A = %.2f", a, b, c, d, d - a) +
             fmt(" (need D >= max(B, C) >= A and D - A >= %.1f); runs %.0f", kAblationMargin,
                 static_cast<double>(cfg.ablation.runs)),
         seconds);

  // Inference cost: baseline checkpoint against the both-modules checkpoint.
  const auto t1 = std::chrono::steady_clock::now();
  ifg::Detector base(cfg.detector(), 0), full(cfg.detector(), 0);
  base.load(dir / "A.ifgk");
  full.load(dir / "D.ifgk");
  const auto scenes = ifg::generate_scenes(cfg.scene, cfg.ablation.test_seed, kTimingScenes);
  std::vector<double> tb, tf;
  for (std::size_t r = 0; r < kTimingRepeats; ++r) {
    tb.push_back(ifg::time_inference(base, scenes, cfg.infer, 1));
    tf.push_back(ifg::time_inference(full, scenes, cfg.infer, 1));
  }
  std::sort(tb.begin(), tb.end());
  std::sort(tf.begin(), tf.end());
  const double mb = tb[tb.size() / 2], mf = tf[tf.size() / 2];
  const double rel = std::abs(mf - mb) / std::min(mb, mf);
  report(9, "inference cost", rel < kTimingTolerance,
         fmt("median %.4f s (no modules) vs %.4f s (both modules) over %.0f scenes; difference %.2f%% (limit %.0f%%)", mb,
             mf, static_cast<double>(kTimingScenes), 100 * rel, 100 * kTimingTolerance),
         since(t1));
  std::filesystem::remove_all(dir);
}

}  // namespace

int main() {
  oracle_criteria();
  training_smoke();
  ablation_and_timing();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
