#include "ifg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace ifg {

namespace {
// Written by the timing loop so the measured calls cannot be elided.
volatile std::size_t detections_ = 0;
}  // namespace

TrainedModel train_model(const ExperimentConfig& cfg, ModuleFlags flags, std::uint64_t seed,
                         const std::function<void(const EpochLoss&)>& on_epoch) {
  cfg.validate();
  const auto scenes = generate_scenes(cfg.scene, cfg.train.scene_seed, cfg.train.scenes);
  const auto templates = make_template_library(cfg.scene.template_points, cfg.scene.template_seed);
  TrainedModel model{Detector(cfg.detector(), seed), {}};
  Trainer trainer(model.detector, scenes, templates, cfg.train, flags, seed);
  model.result = trainer.run(on_epoch);
  return model;
}

std::vector<LabeledBox> to_labeled(std::span<const Detection> detections) {
  std::vector<LabeledBox> out;
  out.reserve(detections.size());
  for (const auto& d : detections) out.push_back({d.box, class_from_id(d.class_id), d.score});
  return out;
}

std::vector<EvalFrame> run_inference(const Detector& detector, std::span<const SceneSample> scenes,
                                     const InferConfig& cfg) {
  std::vector<EvalFrame> frames(scenes.size());
  const auto n = static_cast<std::ptrdiff_t>(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = scenes[static_cast<std::size_t>(i)];
    frames[static_cast<std::size_t>(i)] = {to_labeled(detector.infer(s.cloud, cfg)), s.labels()};
  }
  return frames;
}

std::vector<AblationRow> run_ablation(
    const ExperimentConfig& cfg, std::uint64_t seed, const std::function<void(const std::string&)>& progress,
    const std::function<void(const AblationRow&, std::size_t, const TrainedModel&)>& on_model) {
  cfg.validate();
  const auto test = generate_scenes(cfg.scene, cfg.ablation.test_seed, cfg.ablation.test_scenes);
  EvalConfig ecfg;
  ecfg.mode = cfg.ablation.mode;

  std::vector<AblationRow> rows{{'A', false, false, {}, {}}, {'B', true, false, {}, {}},
                                {'C', false, true, {}, {}},  {'D', true, true, {}, {}}};
  for (auto& row : rows) {
    std::array<double, 3> sum{};
    std::array<std::size_t, 3> counted{};
    for (std::size_t run = 0; run < cfg.ablation.runs; ++run) {
      const std::uint64_t run_seed = seed + run;
      auto model = train_model(cfg, {row.tafe, row.pscl}, run_seed);
      if (model.result.diverged) throw std::runtime_error("ablation arm diverged: " + model.result.message);
      if (on_model) on_model(row, run, model);
      const auto frames = run_inference(model.detector, test, cfg.infer);
      for (const auto& r : evaluate(frames, ecfg)) {
        if (!r.ap) continue;
        sum[class_index(r.cls)] += *r.ap;
        ++counted[class_index(r.cls)];
      }
      if (progress) {
        progress(std::string("method ") + row.method + " run " + std::to_string(run + 1) + "/" +
                 std::to_string(cfg.ablation.runs) + " done");
      }
    }
    double total = 0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      if (counted[c] == 0) continue;
      row.ap[c] = sum[c] / static_cast<double>(counted[c]);
      total += *row.ap[c];
      ++classes;
    }
    if (classes > 0) row.mean = total / static_cast<double>(classes);
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "method,tafe,pscl,car_ap,ped_ap,cyc_ap,mean_ap\n";
  auto field = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.method << ',' << (r.tafe ? 1 : 0) << ',' << (r.pscl ? 1 : 0) << ',' << field(r.ap[0]) << ','
       << field(r.ap[1]) << ',' << field(r.ap[2]) << ',' << field(r.mean) << '\n';
  }
  return os.str();
}

double time_inference(const Detector& detector, std::span<const SceneSample> scenes, const InferConfig& cfg,
                      std::size_t repeats) {
  std::vector<double> times;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& s : scenes) detections_ = detections_ + detector.infer(s.cloud, cfg).size();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace ifg
