// ifgkit: command-line front end for templates, scenes, training, inference,
// evaluation, the module ablation and the self-checks.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ifg/checks.hpp"
#include "ifg/config.hpp"
#include "ifg/eval.hpp"
#include "ifg/experiment.hpp"
#include "ifg/kernels.hpp"
#include "ifg/scene.hpp"
#include "ifg/templates.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

fs::path output_dir(const Common& c) {
  if (c.out.empty()) throw std::runtime_error("--out is required for this subcommand");
  fs::create_directories(c.out);
  return c.out;
}

ifg::ExperimentConfig load(const Common& c) {
  return c.config.empty() ? ifg::ExperimentConfig{} : ifg::load_config(c.config);
}

std::string scene_stem(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%06llu", static_cast<unsigned long long>(seed));
  return buf;
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void print_epoch(const ifg::EpochLoss& e) {
  std::printf("epoch %3zu  rpn %.4f  conf %.4f  reg %.4f  temp %.4f  contra %.4f  total %.4f\n", e.epoch, e.loss.rpn,
              e.loss.conf, e.loss.reg, e.loss.temp, e.loss.contra, e.loss.total);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ifgkit: template-assisted, contrastively trained toy 3D detector"};
  app.footer(
      "Values given as flags override the same values from --config, which override the built-in defaults.\n"
      "Exit codes: 0 success, 1 runtime failure, 2 usage error.");
  app.require_subcommand(1, 1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON experiment configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--seed", common.seed, "random seed (default 0)");
  };

  auto* gen_templates = app.add_subcommand("gen-templates", "write the three class templates as PLY files");
  std::size_t k = 1024;
  add_common(gen_templates);
  gen_templates->add_option("--k", k, "points per template")->check(CLI::Range(64, 1 << 22));

  auto* gen_scenes = app.add_subcommand("gen-scenes", "write synthetic scenes (.bin) with KITTI-style labels (.txt)");
  std::size_t count = 10;
  add_common(gen_scenes);
  gen_scenes->add_option("--count", count, "number of scenes; seeds are seed, seed + 1, ...");

  auto* train = app.add_subcommand("train", "train a detector; writes checkpoint.ifgk and loss_log.csv");
  add_common(train);
  std::optional<std::size_t> epochs, train_scenes;
  bool tafe = true, pscl = true;
  train->add_option("--epochs", epochs, "override train.epochs");
  train->add_option("--scenes", train_scenes, "override train.scenes");
  auto* tafe_flag = train->add_flag("--tafe,!--no-tafe", tafe, "template-assisted feature enhancement (default on)");
  auto* pscl_flag = train->add_flag("--pscl,!--no-pscl", pscl, "proposal-level contrastive learning (default on)");

  auto* infer = app.add_subcommand("infer", "detect objects in every .bin scene of a directory");
  add_common(infer);
  std::string checkpoint, input;
  infer->add_option("--checkpoint", checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--input", input, "directory of .bin scenes")->required()->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("eval", "score detection labels against GT labels; writes ap.csv");
  add_common(eval);
  std::string det_dir, gt_dir, mode = "R11";
  eval->add_option("--detections", det_dir, "directory of detection .txt files")->required();
  eval->add_option("--labels", gt_dir, "directory of GT .txt files")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--mode", mode, "R11 or R40")->check(CLI::IsMember({"R11", "R40"}));

  auto* ablate = app.add_subcommand("ablate", "train and score the 2x2 TAFE x PSCL ablation; writes ablation.csv");
  add_common(ablate);
  std::optional<std::size_t> test_scenes, runs, ablate_epochs, ablate_train_scenes;
  ablate->add_option("--scenes", test_scenes, "held-out test scenes (override ablation.test_scenes)");
  ablate->add_option("--runs", runs, "training seeds per method (override ablation.runs)");
  ablate->add_option("--epochs", ablate_epochs, "override train.epochs");
  ablate->add_option("--train-scenes", ablate_train_scenes, "override train.scenes");

  auto* check = app.add_subcommand("check", "run the IoU, NMS, encoding, gradient and AP oracle suites");
  add_common(check);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_templates->parsed()) {
      const auto dir = output_dir(common);
      for (const auto& t : ifg::make_template_library(k, common.seed)) {
        std::string name(ifg::class_name(t.cls));
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        ifg::write_template_ply(dir / (name + ".ply"), t);
      }
      std::cout << "wrote 3 templates of " << k << " points to " << dir.string() << "\n";
      return 0;
    }

    if (gen_scenes->parsed()) {
      const auto cfg = load(common);
      const auto dir = output_dir(common);
      const auto scenes = ifg::generate_scenes(cfg.scene, common.seed, count);
      for (const auto& s : scenes) {
        ifg::write_cloud_bin(dir / (scene_stem(s.seed) + ".bin"), s.cloud);
        const auto labels = s.labels();
        ifg::write_label_file((dir / (scene_stem(s.seed) + ".txt")).string(), labels);
        for (const auto& d : s.diagnostics) std::cerr << scene_stem(s.seed) << ": " << d << "\n";
      }
      std::cout << "wrote " << scenes.size() << " scenes to " << dir.string() << "\n";
      return 0;
    }

    if (train->parsed()) {
      auto cfg = load(common);
      if (epochs) cfg.train.epochs = *epochs;
      if (train_scenes) cfg.train.scenes = *train_scenes;
      if (tafe_flag->count() > 0) cfg.ablation.use_tafe = tafe;
      if (pscl_flag->count() > 0) cfg.ablation.use_pscl = pscl;
      cfg.validate();
      const auto dir = output_dir(common);
      write_text(dir / "config.json", ifg::config_json(cfg));
      auto model = ifg::train_model(cfg, {cfg.ablation.use_tafe, cfg.ablation.use_pscl}, common.seed, print_epoch);
      model.detector.save(dir / "checkpoint.ifgk");
      write_text(dir / "loss_log.csv", ifg::loss_log_csv(model.result.log));
      if (model.result.diverged) {
        std::cerr << "training aborted: " << model.result.message << "\n";
        return 1;
      }
      std::cout << "wrote " << (dir / "checkpoint.ifgk").string() << "\n";
      return 0;
    }

    if (infer->parsed()) {
      const auto cfg = load(common);
      const auto dir = output_dir(common);
      ifg::Detector det(cfg.detector(), 0);
      det.load(checkpoint);
      const auto files = files_with_extension(input, ".bin");
      for (const auto& f : files) {
        const auto dets = ifg::to_labeled(det.infer(ifg::read_cloud_bin(f), cfg.infer));
        ifg::write_label_file((dir / f.filename().replace_extension(".txt")).string(), dets);
      }
      std::cout << "wrote detections for " << files.size() << " scenes to " << dir.string() << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const auto dir = output_dir(common);
      ifg::EvalConfig ecfg;
      ecfg.mode = mode == "R40" ? ifg::RecallMode::kR40 : ifg::RecallMode::kR11;
      std::vector<ifg::EvalFrame> frames;
      for (const auto& g : files_with_extension(gt_dir, ".txt")) {
        ifg::EvalFrame frame;
        frame.gts = ifg::read_label_file(g.string());
        const auto d = fs::path(det_dir) / g.filename();
        if (fs::exists(d)) frame.detections = ifg::read_label_file(d.string());
        frames.push_back(std::move(frame));
      }
      auto rows = ifg::evaluate(frames, ecfg);
      const auto buckets = ifg::bucketed_ap(frames, ecfg);
      rows.insert(rows.end(), buckets.begin(), buckets.end());
      write_text(dir / "ap.csv", ifg::ap_rows_csv(rows));
      ifgkit::print_report(std::cout, rows);
      return 0;
    }

    if (ablate->parsed()) {
      auto cfg = load(common);
      if (test_scenes) cfg.ablation.test_scenes = *test_scenes;
      if (runs) cfg.ablation.runs = *runs;
      if (ablate_epochs) cfg.train.epochs = *ablate_epochs;
      if (ablate_train_scenes) cfg.train.scenes = *ablate_train_scenes;
      cfg.validate();
      const auto dir = output_dir(common);
      write_text(dir / "config.json", ifg::config_json(cfg));
      const auto rows = ifg::run_ablation(cfg, common.seed, [](const std::string& m) { std::cerr << m << "\n"; });
      write_text(dir / "ablation.csv", ifg::ablation_csv(rows));
      ifgkit::print_report(std::cout, rows);
      return 0;
    }

    if (check->parsed()) {
      std::ostringstream report;
      bool ok = true;
      for (const auto& r : ifg::checks::run_oracle_suite(common.seed)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " (%.1f s): ", r.seconds);
        report << (r.passed ? "PASS " : "FAIL ") << r.name << buf << r.detail << "\n";
        ok = ok && r.passed;
      }
      std::cout << report.str();
      if (!common.out.empty()) write_text(output_dir(common) / "check.txt", report.str());
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
