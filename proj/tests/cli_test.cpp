#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ifg/eval.hpp"
#include "ifg/templates.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(IFGKIT_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ifgkit_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_all(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<ifg::AblationRow> four_rows() {
  return {{'A', false, false, {0.5, 0.25, 0.125}, 0.2917},
          {'B', true, false, {0.51, 0.26, 0.13}, 0.3},
          {'C', false, true, {0.52, 0.27, std::nullopt}, 0.395},
          {'D', true, true, {0.53, 0.28, 0.14}, 0.3167}};
}

}  // namespace

TEST(PrintReport, EmptyIsHeaderOnly) {
  std::ostringstream os;
  ifgkit::print_report(os, std::span<const ifg::AblationRow>{});
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.rfind("method", 0), 0u);
}

TEST(PrintReport, AblationColumns) {
  std::ostringstream os;
  const auto rows = four_rows();
  ifgkit::print_report(os, rows);
  std::istringstream is(os.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 6u);
  std::istringstream header(lines[0]);
  std::vector<std::string> words;
  for (std::string w; header >> w;) words.push_back(w);
  EXPECT_EQ(words, (std::vector<std::string>{"method", "TAFE", "PSCL", "car", "AP", "ped", "AP", "cyc", "AP"}));
  EXPECT_NE(lines[2].find("50.00"), std::string::npos);
  EXPECT_NE(lines[4].find('-'), std::string::npos);
  EXPECT_EQ(lines[5].substr(0, 1), "D");
  EXPECT_NE(lines[5].find("yes"), std::string::npos);
  for (const auto& l : lines) EXPECT_TRUE(l.empty() || l.back() != ' ');
}

TEST(PrintReport, ByteIdenticalAcrossRuns) {
  std::ostringstream a, b;
  const auto rows = four_rows();
  ifgkit::print_report(a, rows);
  ifgkit::print_report(b, rows);
  EXPECT_EQ(a.str(), b.str());
  std::vector<ifg::ApRow> ap{{ifg::ObjectClass::kCar, "all", ifg::RecallMode::kR11, 0.75, 4, 5}};
  std::ostringstream c, d;
  ifgkit::print_report(c, ap);
  ifgkit::print_report(d, ap);
  EXPECT_EQ(c.str(), d.str());
  EXPECT_NE(c.str().find("75.00"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("gen-templates --bogus"), 2);
  EXPECT_EQ(run("eval --mode R12 --detections x --labels /"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto dir = fresh_dir("runtime");
  std::ofstream(dir / "bad.json") << R"({"train": {"nope": 1}})";
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string()), 1);
  EXPECT_EQ(run("gen-templates"), 1);
  fs::remove_all(dir);
}

TEST(Cli, GenTemplatesWritesThreePly) {
  const auto dir = fresh_dir("templates");
  ASSERT_EQ(run("gen-templates --out " + dir.string() + " --k 1024 --seed 0"), 0);
  for (const char* name : {"car.ply", "pedestrian.ply", "cyclist.ply"}) {
    ASSERT_TRUE(fs::exists(dir / name)) << name;
    EXPECT_EQ(ifg::read_template_ply(dir / name).points.size(), 1024u);
  }
  fs::remove_all(dir);
}

TEST(Cli, EvalOfGroundTruthIsPerfect) {
  const auto dir = fresh_dir("eval");
  ASSERT_EQ(run("gen-scenes --out " + (dir / "scenes").string() + " --count 4 --seed 3"), 0);
  fs::create_directories(dir / "dets");
  for (const auto& e : fs::directory_iterator(dir / "scenes")) {
    if (e.path().extension() != ".txt") continue;
    auto objs = ifg::read_label_file(e.path().string());
    for (auto& o : objs) o.score = 0.9;
    ifg::write_label_file((dir / "dets" / e.path().filename()).string(), objs);
  }
  ASSERT_EQ(run("eval --detections " + (dir / "dets").string() + " --labels " + (dir / "scenes").string() +
                " --out " + (dir / "out").string()),
            0);
  std::istringstream csv(read_all(dir / "out" / "ap.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "class,bucket,mode,ap");
  std::size_t scored = 0;
  while (std::getline(csv, line)) {
    const auto ap = line.substr(line.rfind(',') + 1);
    if (ap.empty()) continue;
    EXPECT_DOUBLE_EQ(std::stod(ap), 1.0) << line;
    ++scored;
  }
  EXPECT_GT(scored, 0u);
  fs::remove_all(dir);
}

TEST(Cli, TrainInferEndToEnd) {
  const auto dir = fresh_dir("train");
  std::ofstream(dir / "cfg.json") << R"({"train": {"scenes": 3, "epochs": 1}})";
  ASSERT_EQ(run("train --config " + (dir / "cfg.json").string() + " --out " + (dir / "run").string() + " --no-pscl"), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.ifgk"));
  EXPECT_EQ(read_all(dir / "run" / "loss_log.csv").rfind("epoch,l_rpn", 0), 0u);
  EXPECT_NE(read_all(dir / "run" / "config.json").find("\"use_pscl\": false"), std::string::npos);
  ASSERT_EQ(run("gen-scenes --out " + (dir / "scenes").string() + " --count 2"), 0);
  ASSERT_EQ(run("infer --checkpoint " + (dir / "run" / "checkpoint.ifgk").string() + " --input " +
                (dir / "scenes").string() + " --out " + (dir / "dets").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "dets" / "scene_000000.txt"));
  fs::remove_all(dir);
}
