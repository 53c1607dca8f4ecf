// Serial reference vs OpenMP kernels on scene-sized inputs.

#include <benchmark/benchmark.h>

#include <random>

#include "ifg/kernels.hpp"
#include "ifg/pointops.hpp"
#include "ifg/scene.hpp"

namespace {

std::vector<ifg::Box3D> random_boxes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> x(0, 40), y(-20, 20), d(0.5, 4.0), t(-3.1, 3.1);
  std::vector<ifg::Box3D> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(ifg::make_box(x(rng), y(rng), 0, d(rng), d(rng) / 2, 1.5, t(rng)));
  return out;
}

const ifg::SceneSample& scene() {
  static const ifg::SceneSample s = ifg::generate_scene(ifg::SceneGenConfig{}, 3);
  return s;
}

template <bool Parallel>
void BM_IouTable(benchmark::State& state) {
  const auto a = random_boxes(static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_boxes(64, 2);
  for (auto _ : state) {
    auto t = Parallel ? ifg::kernels::iou_table(a, b, ifg::kernels::IouKind::k3d)
                      : ifg::kernels::serial::iou_table(a, b, ifg::kernels::IouKind::k3d);
    benchmark::DoNotOptimize(t.values.data());
  }
}

template <bool Parallel>
void BM_PointsInBoxes(benchmark::State& state) {
  const auto boxes = random_boxes(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) {
    auto r = Parallel ? ifg::kernels::points_in_boxes(scene().cloud, boxes, 1.2)
                      : ifg::kernels::serial::points_in_boxes(scene().cloud, boxes, 1.2);
    benchmark::DoNotOptimize(r.data());
  }
}

template <bool Parallel>
void BM_GroupPoints(benchmark::State& state) {
  const auto centers = ifg::farthest_point_sampling(scene().cloud, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto r = Parallel ? ifg::kernels::group_points(scene().cloud, centers, 0.4, 32)
                      : ifg::kernels::serial::group_points(scene().cloud, centers, 0.4, 32);
    benchmark::DoNotOptimize(r.data());
  }
}

template <bool Parallel>
void BM_Nms(benchmark::State& state) {
  const auto boxes = random_boxes(static_cast<std::size_t>(state.range(0)), 5);
  std::vector<double> scores(boxes.size());
  std::mt19937_64 rng(6);
  for (auto& s : scores) s = std::uniform_real_distribution<double>(0, 1)(rng);
  for (auto _ : state) {
    auto k = Parallel ? ifg::kernels::nms(boxes, scores, 0.7, 100) : ifg::kernels::serial::nms(boxes, scores, 0.7, 100);
    benchmark::DoNotOptimize(k.data());
  }
}

}  // namespace

BENCHMARK(BM_IouTable<false>)->Arg(128)->Arg(1024);
BENCHMARK(BM_IouTable<true>)->Arg(128)->Arg(1024);
BENCHMARK(BM_PointsInBoxes<false>)->Arg(128);
BENCHMARK(BM_PointsInBoxes<true>)->Arg(128);
BENCHMARK(BM_GroupPoints<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_GroupPoints<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_Nms<false>)->Arg(1024);
BENCHMARK(BM_Nms<true>)->Arg(1024);

BENCHMARK_MAIN();
