#include "scenefit/body.hpp"
#include "scenefit/geometry.hpp"
#include "scenefit/losses.hpp"
#include "scenefit/optimize.hpp"
#include "scenefit/synth.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <random>

using namespace scenefit;

namespace {

Points random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Points p(n);
  for (Vec3& v : p) v = Vec3(u(rng), u(rng), u(rng));
  return p;
}

const synth::Fixture& fixture(int frames) {
  static std::map<int, synth::Fixture> cache;
  auto it = cache.find(frames);
  if (it == cache.end()) {
    synth::SynthConfig c;
    c.n_frames = frames;
    c.pose_sigma = 0.05;
    c.drift = Vec3(0, 0, 0.3);
    it = cache.emplace(frames, synth::make_fixture(c)).first;
  }
  return it->second;
}

void BM_NeighborIndexBuild(benchmark::State& state) {
  const Points p = random_cloud(state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(geometry::NeighborIndex(p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NeighborIndexBuild)->Arg(1000)->Arg(10000);

void BM_NearestQuery(benchmark::State& state) {
  const geometry::NeighborIndex index(random_cloud(state.range(0), 2));
  const Points queries = random_cloud(1024, 3);
  for (auto _ : state) {
    for (const Vec3& q : queries) benchmark::DoNotOptimize(index.nearest(q));
  }
  state.SetItemsProcessed(state.iterations() * queries.size());
}
BENCHMARK(BM_NearestQuery)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_Skin(benchmark::State& state) {
  const body::BodyTemplate tmpl = body::make_synthetic_template(static_cast<int>(state.range(0)), 7);
  const MotionSequence& m = fixture(30).init;
  for (auto _ : state) benchmark::DoNotOptimize(body::skin(tmpl, m, 5));
}
BENCHMARK(BM_Skin)->Arg(400)->Arg(2000)->Arg(6890);

void BM_Hpr(benchmark::State& state) {
  const synth::Fixture& f = fixture(30);
  const Points verts = body::skin(f.tmpl, f.truth, 5).vertices;
  for (auto _ : state) benchmark::DoNotOptimize(geometry::hpr(verts, f.lidar_trajectory[5], 2.0));
}
BENCHMARK(BM_Hpr);

void BM_TotalLoss(benchmark::State& state) {
  const synth::Fixture& f = fixture(30);
  losses::SequenceInputs in;
  in.tmpl = &f.tmpl;
  in.scene = &f.scene;
  in.clouds = &f.clouds;
  in.lidar_trajectory = f.lidar_trajectory;
  const auto w = optimize::OptimizerConfig::default_weights(losses::Stage::kAnnotate);
  for (auto _ : state) benchmark::DoNotOptimize(losses::total_loss(losses::Stage::kAnnotate, w, f.init, in));
}
BENCHMARK(BM_TotalLoss)->Unit(benchmark::kMillisecond);

void BM_ObjectiveGradient(benchmark::State& state) {
  const synth::Fixture& f = fixture(30);
  losses::SequenceInputs in;
  in.tmpl = &f.tmpl;
  in.scene = &f.scene;
  in.clouds = &f.clouds;
  in.lidar_trajectory = f.lidar_trajectory;
  const auto stage = static_cast<losses::Stage>(state.range(0));
  optimize::Objective obj(in, stage, optimize::OptimizerConfig::default_weights(stage), {}, f.init.beta);
  const Eigen::VectorXd x = optimize::pack(f.init);
  obj.refresh(x);
  for (auto _ : state) benchmark::DoNotOptimize(obj.gradient(x, 1e-7, optimize::FdMode::kForward));
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_ObjectiveGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
