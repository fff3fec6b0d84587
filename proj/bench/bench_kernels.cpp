// Serial reference kernels against their OpenMP versions, plus the
// batch-parallel regions at one thread against the configured count.

#include "gsdtta/adapt.hpp"
#include "gsdtta/kernels.hpp"
#include "gsdtta/nn.hpp"
#include "gsdtta/parallel.hpp"
#include "gsdtta/pointcloud.hpp"

#include <benchmark/benchmark.h>

using namespace gsdtta;

namespace {

Points cloud(int n, std::uint64_t seed) {
  return synth_shape({static_cast<ShapeFamily>(seed % kNumFamilies), n}, seed).points();
}

void BM_KnnSerial(benchmark::State& state) {
  const Points p = cloud(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::knn(p, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
void BM_KnnOmp(benchmark::State& state) {
  const Points p = cloud(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::knn(p, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnSerial)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnOmp)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_NearestSerial(benchmark::State& state) {
  const Points a = cloud(static_cast<int>(state.range(0)), 2), b = cloud(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::nearest(a, b));
}
void BM_NearestOmp(benchmark::State& state) {
  const Points a = cloud(static_cast<int>(state.range(0)), 2), b = cloud(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::nearest(a, b));
}
BENCHMARK(BM_NearestSerial)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NearestOmp)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

// range(0) = thread count; 0 means the configured default.
void BM_BatchForward(benchmark::State& state) {
  const ClassifierState model(Architecture{}, 0);
  std::vector<Points> batch;
  for (int i = 0; i < 32; ++i) batch.push_back(cloud(1024, 10 + i));
  const int before = num_threads();
  if (state.range(0) > 0) set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(predict_all(model, batch));
  set_num_threads(before);
  state.counters["threads"] = state.range(0) > 0 ? static_cast<double>(state.range(0)) : before;
}
BENCHMARK(BM_BatchForward)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_PrepareBatch(benchmark::State& state) {
  std::vector<PointCloud> clouds;
  for (int i = 0; i < 8; ++i) clouds.push_back(synth_shape({static_cast<ShapeFamily>(i), 1024}, 20 + i));
  std::vector<const PointCloud*> ptrs;
  for (const auto& c : clouds) ptrs.push_back(&c);
  const int before = num_threads();
  if (state.range(0) > 0) set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(prepare_clouds(ptrs, AdaptConfig{}));
  set_num_threads(before);
  state.counters["threads"] = state.range(0) > 0 ? static_cast<double>(state.range(0)) : before;
}
BENCHMARK(BM_PrepareBatch)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
