// Serial reference vs OpenMP kernels. The second benchmark argument selects
// the path (0 = serial, 1 = parallel); results are identical either way, only
// the wall time differs.

#include <benchmark/benchmark.h>

#include <vector>

#include "stictaf/evaluation.hpp"
#include "stictaf/tail_estimator.hpp"
#include "stictaf/targets.hpp"
#include "stictaf/vi_engine.hpp"

using namespace stictaf;

namespace {

StictafModel bench_model(int K) {
  RngStream rng(1, 0);
  FlowConfig fc;
  fc.d = 2;
  auto m = StictafModel::initialize(K, fc, rng);
  for (int k = 0; k < K; ++k) m.base.mu[k] = {2.0 * rng.normal(), 2.0 * rng.normal()};
  for (auto& p : m.backbone.params()) p += 0.02 * rng.normal();
  return m;
}

void BM_WeightedElbo(benchmark::State& state) {
  const auto m = bench_model(static_cast<int>(state.range(0)));
  const ComplexMixtureTarget target;
  ElboOptions opt;
  opt.parallel = state.range(1) != 0;
  const RngStream stream(2, 0);
  for (auto _ : state) benchmark::DoNotOptimize(weighted_elbo(m, target, opt, stream).value);
}
BENCHMARK(BM_WeightedElbo)->ArgsProduct({{5, 20}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_BuildTable(benchmark::State& state) {
  const NigTarget target;
  std::vector<ComponentAnchor> anchors;
  for (int k = 0; k < 8; ++k) anchors.push_back({k, 0.1, {0.1 * k, 0.5}, {1.0, 0.3}});
  TailSettings settings;
  settings.n = static_cast<std::size_t>(state.range(0));
  const auto logp = target.as_function();
  const RngStream stream(3, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(build_table(logp, anchors, settings, 1e-2, stream, state.range(1) != 0).entries.size());
}
BENCHMARK(BM_BuildTable)->ArgsProduct({{20000, 200000}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  const auto m = bench_model(20);
  const RngStream stream(4, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(sample(m, static_cast<std::size_t>(state.range(0)), stream, state.range(1) != 0).x.size());
}
BENCHMARK(BM_Sample)->ArgsProduct({{10000}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_ForwardKl(benchmark::State& state) {
  const auto m = bench_model(20);
  const ComplexMixtureTarget target;
  const RngStream stream(5, 0);
  for (auto _ : state) benchmark::DoNotOptimize(forward_kl(target, m, 1000, stream, state.range(0) != 0).value);
}
BENCHMARK(BM_ForwardKl)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
