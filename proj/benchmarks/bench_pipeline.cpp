#include <benchmark/benchmark.h>

#include "ecogrid/contingency.hpp"
#include "ecogrid/eco_matrix.hpp"
#include "ecogrid/eco_metrics.hpp"
#include "ecogrid/powerflow.hpp"

namespace {

const ecogrid::Network& rts() {
  static const ecogrid::Network net = ecogrid::load_case(ECOGRID_BENCH_CASE);
  return net;
}

void BM_Solve(benchmark::State& state) {
  const auto& net = rts();
  for (auto _ : state) benchmark::DoNotOptimize(ecogrid::solve(net));
}
BENCHMARK(BM_Solve);

void BM_BuildMatrix(benchmark::State& state) {
  const auto& net = rts();
  const auto sol = ecogrid::solve(net);
  const auto flow = static_cast<ecogrid::FlowType>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(ecogrid::build_eco_matrix(net, sol, flow, ecogrid::RedundancyMode::Split));
  }
}
BENCHMARK(BM_BuildMatrix)->DenseRange(0, 2);

void BM_Metrics(benchmark::State& state) {
  const auto& net = rts();
  const auto m = ecogrid::build_eco_matrix(net, ecogrid::solve(net), ecogrid::FlowType::Reactive,
                                           ecogrid::RedundancyMode::Split);
  for (auto _ : state) benchmark::DoNotOptimize(ecogrid::metrics(m));
}
BENCHMARK(BM_Metrics);

void BM_N1(benchmark::State& state) {
  const auto& net = rts();
  ecogrid::ContingencyOptions opts;
  opts.jobs = static_cast<int>(state.range(0));
  const auto classes = ecogrid::ElementClasses::parse("branch,gen");
  for (auto _ : state) benchmark::DoNotOptimize(ecogrid::survivability(net, 1, classes, opts));
}
BENCHMARK(BM_N1)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
