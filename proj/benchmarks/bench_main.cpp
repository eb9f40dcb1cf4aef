#include <benchmark/benchmark.h>

#include "symdiff/equitest.hpp"
#include "symdiff/io.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/sampler.hpp"
#include "symdiff/train.hpp"

using namespace symdiff;

namespace {

void BM_HaarSample(benchmark::State& state) {
  RngStream s(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_haar(s));
}
BENCHMARK(BM_HaarSample);

void BM_TrainStep(benchmark::State& state) {
  const NetConfig net;
  RngStream s(2);
  const ParamStore p = init_params(net, s);
  ToyDatasetSpec spec;
  spec.count = 256;
  const auto data = generate_toy_dataset(spec);
  TrainConfig cfg;
  cfg.mode = static_cast<TrainMode>(state.range(0));
  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.T);
  int step = 1;
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradient(p, net, data, cfg, sched, step++));
  state.SetLabel(to_string(cfg.mode));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

void BM_ReverseChain(benchmark::State& state) {
  const NetConfig net;
  RngStream s(3);
  const ParamStore p = init_params(net, s);
  const ReverseModel model = make_reverse_model(p, net, GammaKind::recursive);
  const NoiseSchedule sched = make_cosine_schedule(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(generate(model, 6, 1, sched, s));
}
BENCHMARK(BM_ReverseChain)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_PermutationTest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngStream s(4);
  SampleSet a(n, std::vector<double>(24)), b = a;
  for (auto* set : {&a, &b})
    for (auto& row : *set)
      for (double& v : row) v = s.normal();
  for (auto _ : state) {
    RngStream ps(5);
    benchmark::DoNotOptimize(perm_two_sample_test(a, b, 200, 0.01, ps));
  }
}
BENCHMARK(BM_PermutationTest)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
