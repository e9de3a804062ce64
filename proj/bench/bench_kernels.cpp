#include <benchmark/benchmark.h>

#include "dustnet/experiments.hpp"
#include "dustnet/simulator.hpp"

using namespace dustnet;

namespace {

Scenario bench_scenario() {
  Scenario s;
  s.seed = 7;
  s.channel.noise_rms = 1e-3;
  for (int i = 0; i < 8; ++i) {
    ImplantSpec spec;
    spec.config.implant_id = static_cast<std::uint8_t>(i + 1);
    spec.config.n_implants = 8;
    spec.config.uplink_index = i + 1;
    s.implants.push_back(spec);
  }
  return s;
}

struct PlannedBatch {
  Simulator sim;
  std::vector<PlannedPulse> pulses;
  KernelContext ctx;

  explicit PlannedBatch(int n) : sim(bench_scenario()) {
    sim.configure();
    pulses = sim.plan_pulses(n);
    ctx.channel = sim.scenario().channel;
    ctx.sim_rate = sim.scenario().sim_rate();
    ctx.root_seed = sim.scenario().seed;
  }
};

void BM_RenderSerial(benchmark::State& state) {
  PlannedBatch b(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(render_batch_serial(b.pulses, b.ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RenderParallel(benchmark::State& state) {
  PlannedBatch b(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(render_batch_parallel(b.pulses, b.ctx));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_RenderSerial)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderParallel)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
