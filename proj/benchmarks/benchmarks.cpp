#include <benchmark/benchmark.h>

#include <complex>
#include <vector>

#include "shuttlesim/analysis.hpp"
#include "shuttlesim/dynamics.hpp"
#include "shuttlesim/fft.hpp"
#include "shuttlesim/landscape.hpp"
#include "shuttlesim/mapping.hpp"
#include "shuttlesim/rng.hpp"

using namespace shuttlesim;

namespace {

ValleyLandscape stock_landscape(uint64_t seed) {
    LandscapeConfig cfg;
    cfg.seed = seed;
    return ValleyLandscape::generate(cfg);
}

void BM_LandscapeGenerate(benchmark::State& state) {
    LandscapeConfig cfg;
    uint64_t seed = 1;
    for (auto _ : state) {
        cfg.seed = seed++;
        benchmark::DoNotOptimize(ValleyLandscape::generate(cfg));
    }
}
BENCHMARK(BM_LandscapeGenerate)->Unit(benchmark::kMillisecond);

void BM_PropagateFull(benchmark::State& state) {
    const auto land = stock_landscape(3);
    CouplingParams cp;
    ShuttleSchedule sched;
    sched.d_nm = 50.0;
    sched.tau_s_ns = 2.0 * 50.0 / 2.8;
    sched.B_T = 0.04;
    const auto init = SpinValleyState::spin_superposition_ground(land, 0.0, 0.0);
    long steps = 0;
    for (auto _ : state) {
        const auto res = propagate_full(init, sched, land, cp, 2e-3);
        steps += res.steps;
        benchmark::DoNotOptimize(res.state.rho);
    }
    state.SetItemsProcessed(steps);
}
BENCHMARK(BM_PropagateFull)->Unit(benchmark::kMillisecond);

void BM_PropagateEvents(benchmark::State& state) {
    const auto land = stock_landscape(3);
    CouplingParams cp;
    EventModelConfig ev;
    ShuttleSchedule sched;
    sched.d_nm = 280.0;
    sched.tau_s_ns = 100.0;
    sched.B_T = 0.02;
    sched.n_rep = 10;
    RandomStream rng(17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(propagate_events(sched, land, cp, ev, rng));
    }
    state.SetItemsProcessed(state.iterations() * 2 * sched.n_rep);
}
BENCHMARK(BM_PropagateEvents)->Unit(benchmark::kMicrosecond);

void BM_TelegraphMc(benchmark::State& state) {
    std::vector<double> grid;
    for (int i = 1; i <= 40; ++i) grid.push_back(0.25 * i);
    uint64_t seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(telegraph_mc(1.0, 1.0, 10000, grid, seed++));
    }
    state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_TelegraphMc)->Unit(benchmark::kMillisecond);

void BM_ScanColumn(benchmark::State& state) {
    const auto land = stock_landscape(3);
    CouplingParams cp;
    const auto Bg = default_b_grid(0.05, 0.5, 0.005);
    const std::vector<double> d{40.0, 80.0, 120.0, 160.0};
    uint64_t seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_ps_scan(land, cp, 0.0, Bg, d, 200, seed++));
    }
    state.SetItemsProcessed(state.iterations() * Bg.size() * d.size());
}
BENCHMARK(BM_ScanColumn)->Unit(benchmark::kMillisecond);

void BM_FftReal(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> v(n);
    RandomStream rng(5);
    for (auto& x : v) x = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(fft_real(v, next_pow2(v.size())));
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_FftReal)->Arg(1 << 12)->Arg(1 << 16);

} // namespace

BENCHMARK_MAIN();
