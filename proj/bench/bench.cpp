// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "rsd/sim.hpp"
#include "rsd/tail_check.hpp"

using namespace rsd;

namespace {

ConstraintSet ellipsoid(int d) {
  VectorXd a(d);
  for (int j = 0; j < d; ++j) a(j) = 1.0 / std::sqrt(j + 1.0);
  return ConstraintSet::ellipsoid(a);
}

void BM_WidthProfileSerial(benchmark::State& st) {
  const auto k = ellipsoid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(width_profile_serial(k));
}

void BM_WidthProfileParallel(benchmark::State& st) {
  const auto k = ellipsoid(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(width_profile(k));
}

void error_rates(benchmark::State& st, bool parallel) {
  const auto k = ellipsoid(8);
  const auto profile = width_profile(k);
  DetectConfig cfg;
  cfg.n = 200;
  cfg.d = 8;
  cfg.epsilon = 0.05;
  cfg.constraint = k;
  AdversarySpec adv;
  adv.strategy = AdversaryStrategy::AntiFilter;
  adv.epsilon = 0.05;
  const std::vector<VectorXd> mus{VectorXd::Zero(8)};
  for (auto _ : st)
    benchmark::DoNotOptimize(
        estimate_error_rates(cfg, profile, adv, mus, static_cast<int>(st.range(0)), 1, RunOptions{parallel}));
}

void BM_ErrorRatesSerial(benchmark::State& st) { error_rates(st, false); }
void BM_ErrorRatesParallel(benchmark::State& st) { error_rates(st, true); }

void tail(benchmark::State& st, bool parallel) {
  TailParams p;
  p.d = 40;
  p.parallel = parallel;
  for (auto _ : st) benchmark::DoNotOptimize(empirical_tail_check(TailLemma::OpNormCov, p, 1000, 1));
}

void BM_TailCheckSerial(benchmark::State& st) { tail(st, false); }
void BM_TailCheckParallel(benchmark::State& st) { tail(st, true); }

}  // namespace

BENCHMARK(BM_WidthProfileSerial)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WidthProfileParallel)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ErrorRatesSerial)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ErrorRatesParallel)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TailCheckSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TailCheckParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
