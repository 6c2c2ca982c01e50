// Serial reference vs OpenMP ensembles, plus the per-step kernels.
// Run with OMP_NUM_THREADS set to the core count of interest.
#include "omtube/coupling.hpp"
#include "omtube/mc.hpp"
#include "omtube/sde.hpp"

#include <benchmark/benchmark.h>

using namespace omtube;
using geometry::CurveSpec;
using geometry::ManifoldModel;

namespace {

const geometry::ChartPtr& sphere_chart() {
  static const auto chart = geometry::fermi_chart(ManifoldModel::sphere(2, 1.0), CurveSpec::constant(2, 1.0, 64), 0.9);
  return chart;
}

Execution execution(const benchmark::State& st) { return st.range(0) ? Execution::parallel : Execution::serial; }

void BM_draw_increment(benchmark::State& st) {
  Vec dB(2);
  std::uint64_t k = 0;
  for (auto _ : st) {
    sde::draw_increment(1, Stream::primary, 0, k++, 0.01, dB);
    benchmark::DoNotOptimize(dB.data());
  }
}
BENCHMARK(BM_draw_increment);

void BM_sphere_step(benchmark::State& st) {
  const sde::Dynamics dyn(sde::Process::X, sphere_chart(), om::DriftField::zero(2), sphere_chart()->curve());
  Vec x(2), dB(2);
  x << 0.1, -0.05;
  dB << 1e-3, 2e-3;
  for (auto _ : st) {
    Vec y = x;
    dyn.step(0.0, y, dB, 1e-4);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_sphere_step);

// rejection ensemble of X on the unit sphere, δ = 0.5
void BM_tube_rejection(benchmark::State& st) {
  const sde::Dynamics dyn(sde::Process::X, sphere_chart(), om::DriftField::zero(2), sphere_chart()->curve());
  sde::IntegratorConfig cfg;
  cfg.T = 0.2;
  cfg.dt = 1e-3;
  cfg.delta = 0.5;
  cfg.bridge_correction = true;
  mc::EnsembleOptions opt;
  opt.n_paths = 4000;
  opt.execution = execution(st);
  for (auto _ : st) benchmark::DoNotOptimize(mc::estimate_tube_prob(dyn, cfg, opt).p_hat);
  st.SetItemsProcessed(st.iterations() * opt.n_paths * 200);
}
BENCHMARK(BM_tube_rejection)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

// resampling ensemble, δ = 0.2 (survival ~1e-7 without resampling)
void BM_tube_resampling(benchmark::State& st) {
  const sde::Dynamics dyn(sde::Process::X, sphere_chart(), om::DriftField::zero(2), sphere_chart()->curve());
  sde::IntegratorConfig cfg;
  cfg.T = 0.5;
  cfg.dt = 8e-4;
  cfg.delta = 0.2;
  cfg.bridge_correction = true;
  mc::EnsembleOptions opt;
  opt.n_paths = 4000;
  opt.conditioning = mc::Conditioning::resampling;
  opt.batches = 8;
  opt.execution = execution(st);
  for (auto _ : st) benchmark::DoNotOptimize(mc::estimate_tube_prob(dyn, cfg, opt).p_hat);
  st.SetItemsProcessed(st.iterations() * opt.n_paths * 625);
}
BENCHMARK(BM_tube_resampling)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_coupled(benchmark::State& st) {
  coupling::CouplingConfig cfg;
  cfg.T = 0.1;
  cfg.dt = 1e-4;
  cfg.delta = 0.3;
  mc::EnsembleOptions opt;
  opt.n_paths = 400;
  opt.conditioning = mc::Conditioning::resampling;
  opt.batches = 4;
  opt.execution = execution(st);
  for (auto _ : st)
    benchmark::DoNotOptimize(coupling::run_coupled(sphere_chart(), om::DriftField::zero(2), cfg, opt).result.p_hat);
  st.SetItemsProcessed(st.iterations() * opt.n_paths * 1000);
}
BENCHMARK(BM_coupled)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
