#include <benchmark/benchmark.h>

#include "qti/design.hpp"
#include "qti/epg.hpp"
#include "qti/inference.hpp"
#include "qti/recon.hpp"

using namespace qti;

static void BM_SimulateTransient(benchmark::State &state) {
  DesignTemplate t;
  t.repetitions = state.range(0);
  SequenceDesign const d = t.with_ramp(7.0, 70.0);
  TissueParams const p{1450.0, 85.0, 1.0, 0.0};
  for (auto _ : state) { benchmark::DoNotOptimize(simulate_transient(d, p)); }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SimulateTransient)->RangeMultiplier(2)->Range(32, 512)->Complexity();

static void BM_SimulateWithFlow(benchmark::State &state) {
  SequenceDesign const d = default_design();
  TissueParams const p{1740.0, 275.0, 1.0, static_cast<double>(state.range(0))};
  for (auto _ : state) { benchmark::DoNotOptimize(simulate_with_flow(d, p)); }
}
BENCHMARK(BM_SimulateWithFlow)->Arg(5)->Arg(80);

static void BM_EncodingNormal(benchmark::State &state) {
  Index const n = state.range(0);
  SequenceDesign const d = default_design();
  SubspaceBasis const basis = compute_basis(build_ensemble(d, default_ensemble_points()), 10);
  CoilSet const coils = make_coil_maps(n, n, 4, 1);
  SamplingMask const masks = make_masks(n, n, d.repetitions(), 8.0, 4.0, 1);
  EncodingOperator const op(basis.phi, coils.sensitivities, masks.mask);
  Cx3 c(10, n, n);
  c.setConstant(Cx(1.0, 0.5));
  for (auto _ : state) { benchmark::DoNotOptimize(op.normal(c)); }
}
BENCHMARK(BM_EncodingNormal)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_GridPosterior(benchmark::State &state) {
  SequenceDesign const d = default_design();
  GridModel const model(d, InferenceGrid::defaults());
  CxVec const x = simulate_transient(d, {1000.0, 70.0, 1.0, 0.0});
  for (auto _ : state) { benchmark::DoNotOptimize(model.posterior(x, 0.01)); }
}
BENCHMARK(BM_GridPosterior)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
