#include <sstream>

#include <benchmark/benchmark.h>

#include "flavent/fitkit.hpp"
#include "flavent/io.hpp"
#include "flavent/models.hpp"
#include "flavent/pipeline.hpp"
#include "flavent/toygen.hpp"
#include "flavent/unfold.hpp"

using namespace flavent;

static AsymmetrySpectrum fixture() {
  std::istringstream in(read_file(FLAVENT_FIXTURE));
  return read_spectrum(in);
}

static void BM_SdMarginalClosed(benchmark::State& state) {
  const ModelParams p;
  double dt = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(asym_sd_marginal(dt, p));
    dt = dt > 20 ? 0 : dt + 0.01;
  }
}
BENCHMARK(BM_SdMarginalClosed);

static void BM_SdMarginalQuadrature(benchmark::State& state) {
  const ModelParams p;
  const JointAsymmetry joint = [&](double u, double dt) { return asym_sd_joint(u, u + dt, p); };
  for (auto _ : state) benchmark::DoNotOptimize(marginalize(joint, 3.7, p));
}
BENCHMARK(BM_SdMarginalQuadrature);

static void BM_PsBand(benchmark::State& state) {
  const ModelParams p;
  const bool closed = state.range(0) == 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(closed ? ps_bounds_marginal_closed(3.7, p) : ps_bounds_marginal(3.7, p));
  state.SetLabel(closed ? "series" : "quadrature");
}
BENCHMARK(BM_PsBand)->Arg(0)->Arg(1);

static void BM_FitFixture(benchmark::State& state) {
  const AsymmetrySpectrum s = fixture();
  const auto model = static_cast<FitModel>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_model(s, model, {}));
  state.SetLabel(std::string(to_string(model)));
}
BENCHMARK(BM_FitFixture)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_FitZeta(benchmark::State& state) {
  const AsymmetrySpectrum s = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(fit_zeta(s, {}));
}
BENCHMARK(BM_FitZeta)->Unit(benchmark::kMillisecond);

static void BM_Generate(benchmark::State& state) {
  GenerationRequest r;
  r.signal_events = static_cast<std::size_t>(state.range(0));
  r.backgrounds = BackgroundConfig::nominal();
  for (auto _ : state) {
    r.seed++;
    benchmark::DoNotOptimize(generate_events(r));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Generate)->Arg(8565)->Arg(100000)->Unit(benchmark::kMillisecond);

static void BM_DsvdUnfold(benchmark::State& state) {
  RunConfig cfg;
  cfg.seed = 1;
  const auto [of, sf] = build_response(generate_mc(cfg, cfg.detector, 1), cfg.binning);
  const auto raw = bin_events(generate_data(cfg, GenModel::QM, cfg.signal_events, 2), cfg.binning,
                              DtSource::Reconstructed);
  for (auto _ : state) benchmark::DoNotOptimize(dsvd_unfold(raw, of, sf, cfg.unfold));
}
BENCHMARK(BM_DsvdUnfold)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
