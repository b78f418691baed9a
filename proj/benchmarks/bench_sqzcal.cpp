#include <benchmark/benchmark.h>

#include "sqzcal/calib.hpp"
#include "sqzcal/config.hpp"
#include "sqzcal/fit.hpp"
#include "sqzcal/model.hpp"
#include "sqzcal/synth.hpp"

using namespace sqzcal;

namespace {

const ModelParams kTruth = ModelParams::from_linewidth(0.975, 1.7e-3, 84e6);
const std::vector<double> kRatios{0.08, 0.339, 0.835};

void BM_ModelSpectrum(benchmark::State& state) {
  const std::vector<double> grid = linear_grid(3e6, 8e6, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model_spectrum(kTruth, 0.835, grid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelSpectrum)->Arg(501)->Arg(10001);

void BM_SynthProcess(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(process(synth_dataset(kTruth, kRatios, AnalyzerSettings{}, seed++)));
}
BENCHMARK(BM_SynthProcess)->Unit(benchmark::kMillisecond);

void BM_JointFit(benchmark::State& state) {
  const Dataset ds = process(synth_dataset(kTruth, kRatios, AnalyzerSettings{}, 3)).dataset;
  const FitProblem prob = FitProblem::from_dataset(ds);
  const FitParams init = initial_guess(prob);
  for (auto _ : state) benchmark::DoNotOptimize(fit_model(prob, init));
}
BENCHMARK(BM_JointFit)->Unit(benchmark::kMillisecond);

void BM_McPropagate(benchmark::State& state) {
  CalibrationInput in = default_config().calibration_input();
  in.mc.samples = 1'000'000;
  in.mc.threads = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mc_propagate(in));
  state.SetItemsProcessed(state.iterations() * 1'000'000);
}
BENCHMARK(BM_McPropagate)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
