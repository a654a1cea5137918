#include <benchmark/benchmark.h>

#include <map>
#include <sstream>

#include "ntd/dgp.hpp"
#include "ntd/event_study.hpp"
#include "ntd/inference.hpp"
#include "ntd/pipeline.hpp"

using namespace ntd;

namespace {

// Panel with `units` units per gender and group; 26 ages x 17 groups x 2 genders.
const PanelDataset& panel(int units) {
  static std::map<int, PanelDataset> cache;
  auto it = cache.find(units);
  if (it == cache.end()) {
    DgpSpec s;
    s.seed = 3;
    s.units_per_group = units;
    s.emit_covariates = false;
    it = cache.emplace(units, generate(s).data).first;
  }
  return it->second;
}

void BM_EstimateGrid(benchmark::State& state) {
  const PanelDataset& data = panel(static_cast<int>(state.range(0)));
  GridOptions opt;
  opt.threads = static_cast<unsigned>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_grid(data, opt));
  state.counters["rows"] = static_cast<double>(data.num_rows());
  state.counters["rows_per_s"] =
      benchmark::Counter(static_cast<double>(data.num_rows()) * state.iterations(), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_EstimateGrid)->Args({500, 1})->Args({2000, 1})->Args({2000, 4})->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_CellTable(benchmark::State& state) {
  const PanelDataset& data = panel(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(data.cell_table());
}
BENCHMARK(BM_CellTable)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_LoadCsv(benchmark::State& state) {
  std::ostringstream os;
  write_panel(os, panel(static_cast<int>(state.range(0))));
  const std::string text = os.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(load_panel(in));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(text.size()) * state.iterations());
}
BENCHMARK(BM_LoadCsv)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Bootstrap(benchmark::State& state) {
  const PanelDataset& data = panel(500);
  TwoByTwoSlice s = build_two_by_two(data, 27, 29);
  std::vector<EstimandId> ids(kAllEstimands.begin(), kAllEstimands.end());
  BootstrapOptions bo;
  bo.reps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cluster_bootstrap(data, s, ids, bo));
}
BENCHMARK(BM_Bootstrap)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_EventStudy(benchmark::State& state) {
  const PanelDataset& data = panel(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_event_study(data, Gender::kFemale));
}
BENCHMARK(BM_EventStudy)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
