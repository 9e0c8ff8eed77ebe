// Serial vs OpenMP particle mutation/weighting kernels, plus a whole filter pass.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "argpois/particle_filter.hpp"
#include "argpois/simulate.hpp"

namespace {

using namespace argpois;

struct Fixture {
  ArgParams arg{16.0, 1.2, 0.5};
  pf::AffinePoissonObs obs{1, 1};
  std::vector<double> parents;
  std::vector<std::size_t> ancestors;
  std::vector<double> children;
  std::vector<double> log_w;

  explicit Fixture(std::size_t n) : parents(n, 20.0), ancestors(n), children(n), log_w(n) {
    obs.set(0, 0, 45, 10.0, 1.0);
    std::iota(ancestors.begin(), ancestors.end(), 0);
  }
};

void BM_KernelSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    pf::kernels::mutate_and_weight_serial(f.arg, f.obs, 1, 7, f.parents, f.ancestors, false, f.children, f.log_w);
    benchmark::DoNotOptimize(f.children.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KernelOpenMP(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    pf::kernels::mutate_and_weight_openmp(f.arg, f.obs, 1, 7, f.parents, f.ancestors, false, f.children, f.log_w);
    benchmark::DoNotOptimize(f.children.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void filter_pass(benchmark::State& state, pf::Backend backend) {
  const auto data = sim::simulate_dataset(sim::default_spec(3));
  pf::FilterConfig cfg;
  cfg.particles = static_cast<std::size_t>(state.range(0));
  cfg.backend = backend;
  StaticParams theta = sim::default_spec(3).theta;
  Rng rng(11);
  for (auto _ : state) {
    auto out = pf::sm_filter_local(0, data.panel, theta, data.truth, rng, cfg);
    benchmark::DoNotOptimize(out.loglik);
  }
}

void BM_FilterSerial(benchmark::State& state) { filter_pass(state, pf::Backend::serial); }
void BM_FilterOpenMP(benchmark::State& state) { filter_pass(state, pf::Backend::openmp); }

}  // namespace

BENCHMARK(BM_KernelSerial)->Arg(1000)->Arg(16000);
BENCHMARK(BM_KernelOpenMP)->Arg(1000)->Arg(16000);
BENCHMARK(BM_FilterSerial)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FilterOpenMP)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
