// Serial reference vs OpenMP kernels. Threads come from HOFMAT_THREADS or the
// OpenMP default.

#include <benchmark/benchmark.h>

#include "hofmat/assembly.hpp"
#include "hofmat/spectral.hpp"

using namespace hofmat;

namespace {

TruncationParams bench_params(int r) {
  TruncationParams p;
  p.lattice_radius = r;
  p.band_cut = 2;
  p.fourier_cutoff = 1;
  p.space_quad = 8;
  return p;
}

const Symbol& symbol() {
  static const Symbol s = gaussian_xi(2, 1.0, 32);
  return s;
}

void BM_assemble_serial(benchmark::State& state) {
  const TruncationParams p = bench_params(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(assemble_serial(symbol(), MagneticField::unit_2d(), 0.5, p));
}

void BM_assemble_parallel(benchmark::State& state) {
  const TruncationParams p = bench_params(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(assemble(symbol(), MagneticField::unit_2d(), 0.5, p));
}

SpectrumAt harper_at(int r) {
  return [r](double b) {
    SpectrumResult s = eigenvalues_hermitian(peierls_matrix(harper(2).hopping().hops, MagneticField::unit_2d(), b, r));
    s.b = b;
    return s;
  };
}

std::vector<double> grid(int n) {
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = 6.0 * i / (n - 1);
  return g;
}

void BM_sweep_serial(benchmark::State& state) {
  const auto g = grid(16);
  const SpectrumAt at = harper_at(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sweep_serial(g, at));
}

void BM_sweep_parallel(benchmark::State& state) {
  const auto g = grid(16);
  const SpectrumAt at = harper_at(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sweep(g, at));
}

}  // namespace

BENCHMARK(BM_assemble_serial)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_assemble_parallel)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_serial)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep_parallel)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
