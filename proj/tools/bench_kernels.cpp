#include <benchmark/benchmark.h>

#include <vector>

#include "scnet/kernels.hpp"
#include "scnet/rng.hpp"

namespace {

using namespace scnet;

std::vector<double> random_vec(size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void bench_matmul(benchmark::State& state, bool parallel) {
  const int m = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  const int n = static_cast<int>(state.range(2));
  const auto a = random_vec(static_cast<size_t>(m) * k, 1);
  const auto b = random_vec(static_cast<size_t>(k) * n, 2);
  std::vector<double> c(static_cast<size_t>(m) * n);
  for (auto _ : state) {
    if (parallel)
      kernels::matmul_nn_parallel(a.data(), b.data(), c.data(), m, k, n, false);
    else
      kernels::matmul_nn_serial(a.data(), b.data(), c.data(), m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * m * k * n);
}

void bench_layer_norm(benchmark::State& state, bool parallel) {
  const int rows = static_cast<int>(state.range(0));
  const int d = static_cast<int>(state.range(1));
  const auto x = random_vec(static_cast<size_t>(rows) * d, 3);
  const auto gamma = random_vec(static_cast<size_t>(d), 4);
  const auto beta = random_vec(static_cast<size_t>(d), 5);
  std::vector<double> out(x.size()), xhat(x.size()), rstd(static_cast<size_t>(rows));
  for (auto _ : state) {
    if (parallel)
      kernels::layer_norm_rows_parallel(x.data(), gamma.data(), beta.data(),
                                        1e-6, rows, d, out.data(), xhat.data(),
                                        rstd.data());
    else
      kernels::layer_norm_rows_serial(x.data(), gamma.data(), beta.data(), 1e-6,
                                      rows, d, out.data(), xhat.data(),
                                      rstd.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(rows) * d);
}

void serial_matmul(benchmark::State& s) { bench_matmul(s, false); }
void parallel_matmul(benchmark::State& s) { bench_matmul(s, true); }
void serial_layer_norm(benchmark::State& s) { bench_layer_norm(s, false); }
void parallel_layer_norm(benchmark::State& s) { bench_layer_norm(s, true); }

BENCHMARK(serial_matmul)->Args({82, 768, 768})->Args({182, 768, 768})->Args({256, 256, 256});
BENCHMARK(parallel_matmul)->Args({82, 768, 768})->Args({182, 768, 768})->Args({256, 256, 256});
BENCHMARK(serial_layer_norm)->Args({182, 768})->Args({2048, 768});
BENCHMARK(parallel_layer_norm)->Args({182, 768})->Args({2048, 768});

}  // namespace

BENCHMARK_MAIN();
