#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sakd/dpp_select.hpp"
#include "sakd/linalg.hpp"

namespace {

sakd::FeatureMatrix random_features(std::size_t n, std::size_t d) {
  std::mt19937_64 g(n * 31 + d);
  std::normal_distribution<double> nd;
  sakd::FeatureMatrix f(n, d);
  for (double& x : f.data()) x = nd(g);
  return f;
}

std::vector<double> random_zetas(std::size_t n) {
  std::mt19937_64 g(n);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  std::vector<double> z(n);
  for (double& x : z) x = u(g);
  return z;
}

void BM_build_kernel(benchmark::State& st) {
  const auto f = random_features(static_cast<std::size_t>(st.range(0)), 64);
  for (auto _ : st) benchmark::DoNotOptimize(sakd::build_kernel(f, 1e-6));
}

void BM_build_kernel_serial(benchmark::State& st) {
  const auto f = random_features(static_cast<std::size_t>(st.range(0)), 64);
  for (auto _ : st) benchmark::DoNotOptimize(sakd::build_kernel_serial(f, 1e-6));
}

void BM_greedy_select(benchmark::State& st) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  const auto k = sakd::build_kernel(random_features(n, 64), 1e-6);
  const auto z = random_zetas(n);
  for (auto _ : st) benchmark::DoNotOptimize(sakd::greedy_select(k, z, 0.5, n / 10));
}

void BM_greedy_select_reference(benchmark::State& st) {
  const std::size_t n = static_cast<std::size_t>(st.range(0));
  const auto k = sakd::build_kernel(random_features(n, 64), 1e-6);
  const auto z = random_zetas(n);
  for (auto _ : st) benchmark::DoNotOptimize(sakd::greedy_select_reference(k, z, 0.5, n / 10));
}

}  // namespace

BENCHMARK(BM_build_kernel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_kernel_serial)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_greedy_select)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_greedy_select_reference)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
