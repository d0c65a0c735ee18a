// Serial reference kernels against the OpenMP versions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "inet/kernels.hpp"

using namespace inet;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::matmul(a, b, c, n, n, n);
    else
      kernels::reference::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_conv2d_forward(benchmark::State& state) {
  auto size = static_cast<std::size_t>(state.range(0));
  auto g = kernels::conv_geometry(1, size, size, 16, 3, 1, 16, Padding::same);
  auto in = random_vector(size * size * 16, 3), ker = random_vector(16 * 9 * 16, 4);
  std::vector<double> out(g.out_h * g.out_w * g.out_c);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::conv2d_forward(g, in, ker, out);
    else
      kernels::reference::conv2d_forward(g, in, ker, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_conv2d_backward_input(benchmark::State& state) {
  auto size = static_cast<std::size_t>(state.range(0));
  auto g = kernels::conv_geometry(1, size, size, 16, 3, 2, 16, Padding::same);
  auto grad_out = random_vector(g.out_h * g.out_w * g.out_c, 5), ker = random_vector(16 * 9 * 16, 6);
  std::vector<double> grad_in(size * size * 16);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::conv2d_backward_input(g, grad_out, ker, grad_in);
    else
      kernels::reference::conv2d_backward_input(g, grad_out, ker, grad_in);
    benchmark::DoNotOptimize(grad_in.data());
  }
}

// Banded matrix with about 7 entries per row, like a mesh Laplacian.
template <bool Parallel>
void BM_csr_spmm(benchmark::State& state) {
  auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t f = 16;
  std::vector<std::size_t> row_ptr{0}, col;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t d = 0; d < 7; ++d) col.push_back((r + d * 37) % rows);
    row_ptr.push_back(col.size());
  }
  auto val = random_vector(col.size(), 7), x = random_vector(rows * f, 8);
  std::vector<double> y(rows * f);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::csr_spmm(row_ptr, col, val, x, y, rows, f);
    else
      kernels::reference::csr_spmm(row_ptr, col, val, x, y, rows, f);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_conv2d_forward<false>)->Name("conv2d_forward/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_conv2d_forward<true>)->Name("conv2d_forward/openmp")->Arg(32)->Arg(64);
BENCHMARK(BM_conv2d_backward_input<false>)->Name("conv2d_backward_input/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_conv2d_backward_input<true>)->Name("conv2d_backward_input/openmp")->Arg(32)->Arg(64);
BENCHMARK(BM_csr_spmm<false>)->Name("csr_spmm/serial")->Arg(642)->Arg(10242);
BENCHMARK(BM_csr_spmm<true>)->Name("csr_spmm/openmp")->Arg(642)->Arg(10242);

BENCHMARK_MAIN();
