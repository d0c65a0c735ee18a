#pragma once

// Numeric inner loops. Every kernel exists twice: an OpenMP version used by the
// ops layer, and a plain serial version in `reference` kept for testing and
// benchmarking. The parallel kernels split work over independent output
// elements and keep each element's summation order fixed, so their results do
// not depend on the thread count.

#include <cstddef>
#include <span>

namespace inet {

enum class Padding { same, valid };

namespace kernels {

struct ConvGeometry {
  std::size_t batch = 1, in_h = 0, in_w = 0, in_c = 0;
  std::size_t kernel = 1, stride = 1, out_c = 0;
  std::size_t out_h = 0, out_w = 0, pad_top = 0, pad_left = 0;
};

/// Output extent and leading pad for a window sweep. `same` gives ceil(n/stride)
/// with TF-style padding (extra pad at the bottom/right); `valid` gives
/// floor((n - k)/stride) + 1 with no padding.
void window_extent(std::size_t n, std::size_t k, std::size_t stride, Padding pad, std::size_t& out,
                   std::size_t& lead_pad);

ConvGeometry conv_geometry(std::size_t batch, std::size_t h, std::size_t w, std::size_t cin, std::size_t k,
                           std::size_t stride, std::size_t cout, Padding pad);

int max_threads();
void set_threads(int n);

// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
// c[k x n] = a[m x k]^T * b[m x n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
// c[m x k] = a[m x n] * b[k x n]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t n, std::size_t k);

// NHWC input, Cin x K x K x Cout kernel, NHWC output. Outputs are overwritten.
void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> ker,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out, std::span<const double> ker,
                           std::span<double> grad_in);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_ker);

// y[rows x f] = S * x, S in compressed-row form.
void csr_spmm(std::span<const std::size_t> row_ptr, std::span<const std::size_t> col, std::span<const double> val,
              std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t f);

namespace reference {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t n, std::size_t k);
void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> ker,
                    std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out, std::span<const double> ker,
                           std::span<double> grad_in);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_ker);
void csr_spmm(std::span<const std::size_t> row_ptr, std::span<const std::size_t> col, std::span<const double> val,
              std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t f);
}  // namespace reference

}  // namespace kernels
}  // namespace inet
