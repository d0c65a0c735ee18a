// Serial reference kernels: direct transcriptions of the index formulas with no
// blocking, gathering or parallelism.

#include "inet/kernels.hpp"

#include <algorithm>

namespace inet::kernels::reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * b[i * n + j];
      c[p * n + j] = s;
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < n; ++q) s += a[i * n + q] * b[j * n + q];
      c[i * k + j] = s;
    }
}

namespace {
// Input coordinate read by output position `o` through kernel tap `t`, or -1 in
// the padding.
long tap(std::size_t o, std::size_t t, std::size_t stride, std::size_t pad, std::size_t extent) {
  long v = static_cast<long>(o * stride + t) - static_cast<long>(pad);
  return (v < 0 || v >= static_cast<long>(extent)) ? -1 : v;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> ker,
                    std::span<double> out) {
  const std::size_t K = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          double s = 0.0;
          for (std::size_t kh = 0; kh < K; ++kh)
            for (std::size_t kw = 0; kw < K; ++kw) {
              long iy = tap(oy, kh, g.stride, g.pad_top, g.in_h);
              long ix = tap(ox, kw, g.stride, g.pad_left, g.in_w);
              if (iy < 0 || ix < 0) continue;
              for (std::size_t ci = 0; ci < g.in_c; ++ci)
                s += in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] *
                     ker[((ci * K + kh) * K + kw) * g.out_c + co];
            }
          out[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = s;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out, std::span<const double> ker,
                           std::span<double> grad_in) {
  const std::size_t K = g.kernel;
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t kh = 0; kh < K; ++kh)
          for (std::size_t kw = 0; kw < K; ++kw) {
            long iy = tap(oy, kh, g.stride, g.pad_top, g.in_h);
            long ix = tap(ox, kw, g.stride, g.pad_left, g.in_w);
            if (iy < 0 || ix < 0) continue;
            for (std::size_t ci = 0; ci < g.in_c; ++ci)
              for (std::size_t co = 0; co < g.out_c; ++co)
                grad_in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] +=
                    grad_out[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co] *
                    ker[((ci * K + kh) * K + kw) * g.out_c + co];
          }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_ker) {
  const std::size_t K = g.kernel;
  std::fill(grad_ker.begin(), grad_ker.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox)
        for (std::size_t kh = 0; kh < K; ++kh)
          for (std::size_t kw = 0; kw < K; ++kw) {
            long iy = tap(oy, kh, g.stride, g.pad_top, g.in_h);
            long ix = tap(ox, kw, g.stride, g.pad_left, g.in_w);
            if (iy < 0 || ix < 0) continue;
            for (std::size_t ci = 0; ci < g.in_c; ++ci)
              for (std::size_t co = 0; co < g.out_c; ++co)
                grad_ker[((ci * K + kh) * K + kw) * g.out_c + co] +=
                    in[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + ci] *
                    grad_out[((n * g.out_h + oy) * g.out_w + ox) * g.out_c + co];
          }
}

void csr_spmm(std::span<const std::size_t> row_ptr, std::span<const std::size_t> col, std::span<const double> val,
              std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t f) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) s += val[e] * x[col[e] * f + j];
      y[r * f + j] = s;
    }
}

}  // namespace inet::kernels::reference
