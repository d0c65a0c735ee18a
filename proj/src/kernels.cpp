#include "inet/kernels.hpp"

#include <algorithm>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace inet::kernels {

using idx = std::ptrdiff_t;

void window_extent(std::size_t n, std::size_t k, std::size_t stride, Padding pad, std::size_t& out,
                   std::size_t& lead_pad) {
  if (pad == Padding::same) {
    out = (n + stride - 1) / stride;
    std::size_t needed = (out - 1) * stride + k;
    std::size_t total = needed > n ? needed - n : 0;
    lead_pad = total / 2;
  } else {
    out = n >= k ? (n - k) / stride + 1 : 0;
    lead_pad = 0;
  }
}

ConvGeometry conv_geometry(std::size_t batch, std::size_t h, std::size_t w, std::size_t cin, std::size_t k,
                           std::size_t stride, std::size_t cout, Padding pad) {
  ConvGeometry g;
  g.batch = batch;
  g.in_h = h;
  g.in_w = w;
  g.in_c = cin;
  g.kernel = k;
  g.stride = stride;
  g.out_c = cout;
  window_extent(h, k, stride, pad, g.out_h, g.pad_top);
  window_extent(w, k, stride, pad, g.out_w, g.pad_left);
  return g;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    double* ci = c.data() + i * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(k); ++p) {
    double* cp = c.data() + p * n;
    std::fill(cp, cp + n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* bi = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t n, std::size_t k) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    const double* ai = a.data() + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const double* bj = b.data() + j * n;
      double s = 0.0;
      for (std::size_t q = 0; q < n; ++q) s += ai[q] * bj[q];
      c[i * k + j] = s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> ker,
                    std::span<double> out) {
  const idx pixels = static_cast<idx>(g.batch * g.out_h * g.out_w);
  const std::size_t K = g.kernel, cin = g.in_c, cout = g.out_c;
#pragma omp parallel for schedule(static)
  for (idx pix = 0; pix < pixels; ++pix) {
    const std::size_t n = pix / (g.out_h * g.out_w);
    const std::size_t oy = (pix / g.out_w) % g.out_h;
    const std::size_t ox = pix % g.out_w;
    double* o = out.data() + pix * cout;
    std::fill(o, o + cout, 0.0);
    for (std::size_t kh = 0; kh < K; ++kh) {
      const idx iy = static_cast<idx>(oy * g.stride + kh) - static_cast<idx>(g.pad_top);
      if (iy < 0 || iy >= static_cast<idx>(g.in_h)) continue;
      for (std::size_t kw = 0; kw < K; ++kw) {
        const idx ix = static_cast<idx>(ox * g.stride + kw) - static_cast<idx>(g.pad_left);
        if (ix < 0 || ix >= static_cast<idx>(g.in_w)) continue;
        const double* ip = in.data() + ((n * g.in_h + iy) * g.in_w + ix) * cin;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double a = ip[ci];
          const double* kp = ker.data() + ((ci * K + kh) * K + kw) * cout;
          for (std::size_t co = 0; co < cout; ++co) o[co] += a * kp[co];
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out, std::span<const double> ker,
                           std::span<double> grad_in) {
  const idx pixels = static_cast<idx>(g.batch * g.in_h * g.in_w);
  const std::size_t K = g.kernel, cin = g.in_c, cout = g.out_c;
  const idx S = static_cast<idx>(g.stride);
#pragma omp parallel for schedule(static)
  for (idx ipix = 0; ipix < pixels; ++ipix) {
    const std::size_t n = ipix / (g.in_h * g.in_w);
    const idx iy = static_cast<idx>((ipix / g.in_w) % g.in_h);
    const idx ix = static_cast<idx>(ipix % g.in_w);
    double* gi = grad_in.data() + ipix * cin;
    std::fill(gi, gi + cin, 0.0);
    for (std::size_t kh = 0; kh < K; ++kh) {
      const idx ty = iy + static_cast<idx>(g.pad_top) - static_cast<idx>(kh);
      if (ty < 0 || ty % S != 0 || ty / S >= static_cast<idx>(g.out_h)) continue;
      const std::size_t oy = ty / S;
      for (std::size_t kw = 0; kw < K; ++kw) {
        const idx tx = ix + static_cast<idx>(g.pad_left) - static_cast<idx>(kw);
        if (tx < 0 || tx % S != 0 || tx / S >= static_cast<idx>(g.out_w)) continue;
        const std::size_t ox = tx / S;
        const double* go = grad_out.data() + ((n * g.out_h + oy) * g.out_w + ox) * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* kp = ker.data() + ((ci * K + kh) * K + kw) * cout;
          double s = 0.0;
          for (std::size_t co = 0; co < cout; ++co) s += go[co] * kp[co];
          gi[ci] += s;
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in, std::span<const double> grad_out,
                            std::span<double> grad_ker) {
  const std::size_t K = g.kernel, cin = g.in_c, cout = g.out_c;
  const idx rows = static_cast<idx>(cin * K * K);
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < rows; ++r) {
    const std::size_t ci = r / (K * K);
    const std::size_t kh = (r / K) % K;
    const std::size_t kw = r % K;
    double* gk = grad_ker.data() + r * cout;
    std::fill(gk, gk + cout, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const idx iy = static_cast<idx>(oy * g.stride + kh) - static_cast<idx>(g.pad_top);
        if (iy < 0 || iy >= static_cast<idx>(g.in_h)) continue;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const idx ix = static_cast<idx>(ox * g.stride + kw) - static_cast<idx>(g.pad_left);
          if (ix < 0 || ix >= static_cast<idx>(g.in_w)) continue;
          const double a = in[((n * g.in_h + iy) * g.in_w + ix) * cin + ci];
          const double* go = grad_out.data() + ((n * g.out_h + oy) * g.out_w + ox) * cout;
          for (std::size_t co = 0; co < cout; ++co) gk[co] += a * go[co];
        }
      }
    }
  }
}

void csr_spmm(std::span<const std::size_t> row_ptr, std::span<const std::size_t> col, std::span<const double> val,
              std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t f) {
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    double* yr = y.data() + r * f;
    std::fill(yr, yr + f, 0.0);
    for (std::size_t e = row_ptr[r]; e < row_ptr[r + 1]; ++e) {
      const double v = val[e];
      const double* xr = x.data() + col[e] * f;
      for (std::size_t j = 0; j < f; ++j) yr[j] += v * xr[j];
    }
  }
}

}  // namespace inet::kernels
