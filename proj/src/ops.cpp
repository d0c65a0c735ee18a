#include "inet/ops.hpp"

#include <cmath>
#include <string>

namespace inet::ops {
namespace {

void accumulate(Tensor t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto buf = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void require_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r)
    throw DimensionError(std::string(what) + " expects a rank-" + std::to_string(r) + " tensor, got " +
                         shape_str(t.shape()));
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> c(m * n);
  kernels::matmul(a.data(), b.data(), c, m, k, n);
  Tensor out({m, n}, std::move(c));
  if (tape.should_record({&a, &b})) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        std::vector<double> ga(m * k);
        kernels::matmul_nt(g, b.data(), ga, m, n, k);
        accumulate(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(k * n);
        kernels::matmul_tn(a.data(), g, gb, m, k, n);
        accumulate(b, gb);
      }
    });
  }
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, std::size_t stride, Padding padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (kernel.dim(1) != kernel.dim(2))
    throw DimensionError("conv2d kernel must be square, got " + shape_str(kernel.shape()));
  if (kernel.dim(0) != input.dim(3))
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) + " does not match input channels of " +
                         shape_str(input.shape()));
  if (stride == 0) throw DimensionError("conv2d stride must be >= 1");
  auto g = kernels::conv_geometry(input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(1), stride,
                                  kernel.dim(3), padding);
  if (g.out_h == 0 || g.out_w == 0)
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) + " larger than input " +
                         shape_str(input.shape()) + " under valid padding");
  std::vector<double> y(g.batch * g.out_h * g.out_w * g.out_c);
  kernels::conv2d_forward(g, input.data(), kernel.data(), y);
  Tensor out({g.batch, g.out_h, g.out_w, g.out_c}, std::move(y));
  if (tape.should_record({&input, &kernel})) {
    tape.record(out, [input, kernel, out, g]() mutable {
      if (input.requires_grad()) {
        std::vector<double> gi(input.size());
        kernels::conv2d_backward_input(g, out.grad(), kernel.data(), gi);
        accumulate(input, gi);
      }
      if (kernel.requires_grad()) {
        std::vector<double> gk(kernel.size());
        kernels::conv2d_backward_kernel(g, input.data(), out.grad(), gk);
        accumulate(kernel, gk);
      }
    });
  }
  return out;
}

Tensor pool2d(Tape& tape, const Tensor& input, std::size_t k, PoolMode mode) {
  return pool2d(tape, input, k, k, Padding::valid, mode);
}

Tensor pool2d(Tape& tape, const Tensor& input, std::size_t k, std::size_t stride, Padding padding, PoolMode mode) {
  require_rank(input, 4, "pool2d");
  if (k == 0 || stride == 0) throw DimensionError("pool2d kernel and stride must be >= 1");
  if (k > input.dim(1) || k > input.dim(2))
    throw DimensionError("pool2d kernel " + std::to_string(k) + " exceeds input " + shape_str(input.shape()));
  auto g = kernels::conv_geometry(input.dim(0), input.dim(1), input.dim(2), input.dim(3), k, stride,
                                  input.dim(3), padding);
  const std::size_t C = g.in_c;
  const std::size_t out_n = g.batch * g.out_h * g.out_w * C;
  std::vector<double> y(out_n);
  // For max: flat input index of the winner. For average: number of real cells.
  std::vector<std::size_t> aux(out_n);
  auto x = input.data();
  const long ph = static_cast<long>(g.pad_top), pw = static_cast<long>(g.pad_left);

#pragma omp parallel for schedule(static)
  for (long pix = 0; pix < static_cast<long>(g.batch * g.out_h * g.out_w); ++pix) {
    const std::size_t n = pix / (g.out_h * g.out_w);
    const std::size_t oy = (pix / g.out_w) % g.out_h;
    const std::size_t ox = pix % g.out_w;
    for (std::size_t c = 0; c < C; ++c) {
      double best = 0.0, acc = 0.0;
      std::size_t arg = 0, count = 0;
      for (std::size_t kh = 0; kh < k; ++kh) {
        long iy = static_cast<long>(oy * stride + kh) - ph;
        if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
        for (std::size_t kw = 0; kw < k; ++kw) {
          long ix = static_cast<long>(ox * stride + kw) - pw;
          if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
          std::size_t at = ((n * g.in_h + iy) * g.in_w + ix) * C + c;
          double v = x[at];
          // Strict comparison: the first cell in row-major scan wins ties.
          if (count == 0 || v > best) {
            best = v;
            arg = at;
          }
          acc += v;
          ++count;
        }
      }
      std::size_t o = pix * C + c;
      if (mode == PoolMode::max) {
        y[o] = best;
        aux[o] = arg;
      } else {
        y[o] = acc / static_cast<double>(count);
        aux[o] = count;
      }
    }
  }

  Tensor out({g.batch, g.out_h, g.out_w, C}, std::move(y));
  if (tape.should_record({&input})) {
    tape.record(out, [input, out, g, k, stride, mode, aux = std::move(aux)]() mutable {
      auto go = out.grad();
      std::vector<double> gi(input.size(), 0.0);
      const std::size_t C = g.in_c;
      if (mode == PoolMode::max) {
        for (std::size_t o = 0; o < go.size(); ++o) gi[aux[o]] += go[o];
      } else {
        const long ph = static_cast<long>(g.pad_top), pw = static_cast<long>(g.pad_left);
        for (std::size_t pix = 0; pix < g.batch * g.out_h * g.out_w; ++pix) {
          const std::size_t n = pix / (g.out_h * g.out_w);
          const std::size_t oy = (pix / g.out_w) % g.out_h;
          const std::size_t ox = pix % g.out_w;
          for (std::size_t kh = 0; kh < k; ++kh) {
            long iy = static_cast<long>(oy * stride + kh) - ph;
            if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
            for (std::size_t kw = 0; kw < k; ++kw) {
              long ix = static_cast<long>(ox * stride + kw) - pw;
              if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
              std::size_t base = ((n * g.in_h + iy) * g.in_w + ix) * C;
              for (std::size_t c = 0; c < C; ++c) {
                std::size_t o = pix * C + c;
                gi[base + c] += go[o] / static_cast<double>(aux[o]);
              }
            }
          }
        }
      }
      accumulate(input, gi);
    });
  }
  return out;
}

Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  NormMode mode, double eps) {
  if (eps <= 0) throw DimensionError("batch_norm eps must be positive");
  const std::size_t C = input.shape().back();
  if (gamma.size() != C || beta.size() != C)
    throw DimensionError("batch_norm: gamma/beta of size " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " for " + std::to_string(C) + " channels");
  if (stats.mean.size() != C) stats = BatchNormStats(C);
  const std::size_t count = input.size() / C;
  auto x = input.data();

  std::vector<double> mean(C, 0.0), inv_std(C);
  if (mode != NormMode::infer) {
    std::vector<double> var(C, 0.0);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < C; ++c) mean[c] += x[i * C + c];
    for (auto& m : mean) m /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < C; ++c) {
        double d = x[i * C + c] - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) {
      var[c] /= static_cast<double>(count);
      inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
      if (mode != NormMode::train) continue;
      stats.mean[c] = stats.momentum * stats.mean[c] + (1.0 - stats.momentum) * mean[c];
      stats.var[c] = stats.momentum * stats.var[c] + (1.0 - stats.momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + eps);
    }
  }

  std::vector<double> xhat(input.size()), y(input.size());
  auto gm = gamma.data(), bt = beta.data();
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      double h = (x[i * C + c] - mean[c]) * inv_std[c];
      xhat[i * C + c] = h;
      y[i * C + c] = h * gm[c] + bt[c];
    }
  Tensor out(input.shape(), std::move(y));
  if (tape.should_record({&input, &gamma, &beta})) {
    tape.record(out, [input, gamma, beta, out, mode, C, count, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)]() mutable {
      auto go = out.grad();
      std::vector<double> dg(C, 0.0), db(C, 0.0);
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < C; ++c) {
          dg[c] += go[i * C + c] * xhat[i * C + c];
          db[c] += go[i * C + c];
        }
      if (input.requires_grad()) {
        auto gm = gamma.data();
        std::vector<double> dx(input.size());
        const double n = static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i)
          for (std::size_t c = 0; c < C; ++c) {
            double s = gm[c] * inv_std[c];
            if (mode != NormMode::infer)
              dx[i * C + c] = s * (go[i * C + c] - db[c] / n - xhat[i * C + c] * dg[c] / n);
            else
              dx[i * C + c] = s * go[i * C + c];
          }
        accumulate(input, dx);
      }
      accumulate(gamma, dg);
      accumulate(beta, db);
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& input) {
  auto x = input.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  Tensor out(input.shape(), std::move(y));
  if (tape.should_record({&input})) {
    tape.record(out, [input, out]() mutable {
      auto go = out.grad();
      auto x = input.data();
      std::vector<double> gi(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) gi[i] = x[i] > 0.0 ? go[i] : 0.0;
      accumulate(input, gi);
    });
  }
  return out;
}

Tensor fully_connected(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "fully_connected weight");
  const std::size_t n = input.dim(0);
  const std::size_t din = input.size() / n, dout = weight.dim(1);
  if (weight.dim(0) != din)
    throw DimensionError("fully_connected: input " + shape_str(input.shape()) + " flattens to " +
                         std::to_string(din) + " features, weight is " + shape_str(weight.shape()));
  if (bias.size() != dout)
    throw DimensionError("fully_connected: bias " + shape_str(bias.shape()) + " for " + std::to_string(dout) +
                         " outputs");
  std::vector<double> y(n * dout);
  kernels::matmul(input.data(), weight.data(), y, n, din, dout);
  auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dout; ++j) y[i * dout + j] += b[j];
  Tensor out({n, dout}, std::move(y));
  if (tape.should_record({&input, &weight, &bias})) {
    tape.record(out, [input, weight, bias, out, n, din, dout]() mutable {
      auto go = out.grad();
      if (input.requires_grad()) {
        std::vector<double> gi(n * din);
        kernels::matmul_nt(go, weight.data(), gi, n, dout, din);
        accumulate(input, gi);
      }
      if (weight.requires_grad()) {
        std::vector<double> gw(din * dout);
        kernels::matmul_tn(input.data(), go, gw, n, din, dout);
        accumulate(weight, gw);
      }
      if (bias.requires_grad()) {
        std::vector<double> gb(dout, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < dout; ++j) gb[j] += go[i * dout + j];
        accumulate(bias, gb);
      }
    });
  }
  return out;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels needs at least one input");
  Shape lead(inputs[0].shape().begin(), inputs[0].shape().end() - 1);
  std::size_t total_c = 0;
  for (const auto& t : inputs) {
    Shape l(t.shape().begin(), t.shape().end() - 1);
    if (l != lead)
      throw DimensionError("concat_channels: " + shape_str(t.shape()) + " incompatible with " +
                           shape_str(inputs[0].shape()));
    total_c += t.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> y(rows * total_c);
  std::size_t offset = 0;
  for (const auto& t : inputs) {
    const std::size_t c = t.shape().back();
    auto d = t.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r * c), c, y.begin() + static_cast<std::ptrdiff_t>(r * total_c + offset));
    offset += c;
  }
  Shape s = lead;
  s.push_back(total_c);
  Tensor out(std::move(s), std::move(y));
  if (tape.should_record(inputs)) {
    std::vector<Tensor> ins(inputs.begin(), inputs.end());
    tape.record(out, [ins, out, rows, total_c]() mutable {
      auto go = out.grad();
      std::size_t offset = 0;
      for (auto& t : ins) {
        const std::size_t c = t.shape().back();
        if (t.requires_grad()) {
          auto buf = t.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) buf[r * c + j] += go[r * total_c + offset + j];
        }
        offset += c;
      }
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& input, Shape shape) {
  Tensor out = input.reshaped(std::move(shape));
  if (tape.should_record({&input})) {
    tape.record(out, [input, out]() mutable { accumulate(input, out.grad()); });
  }
  return out;
}

Tensor sparse_matmul(Tape& tape, const CsrMatrix& s, const Tensor& x) {
  require_rank(x, 2, "sparse_matmul operand");
  if (x.dim(0) != s.cols())
    throw DimensionError("sparse_matmul: operator is " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                         ", features are " + shape_str(x.shape()));
  const std::size_t f = x.dim(1);
  Tensor out({s.rows(), f}, s.multiply(x.data(), f));
  if (tape.should_record({&x})) {
    tape.record(out, [s, x, out, f]() mutable {
      // x-gradient is S^T g, scattered row by row.
      auto go = out.grad();
      std::vector<double> gx(x.size(), 0.0);
      auto rp = s.row_ptr();
      auto ci = s.col_index();
      auto v = s.values();
      for (std::size_t r = 0; r < s.rows(); ++r)
        for (std::size_t e = rp[r]; e < rp[r + 1]; ++e)
          for (std::size_t j = 0; j < f; ++j) gx[ci[e] * f + j] += v[e] * go[r * f + j];
      accumulate(x, gx);
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& input) {
  double s = 0.0;
  for (double v : input.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.should_record({&input})) {
    tape.record(out, [input, out]() mutable {
      std::vector<double> gi(input.size(), out.grad()[0]);
      accumulate(input, gi);
    });
  }
  return out;
}

Tensor square(Tape& tape, const Tensor& input) {
  auto x = input.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
  Tensor out(input.shape(), std::move(y));
  if (tape.should_record({&input})) {
    tape.record(out, [input, out]() mutable {
      auto go = out.grad();
      auto x = input.data();
      std::vector<double> gi(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) gi[i] = 2.0 * x[i] * go[i];
      accumulate(input, gi);
    });
  }
  return out;
}

Tensor l1_loss(Tape& tape, const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw DimensionError("l1_loss: prediction " + shape_str(pred.shape()) + " vs truth " + shape_str(truth.shape()));
  auto p = pred.data(), t = truth.data();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(s / n);
  if (tape.should_record({&pred, &truth})) {
    tape.record(out, [pred, truth, out, n]() mutable {
      const double g = out.grad()[0] / n;
      auto p = pred.data(), t = truth.data();
      std::vector<double> gp(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p[i] - t[i];
        gp[i] = d > 0 ? g : (d < 0 ? -g : 0.0);
      }
      accumulate(pred, gp);
      if (truth.requires_grad()) {
        for (auto& v : gp) v = -v;
        accumulate(truth, gp);
      }
    });
  }
  return out;
}

Tensor scale_shift(Tape& tape, const Tensor& input, double scale, std::span<const double> offset) {
  if (offset.size() != input.size())
    throw DimensionError("scale_shift: offset of length " + std::to_string(offset.size()) + " for " +
                         shape_str(input.shape()));
  auto x = input.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale + offset[i];
  Tensor out(input.shape(), std::move(y));
  if (tape.should_record({&input})) {
    tape.record(out, [input, out, scale]() mutable {
      auto go = out.grad();
      std::vector<double> gi(go.size());
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] = go[i] * scale;
      accumulate(input, gi);
    });
  }
  return out;
}

Tensor weighted_sum(Tape& tape, const Tensor& input, std::span<const double> weights) {
  if (weights.size() != input.size())
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                         shape_str(input.shape()));
  auto x = input.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  Tensor out = Tensor::scalar(s);
  if (tape.should_record({&input})) {
    std::vector<double> w(weights.begin(), weights.end());
    tape.record(out, [input, out, w = std::move(w)]() mutable {
      const double g = out.grad()[0];
      std::vector<double> gi(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) gi[i] = g * w[i];
      accumulate(input, gi);
    });
  }
  return out;
}

}  // namespace inet::ops
