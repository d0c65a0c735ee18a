#pragma once

// Differentiable operations. Each op computes its result eagerly and, when the
// tape is recording and some input requires a gradient, records its backward
// rule on the tape. Image tensors are NHWC.

#include <cstddef>
#include <span>
#include <vector>

#include "inet/kernels.hpp"
#include "inet/sparse.hpp"
#include "inet/tensor.hpp"

namespace inet::ops {

enum class PoolMode { max, average };
/// train: batch statistics, running statistics updated. batch: batch
/// statistics only. infer: running statistics.
enum class NormMode { train, batch, infer };

/// Per-channel running statistics owned by a batch-norm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.9;

  explicit BatchNormStats(std::size_t channels = 0) : mean(channels, 0.0), var(channels, 1.0) {}
};

inline constexpr double kBatchNormEps = 1e-5;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, std::size_t stride, Padding padding);

/// Non-overlapping K x K pooling with stride K and no padding.
Tensor pool2d(Tape& tape, const Tensor& input, std::size_t k, PoolMode mode);
/// General window pooling. Padded cells never win a max and are excluded from
/// an average's divisor.
Tensor pool2d(Tape& tape, const Tensor& input, std::size_t k, std::size_t stride, Padding padding, PoolMode mode);

/// Normalizes over every axis except the last (channels).
Tensor batch_norm(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  NormMode mode, double eps = kBatchNormEps);

Tensor relu(Tape& tape, const Tensor& input);

/// input is N x ... and is flattened to N x Din.
Tensor fully_connected(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Concatenates along the last axis; leading axes must agree.
Tensor concat_channels(Tape& tape, std::span<const Tensor> inputs);

Tensor reshape(Tape& tape, const Tensor& input, Shape shape);

/// y = S * x for a constant sparse S and x of shape S.cols() x F.
Tensor sparse_matmul(Tape& tape, const CsrMatrix& s, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& input);
/// sum_i input[i] * weights[i] with constant weights.
Tensor weighted_sum(Tape& tape, const Tensor& input, std::span<const double> weights);
Tensor square(Tape& tape, const Tensor& input);

/// input * scale + offset, elementwise; offset is a constant of input's size.
Tensor scale_shift(Tape& tape, const Tensor& input, double scale, std::span<const double> offset);

/// mean(|pred - truth|); subgradient 0 where they are equal.
Tensor l1_loss(Tape& tape, const Tensor& pred, const Tensor& truth);

}  // namespace inet::ops
