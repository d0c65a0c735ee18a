#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "inet/ops.hpp"
#include "inet/params.hpp"
#include "inet/tensor.hpp"

namespace inet {

/// Dense-block image encoder layout. The full-scale preset is DenseNet-121;
/// `desk()` is a small variant with the same topology.
struct EncoderConfig {
  std::size_t growth_rate = 8;
  std::array<std::size_t, 4> block_lengths{2, 2, 2, 2};
  std::size_t initial_channels = 16;
  double compression = 0.5;
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::size_t bottleneck_factor = 4;  // 1x1 conv width = factor * growth

  static EncoderConfig desk() { return {}; }
  static EncoderConfig densenet121(std::size_t height = 192, std::size_t width = 256) {
    return {32, {6, 12, 24, 16}, 64, 0.5, height, width, 4};
  }

  /// Throws ConfigError on an invalid layout.
  void validate() const;
  /// Channels after each dense block (4 entries).
  std::array<std::size_t, 4> block_output_channels() const;
  std::size_t output_channels() const { return block_output_channels()[3]; }
  std::size_t output_height() const { return input_height / 32; }
  std::size_t output_width() const { return input_width / 32; }
  std::size_t output_features() const { return output_channels() * output_height() * output_width(); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  ops::BatchNormStats stats;

  static BatchNormLayer create(std::size_t channels);
  Tensor operator()(Tape& tape, const Tensor& x, ops::NormMode mode);
};

struct DenseLayer {
  BatchNormLayer norm1;
  Tensor conv1;  // C x 1 x 1 x (factor * growth)
  BatchNormLayer norm2;
  Tensor conv2;  // (factor * growth) x 3 x 3 x growth
};

struct TransitionLayer {
  BatchNormLayer norm;
  Tensor conv;  // C x 1 x 1 x floor(C * compression)
};

struct EncoderParams {
  EncoderConfig config;
  Tensor stem;  // 3 x 7 x 7 x initial
  BatchNormLayer stem_norm;
  std::array<std::vector<DenseLayer>, 4> blocks;
  std::array<TransitionLayer, 3> transitions;
  BatchNormLayer final_norm;

  static EncoderParams create(const EncoderConfig& config, std::mt19937_64& rng);

  void collect(const std::string& prefix, std::vector<NamedTensor>& params, std::vector<NamedBuffer>& buffers);
};

/// H x W x 1 (or N x H x W x 1) -> same with three identical channels.
Tensor tile_channels(const Tensor& image);

/// N x H x W x 3 -> N x H/32 x W/32 x C_out. Stem: 7x7/2 conv, BN, ReLU,
/// 3x3/2 max pool; then four dense blocks with BN-ReLU-1x1 and BN-ReLU-3x3
/// pairs, three BN-ReLU-1x1 + 2x2 average-pool transitions, and a final
/// BN-ReLU. Train mode updates running statistics.
Tensor encode(Tape& tape, EncoderParams& params, const Tensor& image, ops::NormMode mode);

}  // namespace inet
