#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "inet/encoder.hpp"
#include "inet/mesh.hpp"
#include "inet/params.hpp"
#include "inet/sampling.hpp"
#include "inet/spectral.hpp"

namespace inet {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t bridge_width = 8;  // fc1 output
  std::size_t features = 16;     // F, GCN channels
  std::size_t order = 3;         // K, Chebyshev terms

  void validate() const;
};

/// Per-vertex output offset and one global scale. The decoder regresses
/// (vertices - mean) / scale; unfitted models use mean 0, scale 1.
struct OutputNormalizer {
  std::vector<double> mean;  // M x 3
  double scale = 1.0;

  static OutputNormalizer identity(std::size_t vertices) { return {std::vector<double>(vertices * 3, 0.0), 1.0}; }
  /// Mean of the meshes and the RMS deviation from it (1 when degenerate).
  static OutputNormalizer fit(const std::vector<Mesh>& meshes);
};

struct ModelParams {
  ModelConfig config;
  EncoderParams encoder;
  Tensor fc1_weight, fc1_bias;  // Din x bridge, bridge
  Tensor fc2_weight, fc2_bias;  // bridge x (M4 * F), M4 * F
  std::array<ChebConvLayer, 4> gcn;  // gcn[i] runs at level 3 - i; gcn[3] maps F -> 3
  std::shared_ptr<const SamplingHierarchy> hierarchy;
  OutputNormalizer normalizer;

  static ModelParams create(const ModelConfig& config, std::shared_ptr<const SamplingHierarchy> hierarchy,
                            std::mt19937_64& rng);

  std::vector<NamedTensor> parameters();
  std::vector<NamedBuffer> buffers();
};

/// Records every intermediate shape of a forward pass.
struct ShapeTrace {
  std::vector<std::pair<std::string, Shape>> stages;
};

/// H x W x 1 image -> M x 3 vertex coordinates on the template connectivity.
Tensor forward(Tape& tape, ModelParams& params, const Tensor& image, ops::NormMode mode,
               ShapeTrace* trace = nullptr);

/// Inference helper: the predicted mesh with template connectivity.
Mesh predict_mesh(ModelParams& params, const Tensor& image, ops::NormMode mode);

struct LayerCount {
  std::string layer;
  std::size_t weights = 0;
  std::size_t biases = 0;
  bool bias_is_addition = false;  // GCN bias, absent from the filter definition
};

struct ParameterReport {
  std::vector<LayerCount> layers;
  std::size_t total = 0;
};

ParameterReport count_parameters(ModelParams& params);

}  // namespace inet
