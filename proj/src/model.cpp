#include "inet/model.hpp"

#include <cmath>
#include <map>

#include "inet/init.hpp"

namespace inet {

void ModelConfig::validate() const {
  encoder.validate();
  if (bridge_width == 0 || features == 0 || order == 0)
    throw ConfigError("model bridge width, GCN features and Chebyshev order must be positive");
}

OutputNormalizer OutputNormalizer::fit(const std::vector<Mesh>& meshes) {
  if (meshes.empty()) throw ConfigError("cannot fit an output normalizer on zero meshes");
  const std::size_t n = meshes.front().vertex_count() * 3;
  OutputNormalizer out{std::vector<double>(n, 0.0), 1.0};
  for (const auto& m : meshes) {
    if (m.vertex_count() * 3 != n) throw DimensionError("normalizer meshes disagree in vertex count");
    auto c = m.coordinates();
    for (std::size_t i = 0; i < n; ++i) out.mean[i] += c[i];
  }
  for (auto& v : out.mean) v /= static_cast<double>(meshes.size());
  double ss = 0.0;
  for (const auto& m : meshes) {
    auto c = m.coordinates();
    for (std::size_t i = 0; i < n; ++i) ss += (c[i] - out.mean[i]) * (c[i] - out.mean[i]);
  }
  double rms = std::sqrt(ss / static_cast<double>(n * meshes.size()));
  out.scale = rms > 1e-12 ? rms : 1.0;
  return out;
}

ModelParams ModelParams::create(const ModelConfig& config, std::shared_ptr<const SamplingHierarchy> hierarchy,
                                std::mt19937_64& rng) {
  config.validate();
  if (!hierarchy || hierarchy->depth() != 4 || hierarchy->laplacians.size() != 5)
    throw ConfigError("the decoder needs a four-stage sampling hierarchy with Laplacians on every level");
  ModelParams p;
  p.config = config;
  p.hierarchy = std::move(hierarchy);
  p.encoder = EncoderParams::create(config.encoder, rng);
  const std::size_t din = config.encoder.output_features(), b = config.bridge_width, f = config.features;
  const std::size_t coarse = p.hierarchy->levels.back().vertex_count() * f;
  p.fc1_weight = glorot_uniform({din, b}, din, b, rng);
  p.fc1_bias = Tensor::zeros({b}, true);
  p.fc2_weight = glorot_uniform({b, coarse}, b, coarse, rng);
  p.fc2_bias = Tensor::zeros({coarse}, true);
  for (std::size_t i = 0; i < 4; ++i)
    p.gcn[i] = ChebConvLayer::create(f, i == 3 ? 3 : f, config.order, rng);
  p.normalizer = OutputNormalizer::identity(p.hierarchy->levels.front().vertex_count());
  return p;
}

std::vector<NamedTensor> ModelParams::parameters() {
  std::vector<NamedTensor> params;
  std::vector<NamedBuffer> buffers;
  encoder.collect("encoder.", params, buffers);
  params.push_back({"fc1.weight", fc1_weight});
  params.push_back({"fc1.bias", fc1_bias});
  params.push_back({"fc2.weight", fc2_weight});
  params.push_back({"fc2.bias", fc2_bias});
  for (std::size_t i = 0; i < 4; ++i) {
    std::string n = "gcn" + std::to_string(i + 1);
    params.push_back({n + ".theta", gcn[i].theta});
    params.push_back({n + ".bias", gcn[i].bias});
  }
  return params;
}

std::vector<NamedBuffer> ModelParams::buffers() {
  std::vector<NamedTensor> params;
  std::vector<NamedBuffer> buffers;
  encoder.collect("encoder.", params, buffers);
  buffers.push_back({"output.mean", &normalizer.mean});
  return buffers;
}

Tensor forward(Tape& tape, ModelParams& p, const Tensor& image, ops::NormMode mode, ShapeTrace* trace) {
  if (image.rank() != 3 || image.dim(2) != 1)
    throw DimensionError("forward expects an H x W x 1 image, got " + shape_str(image.shape()));
  const auto& h = *p.hierarchy;
  auto note = [trace](const char* stage, const Tensor& t) {
    if (trace) trace->stages.emplace_back(stage, t.shape());
  };

  Tensor x = tile_channels(image.reshaped({1, image.dim(0), image.dim(1), 1}));
  note("input", x);
  x = encode(tape, p.encoder, x, mode);
  note("encoder", x);
  x = ops::fully_connected(tape, x, p.fc1_weight, p.fc1_bias);
  note("fc1", x);
  x = ops::fully_connected(tape, x, p.fc2_weight, p.fc2_bias);
  note("fc2", x);
  x = ops::reshape(tape, x, {h.levels.back().vertex_count(), p.config.features});
  note("reshape", x);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t level = 3 - i;
    x = upsample(tape, h.up[level], x);
    note("upsample", x);
    x = cheb_conv(tape, p.gcn[i], h.laplacians[level], x);
    if (i < 3) x = ops::relu(tape, x);
    note("gcn", x);
  }
  return ops::scale_shift(tape, x, p.normalizer.scale, p.normalizer.mean);
}

Mesh predict_mesh(ModelParams& params, const Tensor& image, ops::NormMode mode) {
  Tape tape(false);
  Tensor v = forward(tape, params, image, mode);
  std::vector<double> flat(v.data().begin(), v.data().end());
  return params.hierarchy->levels.front().with_vertices(Mesh::to_vertices(flat));
}

ParameterReport count_parameters(ModelParams& params) {
  ParameterReport report;
  std::map<std::string, std::size_t> index;
  for (const auto& [name, t] : params.parameters()) {
    auto dot = name.rfind('.');
    std::string layer = name.substr(0, dot), leaf = name.substr(dot + 1);
    auto it = index.find(layer);
    if (it == index.end()) {
      it = index.emplace(layer, report.layers.size()).first;
      report.layers.push_back({layer});
    }
    auto& entry = report.layers[it->second];
    if (leaf == "bias" || leaf == "beta") {
      entry.biases += t.size();
      entry.bias_is_addition = layer.starts_with("gcn");
    } else {
      entry.weights += t.size();
    }
    report.total += t.size();
  }
  return report;
}

}  // namespace inet
