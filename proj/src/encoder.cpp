#include "inet/encoder.hpp"

#include <cmath>

#include "inet/init.hpp"

namespace inet {

void EncoderConfig::validate() const {
  if (growth_rate == 0 || initial_channels == 0 || bottleneck_factor == 0)
    throw ConfigError("encoder growth rate, initial channels and bottleneck factor must be positive");
  for (auto l : block_lengths)
    if (l == 0) throw ConfigError("every dense block needs at least one layer");
  if (!(compression > 0.0 && compression <= 1.0)) throw ConfigError("encoder compression must lie in (0, 1]");
  if (input_height == 0 || input_width == 0 || input_height % 32 != 0 || input_width % 32 != 0)
    throw ConfigError("encoder input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                      " must have both sides divisible by 32");
  auto c = block_output_channels();
  for (std::size_t b = 0; b < 3; ++b)
    if (static_cast<std::size_t>(std::floor(static_cast<double>(c[b]) * compression)) == 0)
      throw ConfigError("transition after block " + std::to_string(b + 1) + " compresses to zero channels");
}

std::array<std::size_t, 4> EncoderConfig::block_output_channels() const {
  std::array<std::size_t, 4> out{};
  std::size_t c = initial_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    c += block_lengths[b] * growth_rate;
    out[b] = c;
    if (b < 3) c = static_cast<std::size_t>(std::floor(static_cast<double>(c) * compression));
  }
  return out;
}

BatchNormLayer BatchNormLayer::create(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true), ops::BatchNormStats(channels)};
}

Tensor BatchNormLayer::operator()(Tape& tape, const Tensor& x, ops::NormMode mode) {
  return ops::batch_norm(tape, x, gamma, beta, stats, mode);
}

namespace {

Tensor conv_kernel(std::size_t cin, std::size_t k, std::size_t cout, std::mt19937_64& rng) {
  return glorot_uniform({cin, k, k, cout}, cin * k * k, cout * k * k, rng);
}

void collect_norm(const std::string& name, BatchNormLayer& n, std::vector<NamedTensor>& params,
                  std::vector<NamedBuffer>& buffers) {
  params.push_back({name + ".gamma", n.gamma});
  params.push_back({name + ".beta", n.beta});
  buffers.push_back({name + ".running_mean", &n.stats.mean});
  buffers.push_back({name + ".running_var", &n.stats.var});
}

}  // namespace

EncoderParams EncoderParams::create(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  EncoderParams p;
  p.config = config;
  const std::size_t g = config.growth_rate, wide = config.bottleneck_factor * config.growth_rate;
  p.stem = conv_kernel(3, 7, config.initial_channels, rng);
  p.stem_norm = BatchNormLayer::create(config.initial_channels);
  std::size_t c = config.initial_channels;
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t l = 0; l < config.block_lengths[b]; ++l) {
      DenseLayer d;
      d.norm1 = BatchNormLayer::create(c);
      d.conv1 = conv_kernel(c, 1, wide, rng);
      d.norm2 = BatchNormLayer::create(wide);
      d.conv2 = conv_kernel(wide, 3, g, rng);
      p.blocks[b].push_back(std::move(d));
      c += g;
    }
    if (b < 3) {
      std::size_t next = static_cast<std::size_t>(std::floor(static_cast<double>(c) * config.compression));
      p.transitions[b].norm = BatchNormLayer::create(c);
      p.transitions[b].conv = conv_kernel(c, 1, next, rng);
      c = next;
    }
  }
  p.final_norm = BatchNormLayer::create(c);
  return p;
}

void EncoderParams::collect(const std::string& prefix, std::vector<NamedTensor>& params,
                            std::vector<NamedBuffer>& buffers) {
  params.push_back({prefix + "stem.conv", stem});
  collect_norm(prefix + "stem.norm", stem_norm, params, buffers);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t l = 0; l < blocks[b].size(); ++l) {
      auto& d = blocks[b][l];
      std::string n = prefix + "block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1);
      collect_norm(n + ".norm1", d.norm1, params, buffers);
      params.push_back({n + ".conv1", d.conv1});
      collect_norm(n + ".norm2", d.norm2, params, buffers);
      params.push_back({n + ".conv2", d.conv2});
    }
    if (b < 3) {
      std::string n = prefix + "transition" + std::to_string(b + 1);
      collect_norm(n + ".norm", transitions[b].norm, params, buffers);
      params.push_back({n + ".conv", transitions[b].conv});
    }
  }
  collect_norm(prefix + "final.norm", final_norm, params, buffers);
}

Tensor tile_channels(const Tensor& image) {
  if (image.shape().back() != 1)
    throw DimensionError("tile_channels expects a single-channel image, got " + shape_str(image.shape()));
  Shape s = image.shape();
  s.back() = 3;
  std::vector<double> out;
  out.reserve(image.size() * 3);
  for (double v : image.data()) out.insert(out.end(), {v, v, v});
  return Tensor(std::move(s), std::move(out));
}

Tensor encode(Tape& tape, EncoderParams& p, const Tensor& image, ops::NormMode mode) {
  const auto& cfg = p.config;
  if (image.rank() != 4 || image.dim(3) != 3)
    throw DimensionError("encode expects N x H x W x 3, got " + shape_str(image.shape()));
  if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
    throw ConfigError("encoder input " + shape_str(image.shape()) + " must have H and W divisible by 32");
  if (image.dim(1) != cfg.input_height || image.dim(2) != cfg.input_width)
    throw ConfigError("encoder configured for " + std::to_string(cfg.input_height) + "x" +
                      std::to_string(cfg.input_width) + " images, got " + shape_str(image.shape()));

  Tensor x = ops::conv2d(tape, image, p.stem, 2, Padding::same);
  x = ops::relu(tape, p.stem_norm(tape, x, mode));
  x = ops::pool2d(tape, x, 3, 2, Padding::same, ops::PoolMode::max);

  for (std::size_t b = 0; b < 4; ++b) {
    for (auto& d : p.blocks[b]) {
      Tensor h = ops::relu(tape, d.norm1(tape, x, mode));
      h = ops::conv2d(tape, h, d.conv1, 1, Padding::same);
      h = ops::relu(tape, d.norm2(tape, h, mode));
      h = ops::conv2d(tape, h, d.conv2, 1, Padding::same);
      const Tensor parts[2] = {x, h};
      x = ops::concat_channels(tape, parts);
    }
    if (b < 3) {
      auto& t = p.transitions[b];
      x = ops::relu(tape, t.norm(tape, x, mode));
      x = ops::conv2d(tape, x, t.conv, 1, Padding::same);
      x = ops::pool2d(tape, x, 2, ops::PoolMode::average);
    }
  }
  return ops::relu(tape, p.final_norm(tape, x, mode));
}

}  // namespace inet
