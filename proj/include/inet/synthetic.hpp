#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "inet/mesh.hpp"
#include "inet/tensor.hpp"
#include "inet/training.hpp"

namespace inet {

/// A periodic deformation of an icosphere. At phase p = 2 pi t / T a base
/// vertex x with direction u becomes
///   x * (1 + bulge * cos(p) * Y20(u)) scaled per axis by 1 + scale[i] * sin(p)
/// with Y20(u) = (3 u_z^2 - 1) / 2, plus Gaussian noise seeded by (seed, t mod T).
/// Frames t = T/4 and 3T/4 are the scale extremes.
struct ShapeCycleSpec {
  int subdivisions = 2;  // 162 vertices
  double radius = 20.0;  // mm
  std::size_t frames = 20;
  std::array<double, 3> scale_amplitude{0.25, 0.0, 0.0};
  double bulge_amplitude = 0.02;
  double noise_sigma = 0.05;  // mm

  std::size_t image_height = 64;
  std::size_t image_width = 64;
  double view_half_height = 32.0;  // mm covered by half the image height
  double depth_range = 32.0;       // visible z in [-depth, depth]

  static constexpr double kMaxScaleAmplitude = 0.5;
  static constexpr double kMaxBulgeAmplitude = 0.5;

  void validate() const;
  double view_half_width() const {
    return view_half_height * static_cast<double>(image_width) / static_cast<double>(image_height);
  }
};

Mesh cycle_base_mesh(const ShapeCycleSpec& spec);

/// Frame t of the cycle (any integer t; periodic in T).
Mesh cycle_frame(const ShapeCycleSpec& spec, const Mesh& base, long t, std::uint64_t seed);

std::vector<Mesh> generate_cycle(const ShapeCycleSpec& spec, std::uint64_t seed);

/// Orthographic view along -z. A pixel covered by the surface holds
/// (z_near + depth) / (2 depth) for the largest z hit; uncovered pixels are 0.
/// Row 0 is the top of the image (largest y).
Tensor render_projection(const Mesh& mesh, const ShapeCycleSpec& spec);

/// Rounds to the nearest multiple of 1 / maxval so a PGM round trip is exact.
Tensor quantize(const Tensor& image, unsigned maxval = 65535);

/// Meshes plus quantized renders, frame_index = t.
std::vector<DatasetPair> generate_dataset(const ShapeCycleSpec& spec, std::uint64_t seed);

}  // namespace inet
