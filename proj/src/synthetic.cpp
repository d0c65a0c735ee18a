#include "inet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace inet {

void ShapeCycleSpec::validate() const {
  if (subdivisions < 0 || subdivisions > 5) throw ConfigError("icosphere subdivisions must lie in [0, 5]");
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  if (frames == 0) throw ConfigError("a cycle needs at least one frame");
  for (double a : scale_amplitude)
    if (!(std::abs(a) <= kMaxScaleAmplitude))
      throw ConfigError("scale amplitude " + std::to_string(a) + " exceeds the bound " +
                        std::to_string(kMaxScaleAmplitude));
  if (!(std::abs(bulge_amplitude) <= kMaxBulgeAmplitude))
    throw ConfigError("bulge amplitude " + std::to_string(bulge_amplitude) + " exceeds the bound " +
                      std::to_string(kMaxBulgeAmplitude));
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
  if (image_height == 0 || image_width == 0) throw ConfigError("image size must be positive");
  if (!(view_half_height > 0.0) || !(depth_range > 0.0)) throw ConfigError("view volume must be positive");
}

Mesh cycle_base_mesh(const ShapeCycleSpec& spec) {
  spec.validate();
  return make_icosphere(spec.subdivisions, spec.radius);
}

Mesh cycle_frame(const ShapeCycleSpec& spec, const Mesh& base, long t, std::uint64_t seed) {
  const long T = static_cast<long>(spec.frames);
  const long tm = ((t % T) + T) % T;
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(tm) / static_cast<double>(T);
  const double s = std::sin(phase), c = std::cos(phase);

  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(tm));
  auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  auto gauss = [&] {
    double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };

  std::vector<Vec3> out;
  out.reserve(base.vertex_count());
  for (const auto& x : base.vertices()) {
    double n = norm(x);
    double uz = n > 0.0 ? x[2] / n : 0.0;
    double radial = 1.0 + spec.bulge_amplitude * c * 0.5 * (3.0 * uz * uz - 1.0);
    Vec3 y;
    for (int i = 0; i < 3; ++i) y[i] = x[i] * radial * (1.0 + spec.scale_amplitude[i] * s);
    if (spec.noise_sigma > 0.0)
      for (int i = 0; i < 3; ++i) y[i] += spec.noise_sigma * gauss();
    out.push_back(y);
  }
  return base.with_vertices(std::move(out));
}

std::vector<Mesh> generate_cycle(const ShapeCycleSpec& spec, std::uint64_t seed) {
  Mesh base = cycle_base_mesh(spec);
  std::vector<Mesh> frames;
  for (std::size_t t = 0; t < spec.frames; ++t) frames.push_back(cycle_frame(spec, base, static_cast<long>(t), seed));
  return frames;
}

Tensor render_projection(const Mesh& mesh, const ShapeCycleSpec& spec) {
  spec.validate();
  const double hy = spec.view_half_height, hx = spec.view_half_width(), d = spec.depth_range;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const auto& v = mesh.vertices()[i];
    if (std::abs(v[0]) > hx || std::abs(v[1]) > hy || std::abs(v[2]) > d)
      throw ConfigError("vertex " + std::to_string(i) + " lies outside the view volume");
  }
  const std::size_t H = spec.image_height, W = spec.image_width;
  const double px = 2.0 * hx / static_cast<double>(W), py = 2.0 * hy / static_cast<double>(H);
  std::vector<double> depth(H * W, -std::numeric_limits<double>::infinity());

  const auto& vs = mesh.vertices();
  for (const auto& f : mesh.faces()) {
    const Vec3 &a = vs[f[0]], &b = vs[f[1]], &c = vs[f[2]];
    double area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if (area == 0.0) continue;  // edge-on
    double xmin = std::min({a[0], b[0], c[0]}), xmax = std::max({a[0], b[0], c[0]});
    double ymin = std::min({a[1], b[1], c[1]}), ymax = std::max({a[1], b[1], c[1]});
    auto col0 = static_cast<long>(std::floor((xmin + hx) / px - 0.5)), col1 = static_cast<long>(std::ceil((xmax + hx) / px - 0.5));
    auto row0 = static_cast<long>(std::floor((hy - ymax) / py - 0.5)), row1 = static_cast<long>(std::ceil((hy - ymin) / py - 0.5));
    col0 = std::max(col0, 0L);
    row0 = std::max(row0, 0L);
    col1 = std::min(col1, static_cast<long>(W) - 1);
    row1 = std::min(row1, static_cast<long>(H) - 1);
    for (long r = row0; r <= row1; ++r)
      for (long q = col0; q <= col1; ++q) {
        double x = -hx + (static_cast<double>(q) + 0.5) * px, y = hy - (static_cast<double>(r) + 0.5) * py;
        double w0 = ((b[0] - x) * (c[1] - y) - (c[0] - x) * (b[1] - y)) / area;
        double w1 = ((c[0] - x) * (a[1] - y) - (a[0] - x) * (c[1] - y)) / area;
        double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        double z = w0 * a[2] + w1 * b[2] + w2 * c[2];
        auto& slot = depth[static_cast<std::size_t>(r) * W + static_cast<std::size_t>(q)];
        slot = std::max(slot, z);
      }
  }
  std::vector<double> img(H * W, 0.0);
  for (std::size_t i = 0; i < img.size(); ++i)
    if (std::isfinite(depth[i])) img[i] = (depth[i] + d) / (2.0 * d);
  return Tensor({H, W, 1}, std::move(img));
}

Tensor quantize(const Tensor& image, unsigned maxval) {
  if (maxval == 0) throw ConfigError("maxval must be positive");
  std::vector<double> q(image.data().begin(), image.data().end());
  const double m = maxval;
  for (auto& v : q) v = std::round(std::clamp(v, 0.0, 1.0) * m) / m;
  return Tensor(image.shape(), std::move(q));
}

std::vector<DatasetPair> generate_dataset(const ShapeCycleSpec& spec, std::uint64_t seed) {
  auto meshes = generate_cycle(spec, seed);
  std::vector<DatasetPair> out;
  for (std::size_t t = 0; t < meshes.size(); ++t)
    out.push_back({quantize(render_projection(meshes[t], spec)), meshes[t], t});
  return out;
}

}  // namespace inet
