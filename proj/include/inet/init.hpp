#pragma once

#include <cmath>
#include <random>

#include "inet/tensor.hpp"

namespace inet {

/// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))], gradient-tracked.
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(shape_numel(shape));
  // Map raw 53-bit draws ourselves so values do not depend on the standard
  // library's distribution implementation.
  for (auto& v : data) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * limit;
  }
  return Tensor(std::move(shape), std::move(data), true);
}

}  // namespace inet
