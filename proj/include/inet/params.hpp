#pragma once

#include <string>
#include <vector>

#include "inet/tensor.hpp"

namespace inet {

/// A trainable tensor and its stable checkpoint name.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// A non-trainable state vector (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

}  // namespace inet
