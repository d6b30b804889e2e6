#pragma once

#include <cstdint>
#include <string>

#include "monet/tensor.hpp"

namespace monet {

using ParamId = std::uint32_t;

/// A trainable tensor with a stable identity used to key gradients and optimizer state.
struct Param {
  ParamId id = 0;
  DenseTensor value;
};

struct NamedParam {
  std::string name;
  Param* param;
};

struct ConstNamedParam {
  std::string name;
  const Param* param;
};

}  // namespace monet
