#pragma once

#include <map>
#include <string>

#include "mmtts/tensor.hpp"

namespace mmtts {

// Single-file archive: named double tensors plus the config serialized as
// key-value text. Fixed little-endian layout, so equal contents give equal
// bytes.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::string config_text;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmtts
