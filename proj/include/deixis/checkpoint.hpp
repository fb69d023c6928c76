#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "deixis/tensor.hpp"

namespace deixis {

// Flat key -> tensor container: a JSON header (format version, free-form
// metadata, name/shape/offset table) followed by little-endian float64
// payloads. Key names are the compatibility contract across versions.
struct Checkpoint {
  nlohmann::json meta() const;
  std::map<std::string, Tensor> tensors;
  std::string meta_json;  // serialized metadata block

  const Tensor& require(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace deixis
