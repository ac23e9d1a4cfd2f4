#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dpl/model.hpp"
#include "json.hpp"

namespace dpl {

/// Versioned binary container: magic, format version, JSON meta block, raw
/// float64 tensor payload, FNV-1a checksum over everything after the magic.
/// Loading verifies magic, version, and checksum; truncation surfaces as a
/// checksum error.

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  nlohmann::ordered_json meta;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;

  const std::vector<double>& tensor(const std::string& name) const;
};

void save_checkpoint_file(const std::string& path, const nlohmann::ordered_json& meta,
                          const std::vector<ConstTensorView>& tensors);
CheckpointData load_checkpoint_file(const std::string& path);

}  // namespace dpl
