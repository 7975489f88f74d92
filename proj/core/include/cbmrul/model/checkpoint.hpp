#pragma once

#include <filesystem>
#include <string>

#include "cbmrul/model/model.hpp"

namespace cbmrul::model {

// Checkpoint layout (all integers little-endian):
//   8 bytes   magic "CBMRULCK"
//   u32       format version (1)
//   u64       header length H
//   H bytes   JSON header: model config, concept names, scaler mode and a
//             tensor index [{name, shape, offset}] (offsets in doubles)
//   ...       raw IEEE-754 binary64 payload for every indexed tensor
// Parameters, scaler statistics and the loss history are all stored in the
// binary payload, so save -> load -> save reproduces identical bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace cbmrul::model
