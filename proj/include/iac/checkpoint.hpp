#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iac/digest.hpp"

namespace iac {

// Single-file container: magic, length-prefixed JSON header (run config,
// block table, digest), then raw float32 little-endian blocks in state order.
struct CheckpointInfo {
  nlohmann::json config;
  std::string digest_hex;
  std::vector<std::pair<std::string, std::vector<int>>> blocks;
};

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<StateEntry>& entries);

CheckpointInfo read_checkpoint_header(const std::string& path);

// Loads values into matching entries; names and shapes must line up exactly.
// Returns the header for convenience. Throws ParseError on any mismatch or
// if the stored digest does not match the file contents.
CheckpointInfo load_checkpoint_into(const std::string& path,
                                    const std::vector<StateEntry>& entries);

}  // namespace iac
