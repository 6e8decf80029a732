#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iac/nn.hpp"

namespace iac {

inline constexpr uint64_t kFnvOffset = 14695981039346656037ull;

uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset);

// Canonical on-disk form of one state entry: float32 little-endian values in
// row-major order. Digests and checkpoints both build on this, so a
// save→load round trip preserves digests exactly.
std::vector<unsigned char> entry_bytes_f32(const StateEntry& e);

struct WeightDigest {
  uint64_t global = 0;
  std::vector<std::pair<std::string, uint64_t>> blocks;

  bool operator==(const WeightDigest& o) const { return global == o.global; }
  bool operator!=(const WeightDigest& o) const { return !(*this == o); }
  std::string hex() const;
};

WeightDigest digest_state(const std::vector<StateEntry>& entries);

}  // namespace iac
