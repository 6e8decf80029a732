#include "iac/digest.hpp"

#include <cstring>

namespace iac {

uint64_t fnv1a64(const void* data, size_t n, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<unsigned char> entry_bytes_f32(const StateEntry& e) {
  const Tensor& t = e.is_param() ? e.var.value() : *e.buffer;
  std::vector<unsigned char> out(static_cast<size_t>(t.size()) * 4);
  for (int64_t i = 0; i < t.size(); ++i) {
    const float f = static_cast<float>(t[i]);
    std::memcpy(out.data() + static_cast<size_t>(i) * 4, &f, 4);
  }
  return out;
}

WeightDigest digest_state(const std::vector<StateEntry>& entries) {
  WeightDigest d;
  d.global = kFnvOffset;
  for (const auto& e : entries) {
    const auto bytes = entry_bytes_f32(e);
    const uint64_t block = fnv1a64(bytes.data(), bytes.size());
    d.blocks.emplace_back(e.name, block);
    d.global = fnv1a64(e.name.data(), e.name.size(), d.global);
    d.global = fnv1a64(bytes.data(), bytes.size(), d.global);
  }
  return d;
}

std::string WeightDigest::hex() const {
  static const char* kDigits = "0123456789abcdef";
  std::string s(16, '0');
  uint64_t v = global;
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace iac
