#include "iac/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "iac/errors.hpp"

namespace iac {
namespace {

constexpr char kMagic[8] = {'I', 'A', 'C', 'C', 'K', 'P', 'T', '1'};

const Tensor& entry_tensor(const StateEntry& e) {
  return e.is_param() ? e.var.value() : *e.buffer;
}

Tensor& entry_tensor_mut(const StateEntry& e) {
  if (e.is_param()) return const_cast<Var&>(e.var).value();
  return *e.buffer;
}

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<StateEntry>& entries) {
  const WeightDigest digest = digest_state(entries);

  nlohmann::json header;
  header["config"] = config;
  header["digest"] = digest.hex();
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json b;
    b["name"] = e.name;
    b["shape"] = entry_tensor(e).shape();
    blocks.push_back(b);
  }
  header["blocks"] = blocks;
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  const uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& e : entries) {
    const auto bytes = entry_bytes_f32(e);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

namespace {

struct OpenFile {
  std::ifstream f;
  nlohmann::json header;
};

OpenFile open_checkpoint(const std::string& path) {
  OpenFile of;
  of.f.open(path, std::ios::binary);
  if (!of.f) throw ParseError("checkpoint: cannot open " + path);
  char magic[8];
  of.f.read(magic, 8);
  if (!of.f || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  of.f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!of.f || hlen == 0 || hlen > (1ull << 30))
    throw ParseError("checkpoint: bad header length in " + path);
  std::string hs(hlen, '\0');
  of.f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!of.f) throw ParseError("checkpoint: truncated header in " + path);
  try {
    of.header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint: malformed header JSON: " +
                     std::string(e.what()));
  }
  if (!of.header.contains("blocks") || !of.header["blocks"].is_array() ||
      !of.header.contains("digest"))
    throw ParseError("checkpoint: header missing 'blocks' or 'digest'");
  return of;
}

CheckpointInfo info_from_header(const nlohmann::json& header) {
  CheckpointInfo info;
  info.config = header.value("config", nlohmann::json::object());
  info.digest_hex = header["digest"].get<std::string>();
  for (const auto& b : header["blocks"]) {
    info.blocks.emplace_back(b["name"].get<std::string>(),
                             b["shape"].get<std::vector<int>>());
  }
  return info;
}

}  // namespace

CheckpointInfo read_checkpoint_header(const std::string& path) {
  return info_from_header(open_checkpoint(path).header);
}

CheckpointInfo load_checkpoint_into(const std::string& path,
                                    const std::vector<StateEntry>& entries) {
  OpenFile of = open_checkpoint(path);
  CheckpointInfo info = info_from_header(of.header);

  if (info.blocks.size() != entries.size())
    throw ParseError("checkpoint: block count " +
                     std::to_string(info.blocks.size()) +
                     " != model state count " +
                     std::to_string(entries.size()));

  uint64_t running = kFnvOffset;
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, shape] = info.blocks[i];
    const StateEntry& e = entries[i];
    Tensor& t = entry_tensor_mut(e);
    if (name != e.name)
      throw ParseError("checkpoint: block '" + name + "' where model expects '" +
                       e.name + "'");
    if (shape != t.shape())
      throw ParseError("checkpoint: shape mismatch for block '" + name + "'");
    std::vector<unsigned char> bytes(static_cast<size_t>(t.size()) * 4);
    of.f.read(reinterpret_cast<char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!of.f) throw ParseError("checkpoint: truncated block '" + name + "'");
    for (int64_t j = 0; j < t.size(); ++j) {
      float v;
      std::memcpy(&v, bytes.data() + static_cast<size_t>(j) * 4, 4);
      t[j] = static_cast<real>(v);
    }
    running = fnv1a64(e.name.data(), e.name.size(), running);
    running = fnv1a64(bytes.data(), bytes.size(), running);
  }

  WeightDigest check;
  check.global = running;
  if (check.hex() != info.digest_hex)
    throw ParseError("checkpoint: digest mismatch in " + path +
                     " (file corrupt or wrong format)");
  return info;
}

}  // namespace iac
