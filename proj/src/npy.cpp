#include "iac/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "iac/errors.hpp"

namespace iac {
namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

int64_t shape_elems(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

void npy_save(const std::string& path, const std::vector<int>& shape,
              const std::vector<float>& data) {
  if (shape_elems(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("npy_save: shape/data size mismatch for " +
                                path);
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // Pad with spaces so the total header (magic+version+len+dict+newline) is a
  // multiple of 64, per the format spec.
  size_t total = 6 + 2 + 2 + dict.size() + 1;
  const size_t pad = (64 - total % 64) % 64;
  dict += std::string(pad, ' ');
  dict += '\n';

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("npy_save: cannot open " + path);
  f.write(kMagic, 6);
  const char version[2] = {1, 0};
  f.write(version, 2);
  const uint16_t hlen = static_cast<uint16_t>(dict.size());
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * 4));
  if (!f) throw std::runtime_error("npy_save: write failed for " + path);
}

NpyArray npy_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("npy_load: cannot open " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, kMagic, 6) != 0)
    throw ParseError("npy_load: bad magic in " + path);
  char version[2];
  f.read(version, 2);
  if (!f || version[0] != 1)
    throw ParseError("npy_load: unsupported version in " + path);
  uint16_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 2);
  std::string dict(hlen, '\0');
  f.read(dict.data(), hlen);
  if (!f) throw ParseError("npy_load: truncated header in " + path);

  if (dict.find("'<f4'") == std::string::npos)
    throw ParseError("npy_load: only '<f4' arrays supported: " + path);
  if (dict.find("'fortran_order': False") == std::string::npos)
    throw ParseError("npy_load: fortran order not supported: " + path);

  const size_t lp = dict.find('(');
  const size_t rp = dict.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos)
    throw ParseError("npy_load: malformed shape in " + path);
  NpyArray arr;
  std::string tok;
  for (size_t i = lp + 1; i <= rp; ++i) {
    const char c = dict[i];
    if (c >= '0' && c <= '9') {
      tok += c;
    } else if (!tok.empty()) {
      arr.shape.push_back(std::stoi(tok));
      tok.clear();
    }
  }
  const int64_t n = shape_elems(arr.shape);
  arr.data.resize(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(arr.data.data()),
         static_cast<std::streamsize>(n * 4));
  if (!f) throw ParseError("npy_load: truncated data in " + path);
  return arr;
}

}  // namespace iac
