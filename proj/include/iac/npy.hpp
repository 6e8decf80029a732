#pragma once

#include <string>
#include <vector>

namespace iac {

// Minimal NPY v1.0 support, '<f4' C-order arrays only.
struct NpyArray {
  std::vector<int> shape;
  std::vector<float> data;
};

void npy_save(const std::string& path, const std::vector<int>& shape,
              const std::vector<float>& data);
NpyArray npy_load(const std::string& path);  // throws ParseError with path

}  // namespace iac
