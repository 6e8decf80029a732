#include "iac/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace iac {
namespace {

#if defined(__GLIBC__)
// Training churns through multi-megabyte activation buffers; without this
// glibc serves them via mmap/munmap and every reuse pays a page-fault and
// zeroing pass (measured ~30% of a fine-tune epoch in system time).
[[maybe_unused]] const bool malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  if (shape_.size() > 4) throw std::invalid_argument("Tensor: rank > 4");
  data_.assign(static_cast<size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::initializer_list<int> shape)
    : Tensor(std::vector<int>(shape)) {}

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values) {
  Tensor t(std::move(shape));
  if (t.size() != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("Tensor::from: value count mismatch");
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

Tensor Tensor::scalar(real value) {
  Tensor t(std::vector<int>{});
  t.data_.assign(1, value);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape_.size(); ++i)
    os << shape_[i] << (i + 1 < shape_.size() ? "," : "");
  os << ')';
  return os.str();
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (real v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

real Tensor::max_abs() const {
  real m = 0.0;
  for (real v : data_) m = std::max(m, std::abs(v));
  return m;
}

void Tensor::add_scaled(const Tensor& other, real scale) {
  if (!same_shape(other))
    throw std::invalid_argument("add_scaled: shape mismatch " + shape_str() +
                                " vs " + other.shape_str());
  const real* o = other.data();
  real* d = data();
  const int64_t n = size();
  for (int64_t i = 0; i < n; ++i) d[i] += scale * o[i];
}

}  // namespace iac
