#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace iac {

using real = double;

// Dense row-major array of doubles, rank 0..4. The single numeric container
// used for activations, parameters and gradients.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::initializer_list<int> shape);

  static Tensor full(std::vector<int> shape, real value);
  static Tensor from(std::vector<int> shape, std::vector<real> values);
  static Tensor scalar(real value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // (N,C,H,W) addressing; valid for rank-4 tensors only.
  int64_t idx4(int n, int c, int h, int w) const {
    return ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }
  real& at4(int n, int c, int h, int w) { return data_[idx4(n, c, h, w)]; }
  real at4(int n, int c, int h, int w) const { return data_[idx4(n, c, h, w)]; }

  void fill(real v);
  void zero() { fill(0.0); }
  bool all_finite() const;
  real max_abs() const;

  // this += scale * other
  void add_scaled(const Tensor& other, real scale);

private:
  std::vector<int> shape_;
  std::vector<real> data_;
};

}  // namespace iac
