#pragma once

#include <string>
#include <vector>

#include "iac/autodiff.hpp"
#include "iac/rng.hpp"

namespace iac {

// One named piece of module state. Either a trainable parameter (var defined)
// or a persistent buffer such as running normalization statistics (buffer
// non-null). Checkpoints serialize entries in state() order, so that order is
// part of the on-disk format.
struct StateEntry {
  std::string name;
  Var var;
  Tensor* buffer = nullptr;

  bool is_param() const { return var.defined(); }
};

class Conv2d {
public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride, int padding, int dilation,
         int groups, bool with_bias, Rng& rng);

  Var forward(const Var& x) const;
  void state(const std::string& prefix, std::vector<StateEntry>& out);
  int64_t param_count() const;

  Var weight;
  Var bias;

private:
  int stride_ = 1, padding_ = 0, dilation_ = 1, groups_ = 1;
};

// Pure k×k / stride-k upsampling transpose convolution.
class ConvTranspose2d {
public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int k, Rng& rng);

  Var forward(const Var& x) const;
  void state(const std::string& prefix, std::vector<StateEntry>& out);
  int64_t param_count() const;

  Var weight;
  Var bias;

private:
  int k_ = 2;
};

class BatchNorm2d {
public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);

  // training=true uses batch statistics and updates the running ones;
  // training=false normalizes with the stored running statistics.
  Var forward(const Var& x, bool training) const;
  void state(const std::string& prefix, std::vector<StateEntry>& out);
  int64_t param_count() const;

  Var gamma;
  Var beta;
  Tensor running_mean;
  Tensor running_var;

  real momentum = 0.1;
  real eps = 1e-5;
};

// ---- helpers over state lists ---------------------------------------------

std::vector<Var> trainable_params(const std::vector<StateEntry>& entries);
int64_t count_params(const std::vector<StateEntry>& entries,
                     bool trainable_only);
void set_trainable(std::vector<StateEntry>& entries, bool trainable);
void zero_grads(const std::vector<StateEntry>& entries);

}  // namespace iac
