#pragma once

#include <vector>

#include "iac/autodiff.hpp"

namespace iac {

class Sgd {
public:
  Sgd(std::vector<Var> params, real lr, real momentum = 0.0,
      real weight_decay = 0.0);

  void step();
  void zero_grad();
  void set_lr(real lr) { lr_ = lr; }
  real lr() const { return lr_; }

private:
  std::vector<Var> params_;
  std::vector<Tensor> velocity_;
  real lr_, momentum_, weight_decay_;
};

class Adam {
public:
  Adam(std::vector<Var> params, real lr, real beta1 = 0.9, real beta2 = 0.999,
       real eps = 1e-8);

  void step();
  void zero_grad();
  void set_lr(real lr) { lr_ = lr; }
  real lr() const { return lr_; }

private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  real lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// lr_min + (lr_max − lr_min)·((1 + cos(π·step/total))/2)^p, clamped to the
// endpoint once step reaches total_steps.
real lr_schedule_cosine_power(int64_t step, int64_t total_steps, real lr_max,
                              real lr_min, real p);

}  // namespace iac
