#include "iac/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace iac {

Sgd::Sgd(std::vector<Var> params, real lr, real momentum, real weight_decay)
    : params_(std::move(params)),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  if (momentum_ != 0.0)
    for (const auto& p : params_) velocity_.emplace_back(p.value().shape());
}

void Sgd::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    Tensor& g = p.mutable_grad();
    if (weight_decay_ != 0.0) g.add_scaled(p.value(), weight_decay_);
    if (momentum_ != 0.0) {
      Tensor& v = velocity_[i];
      for (int64_t j = 0; j < v.size(); ++j)
        v[j] = momentum_ * v[j] + g[j];
      p.value().add_scaled(v, -lr_);
    } else {
      p.value().add_scaled(g, -lr_);
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<Var> params, real lr, real beta1, real beta2, real eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value().shape());
    v_.emplace_back(p.value().shape());
  }
}

void Adam::step() {
  ++t_;
  const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_));
  const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    const Tensor& g = p.mutable_grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    real* pd = p.value().data();
    for (int64_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const real mhat = m[j] / bc1;
      const real vhat = v[j] / bc2;
      pd[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

real lr_schedule_cosine_power(int64_t step, int64_t total_steps, real lr_max,
                              real lr_min, real p) {
  if (total_steps <= 0) throw std::invalid_argument("schedule: total_steps <= 0");
  if (step < 0) throw std::invalid_argument("schedule: negative step");
  if (step >= total_steps) return lr_min;
  const real x = static_cast<real>(step) / static_cast<real>(total_steps);
  const real base = (1.0 + std::cos(std::numbers::pi_v<real> * x)) / 2.0;
  return lr_min + (lr_max - lr_min) * std::pow(base, p);
}

}  // namespace iac
