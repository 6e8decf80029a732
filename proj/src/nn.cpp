#include "iac/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace iac {
namespace {

Tensor uniform_init(std::vector<int> shape, real bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i)
    t[i] = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int k, int stride, int padding,
               int dilation, int groups, bool with_bias, Rng& rng)
    : stride_(stride), padding_(padding), dilation_(dilation), groups_(groups) {
  if (in_ch % groups != 0)
    throw std::invalid_argument("Conv2d: in_ch not divisible by groups");
  const int cig = in_ch / groups;
  const real bound = 1.0 / std::sqrt(static_cast<real>(cig) * k * k);
  weight = Var(uniform_init({out_ch, cig, k, k}, bound, rng), true);
  if (with_bias) bias = Var(uniform_init({out_ch}, bound, rng), true);
}

Var Conv2d::forward(const Var& x) const {
  return conv2d(x, weight, bias, stride_, padding_, dilation_, groups_);
}

void Conv2d::state(const std::string& prefix, std::vector<StateEntry>& out) {
  out.push_back({prefix + ".weight", weight, nullptr});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, nullptr});
}

int64_t Conv2d::param_count() const {
  return weight.value().size() + (bias.defined() ? bias.value().size() : 0);
}

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int k, Rng& rng)
    : k_(k) {
  const real bound = 1.0 / std::sqrt(static_cast<real>(out_ch) * k * k);
  weight = Var(uniform_init({in_ch, out_ch, k, k}, bound, rng), true);
  bias = Var(uniform_init({out_ch}, bound, rng), true);
}

Var ConvTranspose2d::forward(const Var& x) const {
  return conv_transpose2d(x, weight, bias, k_, k_);
}

void ConvTranspose2d::state(const std::string& prefix,
                            std::vector<StateEntry>& out) {
  out.push_back({prefix + ".weight", weight, nullptr});
  out.push_back({prefix + ".bias", bias, nullptr});
}

int64_t ConvTranspose2d::param_count() const {
  return weight.value().size() + bias.value().size();
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma = Var(Tensor::full({channels}, 1.0), true);
  beta = Var(Tensor({channels}), true);
  running_mean = Tensor({channels});
  running_var = Tensor::full({channels}, 1.0);
}

Var BatchNorm2d::forward(const Var& x, bool training) const {
  auto* self = const_cast<BatchNorm2d*>(this);
  return batchnorm2d(x, gamma, beta, self->running_mean, self->running_var,
                     momentum, eps, training);
}

void BatchNorm2d::state(const std::string& prefix,
                        std::vector<StateEntry>& out) {
  out.push_back({prefix + ".gamma", gamma, nullptr});
  out.push_back({prefix + ".beta", beta, nullptr});
  out.push_back({prefix + ".running_mean", Var(), &running_mean});
  out.push_back({prefix + ".running_var", Var(), &running_var});
}

int64_t BatchNorm2d::param_count() const {
  return gamma.value().size() + beta.value().size();
}

std::vector<Var> trainable_params(const std::vector<StateEntry>& entries) {
  std::vector<Var> out;
  for (const auto& e : entries)
    if (e.is_param() && e.var.requires_grad()) out.push_back(e.var);
  return out;
}

int64_t count_params(const std::vector<StateEntry>& entries,
                     bool trainable_only) {
  int64_t n = 0;
  for (const auto& e : entries) {
    if (!e.is_param()) continue;
    if (trainable_only && !e.var.requires_grad()) continue;
    n += e.var.value().size();
  }
  return n;
}

void set_trainable(std::vector<StateEntry>& entries, bool trainable) {
  for (auto& e : entries)
    if (e.is_param()) e.var.set_requires_grad(trainable);
}

void zero_grads(const std::vector<StateEntry>& entries) {
  for (const auto& e : entries)
    if (e.is_param()) {
      Var v = e.var;
      v.zero_grad();
    }
}

}  // namespace iac
