#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "iac/tensor.hpp"

namespace iac {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Pulls this->grad into the parents' grads. Empty for leaves and for
  // nodes with no differentiable ancestry.
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
    return grad;
  }
};

}  // namespace detail

using NodePtr = std::shared_ptr<detail::Node>;

// Handle into the dynamically built computation graph. Copies are shallow;
// a graph stays alive as long as some handle to its sink does.
class Var {
public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->ensure_grad().zero(); }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  NodePtr node() const { return node_; }

private:
  NodePtr node_;
};

// Reverse sweep from a scalar root; accumulates into .grad of every node
// with differentiable ancestry. Parameter grads persist across calls until
// zeroed, so optimizers must zero_grad() between steps.
void backward(const Var& root);

// Low-level extension point: wrap a computed value as a graph node. The
// backprop callback sees the finished node and must accumulate into the
// parents' grads (use ensure_grad, and honor parent->requires_grad).
Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(detail::Node&)> backprop);

// ---- elementwise / structural ops ----------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real c);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var sum(const Var& x);  // scalar

// y = sum_i weights[i] * xs[i]; all xs share a shape, weights is rank-1.
Var weighted_sum(const std::vector<Var>& xs, const Var& weights);

// Row r of a rank-2 tensor as a rank-1 node.
Var row(const Var& m, int r);

// Softmax over a rank-1 tensor.
Var softmax(const Var& logits);

// ---- (N,C,H,W) ops --------------------------------------------------------
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding,
           int dilation, int groups);
// w shaped (Cin, Cout, k, k); stride == k (pure upsampling).
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int k,
                     int stride);
Var maxpool2d(const Var& x, int k, int stride, int padding);
// Average over the in-bounds taps only (divisor excludes padding).
Var avgpool2d(const Var& x, int k, int stride, int padding);
Var concat_channels(const std::vector<Var>& xs);
// y[:,i] = x[:,channels[i]]
Var channel_gather(const Var& x, const std::vector<int>& channels);
// Active channels (mask==1, in ascending channel order) come from `active`,
// the rest pass through from `x`.
Var channel_merge(const Var& active, const Var& x,
                  const std::vector<uint8_t>& mask);

// Batch normalization over (N,H,W) per channel. In training mode the batch
// statistics are used and running stats updated in place (side effect at
// graph-build time); in eval mode the running stats are used.
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta,
                Tensor& running_mean, Tensor& running_var, real momentum,
                real eps, bool training);

// 1 - mean over (N,C) of the eps-smoothed dice overlap. `target` is binary.
Var dice_loss(const Var& probs, const Tensor& target, real eps = 1e-6);

}  // namespace iac
