#include "iac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace iac {

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<detail::Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(detail::Node&)> backprop) {
  Var out(std::move(value));
  bool any = false;
  for (const Var& p : parents)
    if (p.requires_grad()) any = true;
  if (any) {
    out.node()->requires_grad = true;
    for (const Var& p : parents) out.node()->parents.push_back(p.node());
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                root.value().shape_str());
  if (!root.requires_grad()) return;

  // Post-order DFS over the differentiable subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* node;
    size_t next = 0;
  };
  std::vector<Frame> stack{{root.node().get()}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " +
                                b.value().shape_str());
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_scaled(b.value(), 1.0);
  auto pa = a.node();
  auto pb = b.node();
  return make_op(std::move(out), {a, b}, [pa, pb](detail::Node& n) {
    if (pa->requires_grad) pa->ensure_grad().add_scaled(n.grad, 1.0);
    if (pb->requires_grad) pb->ensure_grad().add_scaled(n.grad, 1.0);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.add_scaled(b.value(), -1.0);
  auto pa = a.node();
  auto pb = b.node();
  return make_op(std::move(out), {a, b}, [pa, pb](detail::Node& n) {
    if (pa->requires_grad) pa->ensure_grad().add_scaled(n.grad, 1.0);
    if (pb->requires_grad) pb->ensure_grad().add_scaled(n.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.value().shape());
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node();
  auto pb = b.node();
  return make_op(std::move(out), {a, b}, [pa, pb](detail::Node& nd) {
    const int64_t m = nd.value.size();
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      for (int64_t i = 0; i < m; ++i) ga[i] += nd.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int64_t i = 0; i < m; ++i) gb[i] += nd.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, real c) {
  Tensor out(a.value().shape());
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] = c * a.value()[i];
  auto pa = a.node();
  return make_op(std::move(out), {a}, [pa, c](detail::Node& nd) {
    if (pa->requires_grad) pa->ensure_grad().add_scaled(nd.grad, c);
  });
}

Var relu(const Var& x) {
  Tensor out(x.value().shape());
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i)
    out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  auto px = x.node();
  return make_op(std::move(out), {x}, [px](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    const int64_t m = nd.value.size();
    for (int64_t i = 0; i < m; ++i)
      if (px->value[i] > 0.0) g[i] += nd.grad[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.value().shape());
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x.value()[i]));
  auto px = x.node();
  return make_op(std::move(out), {x}, [px](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    const int64_t m = nd.value.size();
    for (int64_t i = 0; i < m; ++i) {
      const real y = nd.value[i];
      g[i] += nd.grad[i] * y * (1.0 - y);
    }
  });
}

Var sum(const Var& x) {
  real acc = 0.0;
  const int64_t n = x.value().size();
  for (int64_t i = 0; i < n; ++i) acc += x.value()[i];
  auto px = x.node();
  return make_op(Tensor::scalar(acc), {x}, [px](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    const real gv = nd.grad[0];
    const int64_t m = g.size();
    for (int64_t i = 0; i < m; ++i) g[i] += gv;
  });
}

Var weighted_sum(const std::vector<Var>& xs, const Var& weights) {
  if (xs.empty()) throw std::invalid_argument("weighted_sum: empty inputs");
  if (weights.value().rank() != 1 ||
      weights.value().size() != static_cast<int64_t>(xs.size()))
    throw std::invalid_argument(
        "weighted_sum: weight count does not match input count");
  for (size_t i = 1; i < xs.size(); ++i) check_same_shape(xs[0], xs[i], "weighted_sum");

  Tensor out(xs[0].value().shape());
  for (size_t i = 0; i < xs.size(); ++i)
    out.add_scaled(xs[i].value(), weights.value()[static_cast<int64_t>(i)]);

  std::vector<Var> parents = xs;
  parents.push_back(weights);
  std::vector<NodePtr> xn;
  for (const Var& v : xs) xn.push_back(v.node());
  auto wn = weights.node();
  return make_op(std::move(out), std::move(parents),
                 [xn, wn](detail::Node& nd) {
                   for (size_t i = 0; i < xn.size(); ++i) {
                     const real wi = wn->value[static_cast<int64_t>(i)];
                     if (xn[i]->requires_grad)
                       xn[i]->ensure_grad().add_scaled(nd.grad, wi);
                   }
                   if (wn->requires_grad) {
                     Tensor& gw = wn->ensure_grad();
                     const int64_t m = nd.value.size();
                     for (size_t i = 0; i < xn.size(); ++i) {
                       real acc = 0.0;
                       const Tensor& xi = xn[i]->value;
                       for (int64_t e = 0; e < m; ++e) acc += nd.grad[e] * xi[e];
                       gw[static_cast<int64_t>(i)] += acc;
                     }
                   }
                 });
}

Var row(const Var& m, int r) {
  if (m.value().rank() != 2)
    throw std::invalid_argument("row: expected rank-2 tensor");
  const int cols = m.value().dim(1);
  if (r < 0 || r >= m.value().dim(0))
    throw std::invalid_argument("row: index out of range");
  Tensor out({cols});
  for (int c = 0; c < cols; ++c)
    out[c] = m.value()[static_cast<int64_t>(r) * cols + c];
  auto pm = m.node();
  return make_op(std::move(out), {m}, [pm, r, cols](detail::Node& nd) {
    if (!pm->requires_grad) return;
    Tensor& g = pm->ensure_grad();
    for (int c = 0; c < cols; ++c)
      g[static_cast<int64_t>(r) * cols + c] += nd.grad[c];
  });
}

Var softmax(const Var& logits) {
  if (logits.value().rank() != 1)
    throw std::invalid_argument("softmax: expected rank-1 tensor");
  if (!logits.value().all_finite())
    throw std::invalid_argument("softmax: non-finite logits");
  const int64_t n = logits.value().size();
  real mx = logits.value()[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits.value()[i]);
  Tensor out(logits.value().shape());
  real denom = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits.value()[i] - mx);
    denom += out[i];
  }
  for (int64_t i = 0; i < n; ++i) out[i] /= denom;
  auto pl = logits.node();
  return make_op(std::move(out), {logits}, [pl](detail::Node& nd) {
    if (!pl->requires_grad) return;
    const int64_t m = nd.value.size();
    real dot = 0.0;
    for (int64_t i = 0; i < m; ++i) dot += nd.grad[i] * nd.value[i];
    Tensor& g = pl->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      g[i] += nd.value[i] * (nd.grad[i] - dot);
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty inputs");
  const Tensor& first = xs[0].value();
  if (first.rank() != 4)
    throw std::invalid_argument("concat_channels: expected rank-4 tensors");
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int ctotal = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    if (t.rank() != 4 || t.dim(0) != n || t.dim(2) != h || t.dim(3) != w)
      throw std::invalid_argument("concat_channels: incompatible shapes");
    ctotal += t.dim(1);
  }
  Tensor out({n, ctotal, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  int coff = 0;
  for (const Var& v : xs) {
    const Tensor& t = v.value();
    const int c = t.dim(1);
    for (int b = 0; b < n; ++b)
      std::copy(t.data() + t.idx4(b, 0, 0, 0),
                t.data() + t.idx4(b, 0, 0, 0) + static_cast<int64_t>(c) * plane,
                out.data() + out.idx4(b, coff, 0, 0));
    coff += c;
  }
  std::vector<NodePtr> pn;
  for (const Var& v : xs) pn.push_back(v.node());
  return make_op(std::move(out), xs, [pn, plane](detail::Node& nd) {
    const int n = nd.value.dim(0);
    int coff = 0;
    for (const auto& p : pn) {
      const int c = p->value.dim(1);
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (int b = 0; b < n; ++b) {
          const real* src = nd.grad.data() + nd.grad.idx4(b, coff, 0, 0);
          real* dst = g.data() + g.idx4(b, 0, 0, 0);
          const int64_t len = static_cast<int64_t>(c) * plane;
          for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
        }
      }
      coff += c;
    }
  });
}

Var channel_gather(const Var& x, const std::vector<int>& channels) {
  const Tensor& t = x.value();
  if (t.rank() != 4) throw std::invalid_argument("channel_gather: rank != 4");
  for (int c : channels)
    if (c < 0 || c >= t.dim(1))
      throw std::invalid_argument("channel_gather: channel out of range");
  const int n = t.dim(0), h = t.dim(2), w = t.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({n, static_cast<int>(channels.size()), h, w});
  for (int b = 0; b < n; ++b)
    for (size_t k = 0; k < channels.size(); ++k)
      std::copy(t.data() + t.idx4(b, channels[k], 0, 0),
                t.data() + t.idx4(b, channels[k], 0, 0) + plane,
                out.data() + out.idx4(b, static_cast<int>(k), 0, 0));
  auto px = x.node();
  return make_op(std::move(out), {x}, [px, channels, plane](detail::Node& nd) {
    if (!px->requires_grad) return;
    Tensor& g = px->ensure_grad();
    const int n = nd.value.dim(0);
    for (int b = 0; b < n; ++b)
      for (size_t k = 0; k < channels.size(); ++k) {
        const real* src = nd.grad.data() + nd.grad.idx4(b, static_cast<int>(k), 0, 0);
        real* dst = g.data() + g.idx4(b, channels[k], 0, 0);
        for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  });
}

Var channel_merge(const Var& active, const Var& x,
                  const std::vector<uint8_t>& mask) {
  const Tensor& xa = active.value();
  const Tensor& xt = x.value();
  if (xt.rank() != 4 || xa.rank() != 4)
    throw std::invalid_argument("channel_merge: rank != 4");
  if (static_cast<int>(mask.size()) != xt.dim(1))
    throw std::invalid_argument("channel_merge: mask length != channels");
  int n_active = 0;
  for (uint8_t m : mask) n_active += (m != 0);
  if (xa.dim(1) != n_active)
    throw std::invalid_argument("channel_merge: active channel count mismatch");
  if (xa.dim(0) != xt.dim(0) || xa.dim(2) != xt.dim(2) || xa.dim(3) != xt.dim(3))
    throw std::invalid_argument("channel_merge: shape mismatch");

  const int n = xt.dim(0), c = xt.dim(1);
  const int64_t plane = static_cast<int64_t>(xt.dim(2)) * xt.dim(3);
  Tensor out(xt.shape());
  for (int b = 0; b < n; ++b) {
    int k = 0;
    for (int ch = 0; ch < c; ++ch) {
      const real* src = mask[static_cast<size_t>(ch)]
                            ? xa.data() + xa.idx4(b, k++, 0, 0)
                            : xt.data() + xt.idx4(b, ch, 0, 0);
      std::copy(src, src + plane, out.data() + out.idx4(b, ch, 0, 0));
    }
  }
  auto pa = active.node();
  auto px = x.node();
  return make_op(std::move(out), {active, x},
                 [pa, px, mask, plane](detail::Node& nd) {
                   const int n = nd.value.dim(0);
                   const int c = nd.value.dim(1);
                   for (int b = 0; b < n; ++b) {
                     int k = 0;
                     for (int ch = 0; ch < c; ++ch) {
                       const real* src = nd.grad.data() + nd.grad.idx4(b, ch, 0, 0);
                       if (mask[static_cast<size_t>(ch)]) {
                         if (pa->requires_grad) {
                           real* dst = pa->ensure_grad().data() +
                                       pa->grad.idx4(b, k, 0, 0);
                           for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                         }
                         ++k;
                       } else if (px->requires_grad) {
                         real* dst = px->ensure_grad().data() +
                                     px->grad.idx4(b, ch, 0, 0);
                         for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                       }
                     }
                   }
                 });
}

Var dice_loss(const Var& probs, const Tensor& target, real eps) {
  const Tensor& p = probs.value();
  if (!p.same_shape(target))
    throw std::invalid_argument("dice_loss: shape mismatch " + p.shape_str() +
                                " vs " + target.shape_str());
  if (p.rank() != 4) throw std::invalid_argument("dice_loss: rank != 4");
  const int n = p.dim(0), c = p.dim(1);
  const int64_t plane = static_cast<int64_t>(p.dim(2)) * p.dim(3);
  const int nc = n * c;

  // Per-(sample, channel) sums reused by the backward pass.
  std::vector<real> inter(static_cast<size_t>(nc)), psum(static_cast<size_t>(nc)),
      gsum(static_cast<size_t>(nc));
  real score_acc = 0.0;
  for (int i = 0; i < nc; ++i) {
    const real* pp = p.data() + static_cast<int64_t>(i) * plane;
    const real* gg = target.data() + static_cast<int64_t>(i) * plane;
    real si = 0.0, sp = 0.0, sg = 0.0;
    for (int64_t e = 0; e < plane; ++e) {
      si += pp[e] * gg[e];
      sp += pp[e];
      sg += gg[e];
    }
    inter[static_cast<size_t>(i)] = si;
    psum[static_cast<size_t>(i)] = sp;
    gsum[static_cast<size_t>(i)] = sg;
    score_acc += (2.0 * si + eps) / (sp + sg + eps);
  }
  const real loss = 1.0 - score_acc / nc;

  auto pv = probs.node();
  Tensor tgt = target;  // keep alive for backward
  return make_op(
      Tensor::scalar(loss), {probs},
      [pv, tgt = std::move(tgt), inter = std::move(inter),
       psum = std::move(psum), gsum = std::move(gsum), eps, plane,
       nc](detail::Node& nd) {
        if (!pv->requires_grad) return;
        Tensor& g = pv->ensure_grad();
        const real go = nd.grad[0];
        for (int i = 0; i < nc; ++i) {
          const real denom = psum[static_cast<size_t>(i)] +
                             gsum[static_cast<size_t>(i)] + eps;
          const real numer = 2.0 * inter[static_cast<size_t>(i)] + eps;
          const real* gg = tgt.data() + static_cast<int64_t>(i) * plane;
          real* gp = g.data() + static_cast<int64_t>(i) * plane;
          const real inv = 1.0 / (denom * denom);
          // d(score_i)/dp = (2*g*denom - numer) / denom^2
          for (int64_t e = 0; e < plane; ++e)
            gp[e] += go * (-1.0 / nc) * (2.0 * gg[e] * denom - numer) * inv;
        }
      });
}

}  // namespace iac
