#include "iac/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace iac {
namespace {

void check_finite_vector(const Tensor& v, const char* what) {
  if (!v.all_finite())
    throw std::invalid_argument(std::string(what) + ": non-finite logits");
}

// β values this close to an odd multiple of π/2 sit on a tan pole.
constexpr real kPoleTol = 1e-6;

void check_tan_domain(const Tensor& beta) {
  check_finite_vector(beta, "edge_weights_tan_rescaled");
  constexpr real half_pi = std::numbers::pi_v<real> / 2.0;
  for (int64_t i = 0; i < beta.size(); ++i) {
    const real d =
        std::remainder(beta[i] - half_pi, std::numbers::pi_v<real>);
    if (std::abs(d) < kPoleTol)
      throw std::domain_error(
          "edge_weights_tan_rescaled: beta within 1e-6 of a tan pole at "
          "index " +
          std::to_string(i));
  }
}

std::vector<real> softmax_plain(const std::vector<real>& v) {
  real mx = v[0];
  for (real x : v) mx = std::max(mx, x);
  std::vector<real> out(v.size());
  real denom = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    denom += out[i];
  }
  for (real& x : out) x /= denom;
  return out;
}

void check_finite_plain(const std::vector<real>& v, const char* what) {
  if (v.empty())
    throw std::invalid_argument(std::string(what) + ": empty input");
  for (real x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite logits");
}

}  // namespace

AlphaParams::AlphaParams(int n_edges, int n_ops)
    : logits(Tensor::full({n_edges, n_ops}, 1.0), true) {}

BetaParams::BetaParams(int n_inputs, int n_nodes) {
  node_logits.reserve(static_cast<size_t>(n_nodes));
  for (int j = 0; j < n_nodes; ++j)
    node_logits.emplace_back(Tensor::full({n_inputs + j}, 1.0), true);
}

ArchParams::ArchParams(const SearchSpaceConfig& cfg)
    : alpha(cfg.n_edges(), cfg.n_ops()), beta(cfg.n_inputs, cfg.n_nodes) {}

std::vector<Var> ArchParams::params() const {
  std::vector<Var> out{alpha.logits};
  out.insert(out.end(), beta.node_logits.begin(), beta.node_logits.end());
  return out;
}

int ChannelMask::active_count() const {
  int n = 0;
  for (uint8_t b : active) n += b;
  return n;
}

std::vector<int> ChannelMask::active_channels() const {
  std::vector<int> idx;
  idx.reserve(active.size());
  for (size_t i = 0; i < active.size(); ++i)
    if (active[i]) idx.push_back(static_cast<int>(i));
  return idx;
}

ChannelMask sample_channel_mask(int C, int K, Rng& rng) {
  if (C < 1 || K < 1)
    throw std::invalid_argument("sample_channel_mask: C and K must be >= 1");
  const int n_active = std::max(1, C / K);
  std::vector<int> perm(static_cast<size_t>(C));
  for (int i = 0; i < C; ++i) perm[static_cast<size_t>(i)] = i;
  // Partial Fisher–Yates: only the first n_active slots are needed.
  for (int i = 0; i < n_active; ++i) {
    const int j = rng.uniform_int(i, C - 1);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  ChannelMask m;
  m.active.assign(static_cast<size_t>(C), 0);
  for (int i = 0; i < n_active; ++i) m.active[static_cast<size_t>(perm[i])] = 1;
  return m;
}

std::vector<real> op_mixture_weights(const std::vector<real>& alpha_edge) {
  check_finite_plain(alpha_edge, "op_mixture_weights");
  return softmax_plain(alpha_edge);
}

std::vector<real> edge_weights_pcdarts(const std::vector<real>& beta_node) {
  check_finite_plain(beta_node, "edge_weights_pcdarts");
  return softmax_plain(beta_node);
}

std::vector<real> edge_weights_tan_rescaled(const std::vector<real>& beta_node) {
  check_finite_plain(beta_node, "edge_weights_tan_rescaled");
  Var b(Tensor::from({static_cast<int>(beta_node.size())}, beta_node));
  Var out = edge_weights_tan_rescaled_v(b);
  std::vector<real> r(static_cast<size_t>(out.value().size()));
  for (int64_t i = 0; i < out.value().size(); ++i)
    r[static_cast<size_t>(i)] = out.value()[i];
  return r;
}

Var op_mixture_weights_v(const Var& alpha_edge) { return softmax(alpha_edge); }

Var edge_weights_pcdarts_v(const Var& beta_node) {
  return softmax(beta_node);
}

Var edge_weights_tan_rescaled_v(const Var& beta_node) {
  const Tensor& bv = beta_node.value();
  if (bv.rank() != 1 || bv.size() < 1)
    throw std::invalid_argument("edge_weights_tan_rescaled: need rank-1 input");
  check_tan_domain(bv);
  const int n = static_cast<int>(bv.size());

  if (n == 1) {
    // A 1-ary node has nothing to normalize; constant [1] with zero gradient.
    return make_op(Tensor::full({1}, 1.0), {beta_node}, [](detail::Node&) {});
  }

  auto t = std::make_shared<std::vector<real>>(static_cast<size_t>(n));
  real tmax = -std::numeric_limits<real>::infinity();
  for (int i = 0; i < n; ++i) {
    (*t)[static_cast<size_t>(i)] = std::tan(bv[i]);
    tmax = std::max(tmax, (*t)[static_cast<size_t>(i)]);
  }

  auto psi_hat = std::make_shared<std::vector<real>>(static_cast<size_t>(n));
  real denom = 0.0;
  for (int i = 0; i < n; ++i) {
    (*psi_hat)[static_cast<size_t>(i)] =
        std::exp((*t)[static_cast<size_t>(i)] - tmax);
    denom += (*psi_hat)[static_cast<size_t>(i)];
  }
  for (int i = 0; i < n; ++i) (*psi_hat)[static_cast<size_t>(i)] /= denom;

  int imax = 0;
  for (int i = 1; i < n; ++i)
    if ((*psi_hat)[static_cast<size_t>(i)] >
        (*psi_hat)[static_cast<size_t>(imax)])
      imax = i;
  const bool capped = (*psi_hat)[static_cast<size_t>(imax)] > 0.5;

  Tensor out({n});
  real s_rest = 0.0;
  if (capped) {
    for (int i = 0; i < n; ++i)
      if (i != imax) s_rest += (*psi_hat)[static_cast<size_t>(i)];
    out[imax] = 0.5;
    for (int i = 0; i < n; ++i)
      if (i != imax) out[i] = 0.5 * (*psi_hat)[static_cast<size_t>(i)] / s_rest;
  } else {
    for (int i = 0; i < n; ++i) out[i] = (*psi_hat)[static_cast<size_t>(i)];
  }

  auto pb = beta_node.node();
  return make_op(
      std::move(out), {beta_node},
      [pb, t, psi_hat, imax, capped, s_rest, n](detail::Node& nd) {
        if (!pb->requires_grad) return;
        const Tensor& g = nd.grad;
        std::vector<real> gph(static_cast<size_t>(n));
        if (capped) {
          // Ψ_i = 0.5·Ψ̂_i / S_rest (i ≠ i*), Ψ_{i*} = 0.5; branch held fixed.
          real dot = 0.0;
          for (int i = 0; i < n; ++i)
            if (i != imax) dot += g[i] * (*psi_hat)[static_cast<size_t>(i)];
          for (int i = 0; i < n; ++i)
            gph[static_cast<size_t>(i)] =
                (i == imax) ? 0.0
                            : 0.5 / s_rest * g[i] -
                                  0.5 / (s_rest * s_rest) * dot;
        } else {
          for (int i = 0; i < n; ++i) gph[static_cast<size_t>(i)] = g[i];
        }
        // Softmax backward, then d tan(β)/dβ = 1 + tan²(β).
        real inner = 0.0;
        for (int i = 0; i < n; ++i)
          inner += gph[static_cast<size_t>(i)] *
                   (*psi_hat)[static_cast<size_t>(i)];
        Tensor& gb = pb->ensure_grad();
        for (int i = 0; i < n; ++i) {
          const real gt = (*psi_hat)[static_cast<size_t>(i)] *
                          (gph[static_cast<size_t>(i)] - inner);
          const real ti = (*t)[static_cast<size_t>(i)];
          gb[i] += gt * (1.0 + ti * ti);
        }
      });
}

Var edge_weights_v(const Var& beta_node, SearchSpaceConfig::EdgeNorm mode) {
  return mode == SearchSpaceConfig::EdgeNorm::pcdarts
             ? edge_weights_pcdarts_v(beta_node)
             : edge_weights_tan_rescaled_v(beta_node);
}

Var mixed_op_forward(const Var& x, const Var& alpha_edge,
                     const std::vector<std::unique_ptr<CellOp>>& ops,
                     const ChannelMask& mask, bool training) {
  if (x.value().rank() != 4)
    throw std::invalid_argument("mixed_op_forward: input rank != 4");
  const int C = x.value().dim(1);
  if (mask.channels() != C)
    throw std::invalid_argument("mixed_op_forward: mask length != channels");
  if (ops.empty()) throw std::invalid_argument("mixed_op_forward: no ops");
  if (alpha_edge.value().rank() != 1 ||
      alpha_edge.value().size() != static_cast<int64_t>(ops.size()))
    throw std::invalid_argument("mixed_op_forward: alpha size != op count");

  Var phi = op_mixture_weights_v(alpha_edge);
  const auto act = mask.active_channels();
  const bool full = static_cast<int>(act.size()) == C;
  Var x_act = full ? x : channel_gather(x, act);

  std::vector<Var> outs;
  outs.reserve(ops.size());
  for (const auto& op : ops) outs.push_back(op->forward(x_act, training));
  Var mixed = weighted_sum(outs, phi);
  return full ? mixed : channel_merge(mixed, x, mask.active);
}

Var node_forward(const std::vector<Var>& edge_outputs, const Var& psi) {
  if (edge_outputs.empty())
    throw std::invalid_argument("node_forward: no edge outputs");
  if (psi.value().rank() != 1 ||
      psi.value().size() != static_cast<int64_t>(edge_outputs.size()))
    throw std::invalid_argument("node_forward: psi length mismatch");
  return weighted_sum(edge_outputs, psi);
}

}  // namespace iac
