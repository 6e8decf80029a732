#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "iac/search_space.hpp"

namespace iac {

// Per-edge × per-op logits, one shared matrix for the whole network.
struct AlphaParams {
  Var logits;  // rank-2 (n_edges, n_ops)

  AlphaParams() = default;
  AlphaParams(int n_edges, int n_ops);  // initialized to ones
};

// Per-node edge logits; node j has (n_inputs + j) incoming edges.
struct BetaParams {
  std::vector<Var> node_logits;

  BetaParams() = default;
  BetaParams(int n_inputs, int n_nodes);  // initialized to ones
};

struct ArchParams {
  AlphaParams alpha;
  BetaParams beta;

  ArchParams() = default;
  explicit ArchParams(const SearchSpaceConfig& cfg);
  std::vector<Var> params() const;  // alpha.logits then beta node vectors
};

struct ChannelMask {
  std::vector<uint8_t> active;  // length C, entries 0/1

  int channels() const { return static_cast<int>(active.size()); }
  int active_count() const;
  std::vector<int> active_channels() const;
};

// Exactly max(1, ⌊C/K⌋) active channels, uniform without replacement.
ChannelMask sample_channel_mask(int C, int K, Rng& rng);

// ---- value-level weight maps (used by discretization and tests) -----------
std::vector<real> op_mixture_weights(const std::vector<real>& alpha_edge);
std::vector<real> edge_weights_pcdarts(const std::vector<real>& beta_node);
std::vector<real> edge_weights_tan_rescaled(const std::vector<real>& beta_node);

// ---- graph-level versions (used by the continuous cell) -------------------
Var op_mixture_weights_v(const Var& alpha_edge);
Var edge_weights_pcdarts_v(const Var& beta_node);
Var edge_weights_tan_rescaled_v(const Var& beta_node);
Var edge_weights_v(const Var& beta_node, SearchSpaceConfig::EdgeNorm mode);

// Masked mixed operation: ops run on the mask's active channels, inactive
// channels pass through unchanged, output keeps the original channel order.
// alpha_edge is the rank-1 logit row for this edge.
Var mixed_op_forward(const Var& x, const Var& alpha_edge,
                     const std::vector<std::unique_ptr<CellOp>>& ops,
                     const ChannelMask& mask, bool training);

// Ψ-weighted sum of this node's edge outputs.
Var node_forward(const std::vector<Var>& edge_outputs, const Var& psi);

}  // namespace iac
