#pragma once

#include <memory>
#include <string>
#include <vector>

#include "iac/nn.hpp"

namespace iac {

// Candidate operation vocabulary. Codes are the serialization contract:
// genotype files store these integers, so the order is frozen.
enum class OpKind : int {
  zero = 0,
  identity = 1,
  max_pool_3x3 = 2,
  avg_pool_3x3 = 3,
  sep_conv_3x3 = 4,
  sep_conv_5x5 = 5,
  dil_conv_3x3 = 6,
  dil_conv_5x5 = 7,
};

const std::vector<OpKind>& candidate_ops();
OpKind op_from_code(int code);
int op_code(OpKind k);
const std::string& op_name(OpKind k);
OpKind op_from_name(const std::string& name);

// Σ_{j=0}^{n_nodes−1} (n_inputs + j)
int edge_count(int n_inputs, int n_nodes);

struct SearchSpaceConfig {
  int n_nodes = 4;
  int n_inputs = 2;
  std::vector<OpKind> ops = candidate_ops();
  int K = 4;
  enum class EdgeNorm { pcdarts, tan_rescaled } edge_norm_mode =
      EdgeNorm::tan_rescaled;

  int n_edges() const { return edge_count(n_inputs, n_nodes); }
  int n_ops() const { return static_cast<int>(ops.size()); }
  void validate() const;  // throws std::invalid_argument
};

// A candidate op instantiated at a fixed channel width. Maps (N,C,H,W) to
// the same shape; stride is always 1 inside the cell.
class CellOp {
public:
  virtual ~CellOp() = default;
  virtual Var forward(const Var& x, bool training) = 0;
  virtual void state(const std::string& prefix, std::vector<StateEntry>& out) {
    (void)prefix;
    (void)out;
  }
  virtual int64_t param_count() const { return 0; }
};

std::unique_ptr<CellOp> instantiate_op(OpKind kind, int channels, Rng& rng);

}  // namespace iac
