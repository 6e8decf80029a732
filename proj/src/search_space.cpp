#include "iac/search_space.hpp"

#include <array>
#include <set>
#include <stdexcept>

namespace iac {
namespace {

const std::array<std::string, 8> kOpNames = {
    "zero",         "identity",     "max_pool_3x3", "avg_pool_3x3",
    "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5",
};

class ZeroOp final : public CellOp {
public:
  Var forward(const Var& x, bool) override {
    // Constant output: no gradient flows back through this edge.
    return Var(Tensor(x.value().shape()));
  }
};

class IdentityOp final : public CellOp {
public:
  Var forward(const Var& x, bool) override { return x; }
};

class MaxPoolOp final : public CellOp {
public:
  Var forward(const Var& x, bool) override { return maxpool2d(x, 3, 1, 1); }
};

class AvgPoolOp final : public CellOp {
public:
  Var forward(const Var& x, bool) override { return avgpool2d(x, 3, 1, 1); }
};

// ReLU → depthwise k×k → pointwise 1×1 → norm, applied twice.
class SepConvOp final : public CellOp {
public:
  SepConvOp(int channels, int k, Rng& rng)
      : dw1_(channels, channels, k, 1, (k - 1) / 2, 1, channels, false, rng),
        pw1_(channels, channels, 1, 1, 0, 1, 1, false, rng),
        bn1_(channels),
        dw2_(channels, channels, k, 1, (k - 1) / 2, 1, channels, false, rng),
        pw2_(channels, channels, 1, 1, 0, 1, 1, false, rng),
        bn2_(channels) {}

  Var forward(const Var& x, bool training) override {
    Var h = bn1_.forward(pw1_.forward(dw1_.forward(relu(x))), training);
    return bn2_.forward(pw2_.forward(dw2_.forward(relu(h))), training);
  }

  void state(const std::string& p, std::vector<StateEntry>& out) override {
    dw1_.state(p + ".dw1", out);
    pw1_.state(p + ".pw1", out);
    bn1_.state(p + ".bn1", out);
    dw2_.state(p + ".dw2", out);
    pw2_.state(p + ".pw2", out);
    bn2_.state(p + ".bn2", out);
  }

  int64_t param_count() const override {
    return dw1_.param_count() + pw1_.param_count() + bn1_.param_count() +
           dw2_.param_count() + pw2_.param_count() + bn2_.param_count();
  }

private:
  Conv2d dw1_, pw1_;
  BatchNorm2d bn1_;
  Conv2d dw2_, pw2_;
  BatchNorm2d bn2_;
};

// ReLU → depthwise k×k dilation 2 → pointwise 1×1 → norm.
class DilConvOp final : public CellOp {
public:
  DilConvOp(int channels, int k, Rng& rng)
      : dw_(channels, channels, k, 1, (k - 1), 2, channels, false, rng),
        pw_(channels, channels, 1, 1, 0, 1, 1, false, rng),
        bn_(channels) {}

  Var forward(const Var& x, bool training) override {
    return bn_.forward(pw_.forward(dw_.forward(relu(x))), training);
  }

  void state(const std::string& p, std::vector<StateEntry>& out) override {
    dw_.state(p + ".dw", out);
    pw_.state(p + ".pw", out);
    bn_.state(p + ".bn", out);
  }

  int64_t param_count() const override {
    return dw_.param_count() + pw_.param_count() + bn_.param_count();
  }

private:
  Conv2d dw_, pw_;
  BatchNorm2d bn_;
};

}  // namespace

const std::vector<OpKind>& candidate_ops() {
  static const std::vector<OpKind> kOps = {
      OpKind::zero,         OpKind::identity,     OpKind::max_pool_3x3,
      OpKind::avg_pool_3x3, OpKind::sep_conv_3x3, OpKind::sep_conv_5x5,
      OpKind::dil_conv_3x3, OpKind::dil_conv_5x5,
  };
  return kOps;
}

OpKind op_from_code(int code) {
  if (code < 0 || code > 7)
    throw std::invalid_argument("op_from_code: code out of range: " +
                                std::to_string(code));
  return static_cast<OpKind>(code);
}

int op_code(OpKind k) { return static_cast<int>(k); }

const std::string& op_name(OpKind k) {
  return kOpNames[static_cast<size_t>(op_code(k))];
}

OpKind op_from_name(const std::string& name) {
  for (size_t i = 0; i < kOpNames.size(); ++i)
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  throw std::invalid_argument("op_from_name: unknown op: " + name);
}

int edge_count(int n_inputs, int n_nodes) {
  if (n_inputs < 1 || n_nodes < 1)
    throw std::invalid_argument("edge_count: non-positive arguments");
  int total = 0;
  for (int j = 0; j < n_nodes; ++j) total += n_inputs + j;
  return total;
}

void SearchSpaceConfig::validate() const {
  if (n_nodes < 1) throw std::invalid_argument("SearchSpaceConfig: n_nodes < 1");
  if (n_inputs < 1)
    throw std::invalid_argument("SearchSpaceConfig: n_inputs < 1");
  if (K < 1) throw std::invalid_argument("SearchSpaceConfig: K < 1");
  if (ops.empty()) throw std::invalid_argument("SearchSpaceConfig: empty ops");
  std::set<int> seen;
  for (OpKind k : ops)
    if (!seen.insert(op_code(k)).second)
      throw std::invalid_argument("SearchSpaceConfig: duplicate op " +
                                  op_name(k));
}

std::unique_ptr<CellOp> instantiate_op(OpKind kind, int channels, Rng& rng) {
  if (channels < 1) throw std::invalid_argument("instantiate_op: channels < 1");
  switch (kind) {
    case OpKind::zero:
      return std::make_unique<ZeroOp>();
    case OpKind::identity:
      return std::make_unique<IdentityOp>();
    case OpKind::max_pool_3x3:
      return std::make_unique<MaxPoolOp>();
    case OpKind::avg_pool_3x3:
      return std::make_unique<AvgPoolOp>();
    case OpKind::sep_conv_3x3:
      return std::make_unique<SepConvOp>(channels, 3, rng);
    case OpKind::sep_conv_5x5:
      return std::make_unique<SepConvOp>(channels, 5, rng);
    case OpKind::dil_conv_3x3:
      return std::make_unique<DilConvOp>(channels, 3, rng);
    case OpKind::dil_conv_5x5:
      return std::make_unique<DilConvOp>(channels, 5, rng);
  }
  throw std::invalid_argument("instantiate_op: unknown op kind");
}

}  // namespace iac
