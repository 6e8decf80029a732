#include "iac/cell.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "iac/errors.hpp"

namespace iac {
namespace {

int edge_base(int n_inputs, int node) {
  int base = 0;
  for (int j = 0; j < node; ++j) base += n_inputs + j;
  return base;
}

std::string src_label(int src) {
  return src < 2 ? "in" + std::to_string(src) : "n" + std::to_string(src - 2);
}

void check_seam_inputs(const Var& decoder_up, const Var& encoder_skip,
                       int width) {
  const Tensor& a = decoder_up.value();
  const Tensor& b = encoder_skip.value();
  if (a.rank() != 4 || b.rank() != 4)
    throw std::invalid_argument("cell: seam inputs must be rank 4");
  if (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("cell: spatial mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  if (a.dim(1) != width || b.dim(1) != width)
    throw std::invalid_argument("cell: seam inputs must have cell width " +
                                std::to_string(width));
}

}  // namespace

void Genotype::validate(int n_inputs) const {
  if (nodes.empty()) throw std::invalid_argument("genotype: no nodes");
  for (size_t j = 0; j < nodes.size(); ++j) {
    const auto& pair = nodes[j];
    const int limit = n_inputs + static_cast<int>(j);
    for (const auto& e : pair) {
      if (e.src < 0 || e.src >= limit)
        throw std::invalid_argument(
            "genotype: node " + std::to_string(j) + " source " +
            std::to_string(e.src) + " out of range [0," +
            std::to_string(limit) + ")");
    }
    if (pair[0].src == pair[1].src)
      throw std::invalid_argument("genotype: node " + std::to_string(j) +
                                  " selects the same source twice");
  }
}

Genotype discretize(const ArchParams& arch, const SearchSpaceConfig& cfg) {
  cfg.validate();
  if (cfg.n_inputs < 2)
    throw std::invalid_argument("discretize: need n_inputs >= 2");
  const Tensor& al = arch.alpha.logits.value();
  if (al.rank() != 2 || al.dim(0) != cfg.n_edges() ||
      al.dim(1) != cfg.n_ops())
    throw std::invalid_argument("discretize: alpha shape mismatch");

  Genotype g;
  g.nodes.reserve(static_cast<size_t>(cfg.n_nodes));
  for (int j = 0; j < cfg.n_nodes; ++j) {
    const int arity = cfg.n_inputs + j;
    const Tensor& bt = arch.beta.node_logits[static_cast<size_t>(j)].value();
    std::vector<real> beta(static_cast<size_t>(arity));
    for (int i = 0; i < arity; ++i) beta[static_cast<size_t>(i)] = bt[i];
    const std::vector<real> psi =
        cfg.edge_norm_mode == SearchSpaceConfig::EdgeNorm::pcdarts
            ? edge_weights_pcdarts(beta)
            : edge_weights_tan_rescaled(beta);

    const int base = edge_base(cfg.n_inputs, j);
    std::vector<int> best_op(static_cast<size_t>(arity), -1);
    std::vector<real> score(static_cast<size_t>(arity));
    for (int i = 0; i < arity; ++i) {
      std::vector<real> logits(static_cast<size_t>(cfg.n_ops()));
      for (int o = 0; o < cfg.n_ops(); ++o)
        logits[static_cast<size_t>(o)] = al[(static_cast<int64_t>(base + i)) *
                                                cfg.n_ops() +
                                            o];
      const std::vector<real> phi = op_mixture_weights(logits);
      int bo = -1;
      for (int o = 0; o < cfg.n_ops(); ++o) {
        if (cfg.ops[static_cast<size_t>(o)] == OpKind::zero) continue;
        if (bo < 0 || phi[static_cast<size_t>(o)] > phi[static_cast<size_t>(bo)])
          bo = o;
      }
      if (bo < 0)
        throw std::invalid_argument("discretize: no non-zero candidate op");
      best_op[static_cast<size_t>(i)] = bo;
      // Edges are ranked by Ψ alone; α enters only through the per-edge op
      // argmax, keeping the genotype invariant under any order-preserving
      // transform of the α logits.
      score[static_cast<size_t>(i)] = psi[static_cast<size_t>(i)];
    }

    std::vector<int> order(static_cast<size_t>(arity));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return score[static_cast<size_t>(a)] > score[static_cast<size_t>(b)];
    });
    int ia = order[0], ib = order[1];
    if (ia > ib) std::swap(ia, ib);
    g.nodes.push_back(
        {GenotypeEdge{ia, cfg.ops[static_cast<size_t>(
                              best_op[static_cast<size_t>(ia)])]},
         GenotypeEdge{ib, cfg.ops[static_cast<size_t>(
                              best_op[static_cast<size_t>(ib)])]}});
  }
  g.validate(cfg.n_inputs);
  return g;
}

std::string genotype_to_json(const Genotype& g) {
  nlohmann::json doc;
  doc["version"] = 1;
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& pair : g.nodes) {
    nlohmann::json node = nlohmann::json::array();
    for (const auto& e : pair)
      node.push_back(nlohmann::json::array({e.src, op_code(e.op)}));
    nodes.push_back(node);
  }
  doc["nodes"] = nodes;
  doc["meta"] = g.meta;
  return doc.dump(2) + "\n";
}

Genotype genotype_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("genotype: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("genotype: top level must be object");
  if (!doc.contains("version") || !doc["version"].is_number_integer() ||
      doc["version"].get<int>() != 1)
    throw ParseError("genotype: field 'version' must be 1");
  if (!doc.contains("nodes") || !doc["nodes"].is_array())
    throw ParseError("genotype: field 'nodes' must be an array");

  Genotype g;
  int j = 0;
  for (const auto& node : doc["nodes"]) {
    if (!node.is_array() || node.size() != 2)
      throw ParseError("genotype: field 'nodes[" + std::to_string(j) +
                       "]' must have exactly two input edges");
    std::array<GenotypeEdge, 2> pair;
    for (size_t s = 0; s < 2; ++s) {
      const auto& e = node[s];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer())
        throw ParseError("genotype: field 'nodes[" + std::to_string(j) +
                         "][" + std::to_string(s) + "]' must be [src, op]");
      const int src = e[0].get<int>();
      const int code = e[1].get<int>();
      if (code < 0 || code > 7)
        throw ParseError("genotype: field 'nodes[" + std::to_string(j) + "][" +
                         std::to_string(s) + "]' op_code " +
                         std::to_string(code) + " outside 0..7");
      if (src < 0 || src >= 2 + j)
        throw ParseError("genotype: field 'nodes[" + std::to_string(j) + "][" +
                         std::to_string(s) + "]' source " +
                         std::to_string(src) + " out of range");
      pair[s] = GenotypeEdge{src, op_from_code(code)};
    }
    g.nodes.push_back(pair);
    ++j;
  }
  if (doc.contains("meta")) {
    if (!doc["meta"].is_object())
      throw ParseError("genotype: field 'meta' must be an object");
    g.meta = doc["meta"];
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("genotype: ") + e.what());
  }
  return g;
}

std::string genotype_to_dot(const Genotype& g) {
  std::string out = "digraph genotype {\n  rankdir=LR;\n";
  out += "  in0 [shape=box];\n  in1 [shape=box];\n";
  for (int j = 0; j < g.n_nodes(); ++j)
    out += "  n" + std::to_string(j) + " [shape=ellipse];\n";
  out += "  out [shape=box];\n";
  for (int j = 0; j < g.n_nodes(); ++j) {
    for (const auto& e : g.nodes[static_cast<size_t>(j)]) {
      out += "  " + src_label(e.src) + " -> n" + std::to_string(j) +
             " [label=\"" + op_name(e.op) + "\"];\n";
    }
  }
  for (int j = 0; j < g.n_nodes(); ++j)
    out += "  n" + std::to_string(j) + " -> out;\n";
  out += "}\n";
  return out;
}

std::string genotype_pretty(const Genotype& g) {
  std::string out;
  for (int j = 0; j < g.n_nodes(); ++j) {
    out += "node " + std::to_string(j) + ":";
    for (const auto& e : g.nodes[static_cast<size_t>(j)])
      out += "  " + src_label(e.src) + " --" + op_name(e.op) + "-->";
    out += "\n";
  }
  return out;
}

ContinuousCell::ContinuousCell(const SearchSpaceConfig& cfg, int width,
                               int out_width, ArchParams arch, Rng& rng)
    : cfg_(cfg),
      width_(width),
      out_width_(out_width),
      active_width_(std::max(1, width / cfg.K)),
      arch_(std::move(arch)),
      in_align0_(width, width, 1, 1, 0, 1, 1, true, rng),
      in_align1_(width, width, 1, 1, 0, 1, 1, true, rng),
      out_align_(cfg.n_nodes * width, out_width, 1, 1, 0, 1, 1, true, rng) {
  cfg_.validate();
  if (width < 1 || out_width < 1)
    throw std::invalid_argument("ContinuousCell: bad widths");
  const Tensor& al = arch_.alpha.logits.value();
  if (al.rank() != 2 || al.dim(0) != cfg_.n_edges() ||
      al.dim(1) != cfg_.n_ops())
    throw std::invalid_argument("ContinuousCell: alpha shape mismatch");
  ops_.resize(static_cast<size_t>(cfg_.n_edges()));
  for (auto& edge_ops : ops_) {
    edge_ops.reserve(cfg_.ops.size());
    for (OpKind k : cfg_.ops)
      edge_ops.push_back(instantiate_op(k, active_width_, rng));
  }
}

Var ContinuousCell::forward(const Var& decoder_up, const Var& encoder_skip,
                            Rng& mask_rng, bool training) {
  check_seam_inputs(decoder_up, encoder_skip, width_);
  std::vector<Var> states{in_align0_.forward(decoder_up),
                          in_align1_.forward(encoder_skip)};
  std::vector<Var> node_outs;
  for (int j = 0; j < cfg_.n_nodes; ++j) {
    const int arity = cfg_.n_inputs + j;
    const int base = edge_base(cfg_.n_inputs, j);
    Var psi = edge_weights_v(arch_.beta.node_logits[static_cast<size_t>(j)],
                             cfg_.edge_norm_mode);
    std::vector<Var> edge_outs;
    edge_outs.reserve(static_cast<size_t>(arity));
    for (int i = 0; i < arity; ++i) {
      Var alpha_row = row(arch_.alpha.logits, base + i);
      ChannelMask mask = sample_channel_mask(width_, cfg_.K, mask_rng);
      edge_outs.push_back(mixed_op_forward(states[static_cast<size_t>(i)],
                                           alpha_row,
                                           ops_[static_cast<size_t>(base + i)],
                                           mask, training));
    }
    Var node = node_forward(edge_outs, psi);
    states.push_back(node);
    node_outs.push_back(node);
  }
  return out_align_.forward(concat_channels(node_outs));
}

void ContinuousCell::state(const std::string& prefix,
                           std::vector<StateEntry>& out) {
  in_align0_.state(prefix + ".in0", out);
  in_align1_.state(prefix + ".in1", out);
  out_align_.state(prefix + ".out", out);
  for (size_t e = 0; e < ops_.size(); ++e)
    for (size_t o = 0; o < ops_[e].size(); ++o)
      ops_[e][o]->state(
          prefix + ".e" + std::to_string(e) + "." + op_name(cfg_.ops[o]), out);
}

DiscreteCell::DiscreteCell(const SearchSpaceConfig& cfg, int width,
                           int out_width, const Genotype& genotype, Rng& rng)
    : cfg_(cfg),
      width_(width),
      out_width_(out_width),
      genotype_(genotype),
      in_align0_(width, width, 1, 1, 0, 1, 1, true, rng),
      in_align1_(width, width, 1, 1, 0, 1, 1, true, rng),
      out_align_(cfg.n_nodes * width, out_width, 1, 1, 0, 1, 1, true, rng) {
  cfg_.validate();
  genotype_.validate(cfg_.n_inputs);
  if (genotype_.n_nodes() != cfg_.n_nodes)
    throw std::invalid_argument("DiscreteCell: genotype node count mismatch");
  ops_.resize(static_cast<size_t>(cfg_.n_nodes));
  for (int j = 0; j < cfg_.n_nodes; ++j)
    for (size_t s = 0; s < 2; ++s)
      ops_[static_cast<size_t>(j)][s] = instantiate_op(
          genotype_.nodes[static_cast<size_t>(j)][s].op, width_, rng);
}

Var DiscreteCell::forward(const Var& decoder_up, const Var& encoder_skip,
                          bool training) {
  check_seam_inputs(decoder_up, encoder_skip, width_);
  std::vector<Var> states{in_align0_.forward(decoder_up),
                          in_align1_.forward(encoder_skip)};
  std::vector<Var> node_outs;
  for (int j = 0; j < cfg_.n_nodes; ++j) {
    const auto& pair = genotype_.nodes[static_cast<size_t>(j)];
    Var a = ops_[static_cast<size_t>(j)][0]->forward(
        states[static_cast<size_t>(pair[0].src)], training);
    Var b = ops_[static_cast<size_t>(j)][1]->forward(
        states[static_cast<size_t>(pair[1].src)], training);
    Var node = add(a, b);
    states.push_back(node);
    node_outs.push_back(node);
  }
  return out_align_.forward(concat_channels(node_outs));
}

void DiscreteCell::state(const std::string& prefix,
                         std::vector<StateEntry>& out) {
  in_align0_.state(prefix + ".in0", out);
  in_align1_.state(prefix + ".in1", out);
  out_align_.state(prefix + ".out", out);
  for (int j = 0; j < cfg_.n_nodes; ++j)
    for (size_t s = 0; s < 2; ++s)
      ops_[static_cast<size_t>(j)][s]->state(
          prefix + ".n" + std::to_string(j) + ".s" + std::to_string(s), out);
}

}  // namespace iac
