#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "iac/relaxation.hpp"

namespace iac {

struct GenotypeEdge {
  int src = 0;
  OpKind op = OpKind::zero;

  bool operator==(const GenotypeEdge&) const = default;
};

// Discrete cell description: per intermediate node, its two selected
// (source, operation) input edges. Equality is structural; meta carries
// provenance (search epoch, seed, config hash) and is ignored by ==.
struct Genotype {
  std::vector<std::array<GenotypeEdge, 2>> nodes;
  nlohmann::json meta = nlohmann::json::object();

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  void validate(int n_inputs = 2) const;  // throws std::invalid_argument

  bool operator==(const Genotype& o) const { return nodes == o.nodes; }
};

Genotype discretize(const ArchParams& arch, const SearchSpaceConfig& cfg);

std::string genotype_to_json(const Genotype& g);
Genotype genotype_from_json(const std::string& text);  // throws ParseError
std::string genotype_to_dot(const Genotype& g);
std::string genotype_pretty(const Genotype& g);

// Supercell spanning one skip seam: both inputs aligned to the cell width by
// 1×1 convs, nodes evaluated with masked mixed ops and Ψ-weighted sums, and
// the concatenated node outputs projected to `out_width`. α/β live in the
// shared ArchParams; everything else is cell-owned ω.
class ContinuousCell {
public:
  ContinuousCell(const SearchSpaceConfig& cfg, int width, int out_width,
                 ArchParams arch, Rng& rng);

  Var forward(const Var& decoder_up, const Var& encoder_skip, Rng& mask_rng,
              bool training);
  void state(const std::string& prefix, std::vector<StateEntry>& out);

  int width() const { return width_; }
  int out_width() const { return out_width_; }
  const SearchSpaceConfig& config() const { return cfg_; }

private:
  SearchSpaceConfig cfg_;
  int width_;
  int out_width_;
  int active_width_;
  ArchParams arch_;
  Conv2d in_align0_, in_align1_, out_align_;
  // ops_[edge][op_index], instantiated at the masked (active) width.
  std::vector<std::vector<std::unique_ptr<CellOp>>> ops_;
};

// Implanted cell: only the genotype's chosen ops, full-width, two-edge
// unweighted sums per node. Same alignment scheme as the continuous cell so
// it is a drop-in replacement at the seam.
class DiscreteCell {
public:
  DiscreteCell(const SearchSpaceConfig& cfg, int width, int out_width,
               const Genotype& genotype, Rng& rng);

  Var forward(const Var& decoder_up, const Var& encoder_skip, bool training);
  void state(const std::string& prefix, std::vector<StateEntry>& out);

  int width() const { return width_; }
  int out_width() const { return out_width_; }
  const Genotype& genotype() const { return genotype_; }

private:
  SearchSpaceConfig cfg_;
  int width_;
  int out_width_;
  Genotype genotype_;
  Conv2d in_align0_, in_align1_, out_align_;
  // ops_[node][slot] for the two selected edges per node.
  std::vector<std::array<std::unique_ptr<CellOp>, 2>> ops_;
};

}  // namespace iac
