#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iac/cell.hpp"
#include "iac/digest.hpp"

namespace iac {

struct UNetConfig {
  int depth = 3;
  int base_width = 8;
  int width_multiplier = 2;
  int in_channels = 1;
  int out_channels = 1;
  enum class Backbone { base, narrow, wide } backbone = Backbone::base;

  void validate() const;
  // Channel width at encoder/decoder level (0 = full resolution).
  int level_width(int level) const;
  int convs_per_block() const;  // backbone knob: narrow 1, base 2, wide 3
  std::string backbone_name() const;
};

enum class SkipMode { concat, continuous_cell, discrete_cell };

std::string skip_mode_name(SkipMode m);
SkipMode skip_mode_from_name(const std::string& name);

// One skip seam. `up` are upsampled decoder features, `skip` the encoder
// features at the same level; result feeds the decoder block, which expects
// 2×level_width channels.
class SkipCell {
public:
  virtual ~SkipCell() = default;
  virtual Var forward(const Var& up, const Var& skip, bool training,
                      Rng* mask_rng) = 0;
  virtual void state(const std::string& prefix,
                     std::vector<StateEntry>& out) = 0;
};

using CellFactory = std::function<std::unique_ptr<SkipCell>(
    int level, int width, int out_width)>;

class UNet {
public:
  UNet(const UNetConfig& cfg, SkipMode mode, const CellFactory* cell_factory,
       Rng& rng);

  // mask_rng is required for continuous-cell skips, ignored otherwise.
  Var forward(const Var& x, bool training, Rng* mask_rng = nullptr);

  std::vector<StateEntry> state();       // base then cells, canonical order
  std::vector<StateEntry> base_state();  // encoder/decoder/head
  std::vector<StateEntry> cell_state();  // skip-cell-owned weights

  void freeze_base();
  bool base_frozen() const { return base_frozen_; }

  const UNetConfig& config() const { return cfg_; }
  SkipMode skip_mode() const { return mode_; }
  int64_t param_count(bool trainable_only);

private:
  struct ConvBlock {
    std::vector<Conv2d> convs;
    std::vector<BatchNorm2d> bns;

    ConvBlock() = default;
    ConvBlock(int in_ch, int out_ch, int n_convs, Rng& rng);
    Var forward(const Var& x, bool training) const;
    void state(const std::string& prefix, std::vector<StateEntry>& out);
  };

  UNetConfig cfg_;
  SkipMode mode_;
  bool base_frozen_ = false;

  std::vector<ConvBlock> enc_;
  ConvBlock bottleneck_;
  std::vector<ConvTranspose2d> up_;     // index = level, 0 = full resolution
  std::vector<ConvBlock> dec_;
  Conv2d head_;
  std::vector<std::unique_ptr<SkipCell>> skips_;  // empty in concat mode
};

std::unique_ptr<UNet> build_unet(const UNetConfig& cfg, SkipMode mode,
                                 const CellFactory* cell_factory, Rng& rng);

enum class WeightScope { all, base, cell };

WeightDigest weight_digest(UNet& model, WeightScope scope);
void freeze_base_weights(UNet& model);

// Continuous supercell seams sharing one ArchParams across levels; ω and
// alignment convs are per level. init_rng is consumed per created cell.
CellFactory make_continuous_cell_factory(const SearchSpaceConfig& cfg,
                                         const ArchParams& arch,
                                         std::shared_ptr<Rng> init_rng);
CellFactory make_discrete_cell_factory(const SearchSpaceConfig& cfg,
                                       const Genotype& genotype,
                                       std::shared_ptr<Rng> init_rng);

}  // namespace iac
