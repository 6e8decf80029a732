#include "iac/unet.hpp"

#include <algorithm>
#include <stdexcept>

namespace iac {
namespace {

class ConcatSkip final : public SkipCell {
public:
  Var forward(const Var& up, const Var& skip, bool, Rng*) override {
    return concat_channels({up, skip});
  }
  void state(const std::string&, std::vector<StateEntry>&) override {}
};

class ContinuousCellSkip final : public SkipCell {
public:
  ContinuousCellSkip(const SearchSpaceConfig& cfg, int width, int out_width,
                     ArchParams arch, Rng& rng)
      : cell_(cfg, width, out_width, std::move(arch), rng) {}

  Var forward(const Var& up, const Var& skip, bool training,
              Rng* mask_rng) override {
    if (!mask_rng)
      throw std::invalid_argument("continuous cell forward needs a mask rng");
    return cell_.forward(up, skip, *mask_rng, training);
  }
  void state(const std::string& prefix, std::vector<StateEntry>& out) override {
    cell_.state(prefix, out);
  }

private:
  ContinuousCell cell_;
};

class DiscreteCellSkip final : public SkipCell {
public:
  DiscreteCellSkip(const SearchSpaceConfig& cfg, int width, int out_width,
                   const Genotype& genotype, Rng& rng)
      : cell_(cfg, width, out_width, genotype, rng) {}

  Var forward(const Var& up, const Var& skip, bool training, Rng*) override {
    return cell_.forward(up, skip, training);
  }
  void state(const std::string& prefix, std::vector<StateEntry>& out) override {
    cell_.state(prefix, out);
  }

private:
  DiscreteCell cell_;
};

}  // namespace

void UNetConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("UNetConfig: depth < 2");
  if (base_width < 1 || width_multiplier < 1)
    throw std::invalid_argument("UNetConfig: non-positive widths");
  if (in_channels < 1 || out_channels < 1)
    throw std::invalid_argument("UNetConfig: non-positive channel counts");
}

int UNetConfig::level_width(int level) const {
  int w = base_width;
  switch (backbone) {
    case Backbone::base:
      break;
    case Backbone::narrow:
      w = std::max(2, base_width / 2);
      break;
    case Backbone::wide:
      w = base_width + base_width / 2;
      break;
  }
  for (int i = 0; i < level; ++i) w *= width_multiplier;
  return w;
}

int UNetConfig::convs_per_block() const {
  switch (backbone) {
    case Backbone::narrow:
      return 1;
    case Backbone::base:
      return 2;
    case Backbone::wide:
      return 3;
  }
  return 2;
}

std::string UNetConfig::backbone_name() const {
  switch (backbone) {
    case Backbone::base:
      return "base";
    case Backbone::narrow:
      return "narrow";
    case Backbone::wide:
      return "wide";
  }
  return "base";
}

std::string skip_mode_name(SkipMode m) {
  switch (m) {
    case SkipMode::concat:
      return "concat";
    case SkipMode::continuous_cell:
      return "continuous_cell";
    case SkipMode::discrete_cell:
      return "discrete_cell";
  }
  return "concat";
}

SkipMode skip_mode_from_name(const std::string& name) {
  if (name == "concat") return SkipMode::concat;
  if (name == "continuous_cell") return SkipMode::continuous_cell;
  if (name == "discrete_cell") return SkipMode::discrete_cell;
  throw std::invalid_argument("unknown skip mode: " + name);
}

UNet::ConvBlock::ConvBlock(int in_ch, int out_ch, int n_convs, Rng& rng) {
  for (int i = 0; i < n_convs; ++i) {
    convs.emplace_back(i == 0 ? in_ch : out_ch, out_ch, 3, 1, 1, 1, 1, false,
                       rng);
    bns.emplace_back(out_ch);
  }
}

Var UNet::ConvBlock::forward(const Var& x, bool training) const {
  Var h = x;
  for (size_t i = 0; i < convs.size(); ++i)
    h = relu(bns[i].forward(convs[i].forward(h), training));
  return h;
}

void UNet::ConvBlock::state(const std::string& prefix,
                            std::vector<StateEntry>& out) {
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].state(prefix + ".c" + std::to_string(i), out);
    bns[i].state(prefix + ".bn" + std::to_string(i), out);
  }
}

UNet::UNet(const UNetConfig& cfg, SkipMode mode,
           const CellFactory* cell_factory, Rng& rng)
    : cfg_(cfg), mode_(mode) {
  cfg_.validate();
  if ((mode != SkipMode::concat) != (cell_factory != nullptr))
    throw std::invalid_argument(
        "build_unet: cell_factory required iff skip_mode != concat");

  const int nconv = cfg_.convs_per_block();
  for (int l = 0; l < cfg_.depth; ++l)
    enc_.emplace_back(l == 0 ? cfg_.in_channels : cfg_.level_width(l - 1),
                      cfg_.level_width(l), nconv, rng);
  bottleneck_ =
      ConvBlock(cfg_.level_width(cfg_.depth - 1), cfg_.level_width(cfg_.depth),
                nconv, rng);

  up_.resize(static_cast<size_t>(cfg_.depth));
  dec_.resize(static_cast<size_t>(cfg_.depth));
  skips_.resize(static_cast<size_t>(cfg_.depth));
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const int w = cfg_.level_width(l);
    up_[static_cast<size_t>(l)] =
        ConvTranspose2d(cfg_.level_width(l + 1), w, 2, rng);
    if (mode != SkipMode::concat)
      skips_[static_cast<size_t>(l)] = (*cell_factory)(l, w, 2 * w);
    else
      skips_[static_cast<size_t>(l)] = std::make_unique<ConcatSkip>();
    dec_[static_cast<size_t>(l)] = ConvBlock(2 * w, w, nconv, rng);
  }
  head_ = Conv2d(cfg_.level_width(0), cfg_.out_channels, 1, 1, 0, 1, 1, true,
                 rng);
}

Var UNet::forward(const Var& x, bool training, Rng* mask_rng) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(1) != cfg_.in_channels)
    throw std::invalid_argument("unet: bad input shape " + xv.shape_str());
  const int div = 1 << cfg_.depth;
  if (xv.dim(2) % div != 0 || xv.dim(3) % div != 0)
    throw std::invalid_argument(
        "unet: input H,W must be divisible by " + std::to_string(div) +
        ", got " + xv.shape_str());

  const bool base_train = training && !base_frozen_;
  std::vector<Var> skips;
  Var h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    h = enc_[static_cast<size_t>(l)].forward(h, base_train);
    skips.push_back(h);
    h = maxpool2d(h, 2, 2, 0);
  }
  h = bottleneck_.forward(h, base_train);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    Var up = up_[static_cast<size_t>(l)].forward(h);
    Var seam = skips_[static_cast<size_t>(l)]->forward(
        up, skips[static_cast<size_t>(l)], training, mask_rng);
    h = dec_[static_cast<size_t>(l)].forward(seam, base_train);
  }
  return sigmoid(head_.forward(h));
}

std::vector<StateEntry> UNet::base_state() {
  std::vector<StateEntry> out;
  for (int l = 0; l < cfg_.depth; ++l)
    enc_[static_cast<size_t>(l)].state("enc" + std::to_string(l), out);
  bottleneck_.state("bottleneck", out);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    up_[static_cast<size_t>(l)].state("up" + std::to_string(l), out);
    dec_[static_cast<size_t>(l)].state("dec" + std::to_string(l), out);
  }
  head_.state("head", out);
  return out;
}

std::vector<StateEntry> UNet::cell_state() {
  std::vector<StateEntry> out;
  for (int l = cfg_.depth - 1; l >= 0; --l)
    skips_[static_cast<size_t>(l)]->state("skip" + std::to_string(l), out);
  return out;
}

std::vector<StateEntry> UNet::state() {
  std::vector<StateEntry> out = base_state();
  auto cells = cell_state();
  out.insert(out.end(), cells.begin(), cells.end());
  return out;
}

void UNet::freeze_base() {
  auto entries = base_state();
  set_trainable(entries, false);
  base_frozen_ = true;
}

int64_t UNet::param_count(bool trainable_only) {
  return count_params(state(), trainable_only);
}

std::unique_ptr<UNet> build_unet(const UNetConfig& cfg, SkipMode mode,
                                 const CellFactory* cell_factory, Rng& rng) {
  return std::make_unique<UNet>(cfg, mode, cell_factory, rng);
}

WeightDigest weight_digest(UNet& model, WeightScope scope) {
  switch (scope) {
    case WeightScope::base:
      return digest_state(model.base_state());
    case WeightScope::cell:
      return digest_state(model.cell_state());
    case WeightScope::all:
      break;
  }
  return digest_state(model.state());
}

void freeze_base_weights(UNet& model) { model.freeze_base(); }

CellFactory make_continuous_cell_factory(const SearchSpaceConfig& cfg,
                                         const ArchParams& arch,
                                         std::shared_ptr<Rng> init_rng) {
  return [cfg, arch, init_rng](int, int width, int out_width) {
    return std::make_unique<ContinuousCellSkip>(cfg, width, out_width, arch,
                                                *init_rng);
  };
}

CellFactory make_discrete_cell_factory(const SearchSpaceConfig& cfg,
                                       const Genotype& genotype,
                                       std::shared_ptr<Rng> init_rng) {
  return [cfg, genotype, init_rng](int, int width, int out_width) {
    return std::make_unique<DiscreteCellSkip>(cfg, width, out_width, genotype,
                                              *init_rng);
  };
}

}  // namespace iac
