#pragma once

#include <memory>
#include <string>
#include <vector>

#include "iac/checkpoint.hpp"
#include "iac/data.hpp"
#include "iac/unet.hpp"

namespace iac {

struct StageConfig {
  int epochs = 30;
  real lr = 1e-3;  // Adam, constant
  int batch_size = 16;
  uint64_t seed = 0;

  void validate() const;
};

struct EvalReport {
  real mean_dice = 0.0;
  std::vector<real> per_class_dice;
  std::vector<real> train_loss;  // per epoch
  std::vector<real> val_loss;
  std::vector<real> val_dice;
  real runtime_seconds = 0.0;  // excluded from to_json; see timings sidecar

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  std::string curves_csv() const;  // epoch,train_loss,val_loss,val_dice
};

// Mean over (sample, class) of the eps-smoothed dice overlap. Accepts
// (C,H,W) or (N,C,H,W); shapes must match.
real dice_score(const Tensor& probs, const Tensor& target, real eps = 1e-6);

struct TrainResult {
  std::unique_ptr<UNet> model;
  EvalReport report;
};

// Stage I: concat-skip U-Net trained on train_dt, best-val-Dice checkpoint
// restored into the returned model. If out_dir is non-empty, writes
// baseline.ckpt, report.json, curves.csv and timings.json there.
TrainResult train_baseline(const UNetConfig& unet_cfg, const StageConfig& cfg,
                           const DatasetManifest& manifest,
                           const SplitSpec& splits,
                           const std::string& out_dir = "");

// Stage III: build a discrete-cell U-Net from the genotype, load the frozen
// base from the Stage I checkpoint, train only cell weights. Verifies the
// base digest never changes. Writes implant.ckpt + reports if out_dir given.
TrainResult implant_and_train(const std::string& baseline_ckpt,
                              const Genotype& genotype,
                              const SearchSpaceConfig& space_cfg,
                              const UNetConfig& unet_cfg,
                              const StageConfig& cfg,
                              const DatasetManifest& manifest,
                              const SplitSpec& splits,
                              const std::string& out_dir = "");

// Deterministic metric pass over one id list; no weight mutation.
EvalReport evaluate(UNet& model, const LoadedDataset& data, int batch_size);

// Batched id-order evaluation helpers shared with the search engine.
std::vector<std::vector<int>> batch_indices(int n, int batch_size);

}  // namespace iac
