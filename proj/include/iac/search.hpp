#pragma once

#include <functional>
#include <string>
#include <vector>

#include "iac/pipeline.hpp"

namespace iac {

struct SearchConfig {
  int epochs = 20;          // includes the warm-up epochs
  int warmup_epochs = 5;
  real omega_lr = 0.01;     // SGD, cosine-power annealed
  real omega_momentum = 0.0;
  real omega_weight_decay = 0.0;
  real omega_lr_min = 0.0;
  real schedule_power = 2.0;
  real arch_lr = 0.001;     // Adam, constant
  int batch_size = 16;
  int K = 4;
  std::vector<int> snapshot_epochs = {5, 10, 15, 20};
  uint64_t seed = 0;
  // Algorithm-1 ordering: architecture step before weight step within each z.
  // false flips to the paper's prose ordering (weights first).
  bool arch_first = true;

  void validate() const;
};

// Declared but unused by the paper; invoked once per epoch.
using LambdaSchedule = std::function<void(int epoch)>;

struct SearchHooks {
  // phase is "arch" or "omega"; z is the 1-based step within the epoch.
  std::function<void(const std::string& phase, int epoch, int z)> on_step;
  LambdaSchedule lambda_schedule;
};

struct SnapshotEntry {
  int epoch = 0;
  Genotype genotype;
  real train_loss = 0.0;
  real val_loss = 0.0;
  std::vector<std::vector<real>> psi;  // per node, current edge weights
  std::vector<std::vector<real>> phi;  // per edge, current op mixture
};

struct EpochStats {
  int epoch = 0;
  bool warmup = false;
  real train_loss = 0.0;
  real val_loss = 0.0;
};

struct GenotypeTrace {
  std::vector<EpochStats> epochs;
  std::vector<SnapshotEntry> snapshots;

  nlohmann::json to_json() const;
};

// Warm-up only: ω updates on train_search_dt, α/β untouched.
void warmup(UNet& supernet, const LoadedDataset& train_search,
            const SearchConfig& cfg);

// Stage II bi-level search. The supernet must be built with continuous cells
// sharing `arch`, base frozen. Writes trace.json, genotype_ep{N}.json,
// arch_ep{N}.bin and weights_final.ckpt into out_dir when non-empty.
GenotypeTrace run_search(UNet& supernet, ArchParams& arch,
                         const LoadedDataset& train_search,
                         const LoadedDataset& val_search,
                         const SearchSpaceConfig& space_cfg,
                         const SearchConfig& cfg,
                         const std::string& out_dir = "",
                         const SearchHooks& hooks = {});

// α/β container file helpers (checkpoint format, arch entries only).
std::vector<StateEntry> arch_state(ArchParams& arch);
void save_arch_params(const std::string& path, ArchParams& arch);
void load_arch_params(const std::string& path, ArchParams& arch);

}  // namespace iac
