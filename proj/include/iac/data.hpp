#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iac/rng.hpp"
#include "iac/tensor.hpp"

namespace iac {

struct SyntheticTaskSpec {
  enum class Task { shapes_easy, skip_dependent } task = Task::skip_dependent;
  int n_samples = 50;
  int height = 64;
  int width = 64;
  int classes = 1;
  real noise = 0.15;
  uint64_t seed = 0;

  void validate() const;
};

std::string task_name(SyntheticTaskSpec::Task t);
SyntheticTaskSpec::Task task_from_name(const std::string& name);

struct ManifestSample {
  std::string id;
  std::string image_path;  // relative to the manifest's directory
  std::string mask_path;
};

struct DatasetManifest {
  int version = 1;
  int channels = 1;  // image channels
  int classes = 1;   // mask channels
  int height = 0;
  int width = 0;
  std::vector<ManifestSample> samples;
  std::string root;  // directory holding manifest.json; not serialized

  void save(const std::string& dir) const;  // writes dir/manifest.json
  static DatasetManifest load(const std::string& dir);
  const ManifestSample& find(const std::string& id) const;
};

DatasetManifest generate_synthetic(const SyntheticTaskSpec& spec,
                                   const std::string& out_dir);

struct SplitSpec {
  std::vector<std::string> train_dt, val_dt, train_search_dt, val_search_dt;
  real train_fraction = 0.8;
  real search_fraction = 0.5;
  uint64_t seed = 0;

  void save(const std::string& path) const;
  static SplitSpec load(const std::string& path);
};

SplitSpec make_splits(const DatasetManifest& manifest, real train_fraction,
                      real search_fraction, uint64_t seed);

struct Sample {
  Tensor image;  // (C,H,W), z-scored per channel
  Tensor mask;   // (classes,H,W), binary
};

// target_h/target_w 0 means "use the stored size"; larger inputs are
// center-cropped, smaller ones zero-padded symmetrically.
Sample load_sample(const DatasetManifest& manifest, const std::string& id,
                   int target_h = 0, int target_w = 0);

// Whole split held in memory; desk-scale datasets are small.
struct LoadedDataset {
  std::vector<std::string> ids;
  std::vector<Tensor> images;  // each (C,H,W)
  std::vector<Tensor> masks;

  static LoadedDataset from(const DatasetManifest& manifest,
                            const std::vector<std::string>& ids);
  int size() const { return static_cast<int>(ids.size()); }
  Tensor batch_images(const std::vector<int>& idx) const;  // (B,C,H,W)
  Tensor batch_masks(const std::vector<int>& idx) const;
};

}  // namespace iac
