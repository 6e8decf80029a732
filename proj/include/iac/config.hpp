#pragma once

#include <string>

#include <json.hpp>

#include "iac/data.hpp"
#include "iac/pipeline.hpp"
#include "iac/search.hpp"
#include "iac/unet.hpp"

namespace iac {

// Full experiment description; every section has defaults and unknown keys
// are rejected so typos fail loudly.
struct ExperimentConfig {
  SyntheticTaskSpec dataset;
  real train_fraction = 0.8;
  real search_fraction = 0.5;
  uint64_t split_seed = 1;
  UNetConfig unet;
  SearchSpaceConfig space;
  StageConfig stage1;
  SearchConfig stage2;
  StageConfig stage3;

  void validate() const;
};

nlohmann::json unet_config_to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);
nlohmann::json space_config_to_json(const SearchSpaceConfig& c);
SearchSpaceConfig space_config_from_json(const nlohmann::json& j);
nlohmann::json stage_config_to_json(const StageConfig& c);
StageConfig stage_config_from_json(const nlohmann::json& j);
nlohmann::json search_config_to_json(const SearchConfig& c);
SearchConfig search_config_from_json(const nlohmann::json& j);
nlohmann::json dataset_spec_to_json(const SyntheticTaskSpec& c);
SyntheticTaskSpec dataset_spec_from_json(const nlohmann::json& j);

nlohmann::json experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace iac
