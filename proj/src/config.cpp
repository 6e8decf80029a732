#include "iac/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include "iac/errors.hpp"
#include "iac/search_space.hpp"

namespace iac {
namespace {

using nlohmann::json;

void check_keys(const json& j, const char* section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ParseError(std::string(section) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ParseError("unknown key '" + it.key() + "' in " + section);
  }
}

template <typename T>
T field(const json& j, const char* section, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad value for ") + section + "." + key +
                     ": " + e.what());
  }
}

UNetConfig::Backbone backbone_from_name(const std::string& name) {
  if (name == "base") return UNetConfig::Backbone::base;
  if (name == "narrow") return UNetConfig::Backbone::narrow;
  if (name == "wide") return UNetConfig::Backbone::wide;
  throw ParseError("unknown backbone '" + name + "'");
}

}  // namespace

nlohmann::json unet_config_to_json(const UNetConfig& c) {
  return json{{"depth", c.depth},
              {"base_width", c.base_width},
              {"width_multiplier", c.width_multiplier},
              {"in_channels", c.in_channels},
              {"out_channels", c.out_channels},
              {"backbone", c.backbone_name()}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
  check_keys(j, "unet",
             {"depth", "base_width", "width_multiplier", "in_channels",
              "out_channels", "backbone"});
  UNetConfig c;
  c.depth = field(j, "unet", "depth", c.depth);
  c.base_width = field(j, "unet", "base_width", c.base_width);
  c.width_multiplier = field(j, "unet", "width_multiplier", c.width_multiplier);
  c.in_channels = field(j, "unet", "in_channels", c.in_channels);
  c.out_channels = field(j, "unet", "out_channels", c.out_channels);
  c.backbone = backbone_from_name(
      field<std::string>(j, "unet", "backbone", c.backbone_name()));
  return c;
}

nlohmann::json space_config_to_json(const SearchSpaceConfig& c) {
  json ops = json::array();
  for (OpKind k : c.ops) ops.push_back(op_name(k));
  return json{{"n_nodes", c.n_nodes},
              {"n_inputs", c.n_inputs},
              {"ops", ops},
              {"K", c.K},
              {"edge_norm",
               c.edge_norm_mode == SearchSpaceConfig::EdgeNorm::tan_rescaled
                   ? "tan_rescaled"
                   : "pcdarts"}};
}

SearchSpaceConfig space_config_from_json(const nlohmann::json& j) {
  check_keys(j, "space", {"n_nodes", "n_inputs", "ops", "K", "edge_norm"});
  SearchSpaceConfig c;
  c.n_nodes = field(j, "space", "n_nodes", c.n_nodes);
  c.n_inputs = field(j, "space", "n_inputs", c.n_inputs);
  if (j.contains("ops")) {
    if (!j.at("ops").is_array())
      throw ParseError("space.ops must be an array of op names");
    c.ops.clear();
    for (const auto& o : j.at("ops")) {
      if (!o.is_string())
        throw ParseError("space.ops entries must be strings");
      c.ops.push_back(op_from_name(o.get<std::string>()));
    }
  }
  c.K = field(j, "space", "K", c.K);
  const std::string mode = field<std::string>(
      j, "space", "edge_norm",
      c.edge_norm_mode == SearchSpaceConfig::EdgeNorm::tan_rescaled
          ? "tan_rescaled"
          : "pcdarts");
  if (mode == "tan_rescaled")
    c.edge_norm_mode = SearchSpaceConfig::EdgeNorm::tan_rescaled;
  else if (mode == "pcdarts")
    c.edge_norm_mode = SearchSpaceConfig::EdgeNorm::pcdarts;
  else
    throw ParseError("unknown edge_norm '" + mode + "'");
  return c;
}

nlohmann::json stage_config_to_json(const StageConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"seed", c.seed}};
}

StageConfig stage_config_from_json(const nlohmann::json& j) {
  check_keys(j, "stage", {"epochs", "lr", "batch_size", "seed"});
  StageConfig c;
  c.epochs = field(j, "stage", "epochs", c.epochs);
  c.lr = field(j, "stage", "lr", c.lr);
  c.batch_size = field(j, "stage", "batch_size", c.batch_size);
  c.seed = field(j, "stage", "seed", c.seed);
  return c;
}

nlohmann::json search_config_to_json(const SearchConfig& c) {
  return json{{"epochs", c.epochs},
              {"warmup_epochs", c.warmup_epochs},
              {"omega_lr", c.omega_lr},
              {"omega_momentum", c.omega_momentum},
              {"omega_weight_decay", c.omega_weight_decay},
              {"omega_lr_min", c.omega_lr_min},
              {"schedule_power", c.schedule_power},
              {"arch_lr", c.arch_lr},
              {"batch_size", c.batch_size},
              {"K", c.K},
              {"snapshot_epochs", c.snapshot_epochs},
              {"seed", c.seed},
              {"arch_first", c.arch_first}};
}

SearchConfig search_config_from_json(const nlohmann::json& j) {
  check_keys(j, "search",
             {"epochs", "warmup_epochs", "omega_lr", "omega_momentum",
              "omega_weight_decay", "omega_lr_min", "schedule_power",
              "arch_lr", "batch_size", "K", "snapshot_epochs", "seed",
              "arch_first"});
  SearchConfig c;
  c.epochs = field(j, "search", "epochs", c.epochs);
  c.warmup_epochs = field(j, "search", "warmup_epochs", c.warmup_epochs);
  c.omega_lr = field(j, "search", "omega_lr", c.omega_lr);
  c.omega_momentum = field(j, "search", "omega_momentum", c.omega_momentum);
  c.omega_weight_decay =
      field(j, "search", "omega_weight_decay", c.omega_weight_decay);
  c.omega_lr_min = field(j, "search", "omega_lr_min", c.omega_lr_min);
  c.schedule_power = field(j, "search", "schedule_power", c.schedule_power);
  c.arch_lr = field(j, "search", "arch_lr", c.arch_lr);
  c.batch_size = field(j, "search", "batch_size", c.batch_size);
  c.K = field(j, "search", "K", c.K);
  c.snapshot_epochs =
      field(j, "search", "snapshot_epochs", c.snapshot_epochs);
  c.seed = field(j, "search", "seed", c.seed);
  c.arch_first = field(j, "search", "arch_first", c.arch_first);
  return c;
}

nlohmann::json dataset_spec_to_json(const SyntheticTaskSpec& c) {
  return json{{"task", task_name(c.task)}, {"n_samples", c.n_samples},
              {"height", c.height},        {"width", c.width},
              {"classes", c.classes},      {"noise", c.noise},
              {"seed", c.seed}};
}

SyntheticTaskSpec dataset_spec_from_json(const nlohmann::json& j) {
  check_keys(j, "dataset",
             {"task", "n_samples", "height", "width", "classes", "noise",
              "seed"});
  SyntheticTaskSpec c;
  c.task =
      task_from_name(field<std::string>(j, "dataset", "task", task_name(c.task)));
  c.n_samples = field(j, "dataset", "n_samples", c.n_samples);
  c.height = field(j, "dataset", "height", c.height);
  c.width = field(j, "dataset", "width", c.width);
  c.classes = field(j, "dataset", "classes", c.classes);
  c.noise = field(j, "dataset", "noise", c.noise);
  c.seed = field(j, "dataset", "seed", c.seed);
  return c;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  unet.validate();
  space.validate();
  stage1.validate();
  stage2.validate();
  stage3.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction outside (0,1)");
  if (!(search_fraction > 0.0 && search_fraction < 1.0))
    throw std::invalid_argument("search_fraction outside (0,1)");
  if (space.K != stage2.K)
    throw std::invalid_argument("space.K and stage2.K disagree");
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  return json{{"dataset", dataset_spec_to_json(c.dataset)},
              {"train_fraction", c.train_fraction},
              {"search_fraction", c.search_fraction},
              {"split_seed", c.split_seed},
              {"unet", unet_config_to_json(c.unet)},
              {"space", space_config_to_json(c.space)},
              {"stage1", stage_config_to_json(c.stage1)},
              {"stage2", search_config_to_json(c.stage2)},
              {"stage3", stage_config_to_json(c.stage3)}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  check_keys(j, "experiment",
             {"dataset", "train_fraction", "search_fraction", "split_seed",
              "unet", "space", "stage1", "stage2", "stage3"});
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = dataset_spec_from_json(j.at("dataset"));
  c.train_fraction = field(j, "experiment", "train_fraction", c.train_fraction);
  c.search_fraction =
      field(j, "experiment", "search_fraction", c.search_fraction);
  c.split_seed = field(j, "experiment", "split_seed", c.split_seed);
  if (j.contains("unet")) c.unet = unet_config_from_json(j.at("unet"));
  if (j.contains("space")) c.space = space_config_from_json(j.at("space"));
  if (j.contains("stage1")) c.stage1 = stage_config_from_json(j.at("stage1"));
  if (j.contains("stage2")) c.stage2 = search_config_from_json(j.at("stage2"));
  if (j.contains("stage3")) c.stage3 = stage_config_from_json(j.at("stage3"));
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what());
  }
  ExperimentConfig c = experiment_config_from_json(j);
  c.validate();
  return c;
}

}  // namespace iac
