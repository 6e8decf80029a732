#include "iac/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "iac/config.hpp"
#include "iac/errors.hpp"
#include "iac/optim.hpp"

namespace fs = std::filesystem;

namespace iac {
namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

void write_report_files(const std::string& out_dir, const EvalReport& report) {
  write_text_file((fs::path(out_dir) / "report.json").string(),
                  report.to_json().dump(2) + "\n");
  write_text_file((fs::path(out_dir) / "curves.csv").string(),
                  report.curves_csv());
  nlohmann::json timings;
  timings["runtime_seconds"] = report.runtime_seconds;
  write_text_file((fs::path(out_dir) / "timings.json").string(),
                  timings.dump(2) + "\n");
}

// State snapshot for the best-val-Dice checkpoint policy.
std::vector<Tensor> copy_state_values(const std::vector<StateEntry>& entries) {
  std::vector<Tensor> out;
  out.reserve(entries.size());
  for (const auto& e : entries)
    out.push_back(e.is_param() ? e.var.value() : *e.buffer);
  return out;
}

void restore_state_values(const std::vector<StateEntry>& entries,
                          const std::vector<Tensor>& values) {
  for (size_t i = 0; i < entries.size(); ++i) {
    const StateEntry& e = entries[i];
    if (e.is_param())
      const_cast<Var&>(e.var).value() = values[i];
    else
      *e.buffer = values[i];
  }
}

struct ValMetrics {
  real loss = 0.0;
  real mean_dice = 0.0;
  std::vector<real> per_class;
};

ValMetrics eval_pass(UNet& model, const LoadedDataset& data, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
  const int classes = data.masks[0].dim(0);
  std::vector<real> class_sum(static_cast<size_t>(classes), 0.0);
  real loss_sum = 0.0;
  for (const auto& batch : batch_indices(data.size(), batch_size)) {
    Var x(data.batch_images(batch));
    const Tensor y = data.batch_masks(batch);
    Var pred = model.forward(x, /*training=*/false);
    if (!pred.value().all_finite())
      throw DivergenceError("evaluate: non-finite prediction");
    loss_sum += (1.0 - dice_score(pred.value(), y)) *
                static_cast<real>(batch.size());
    // Per-sample, per-class accumulation for the class table.
    const Tensor& pv = pred.value();
    const int64_t plane =
        static_cast<int64_t>(pv.dim(2)) * pv.dim(3);
    for (size_t b = 0; b < batch.size(); ++b) {
      for (int c = 0; c < classes; ++c) {
        real inter = 0.0, psum = 0.0, gsum = 0.0;
        const real* pp =
            pv.data() + pv.idx4(static_cast<int>(b), c, 0, 0);
        const real* gp = y.data() + y.idx4(static_cast<int>(b), c, 0, 0);
        for (int64_t i = 0; i < plane; ++i) {
          inter += pp[i] * gp[i];
          psum += pp[i];
          gsum += gp[i];
        }
        class_sum[static_cast<size_t>(c)] +=
            (2.0 * inter + 1e-6) / (psum + gsum + 1e-6);
      }
    }
  }
  ValMetrics m;
  m.loss = loss_sum / static_cast<real>(data.size());
  m.per_class.resize(static_cast<size_t>(classes));
  real total = 0.0;
  for (int c = 0; c < classes; ++c) {
    m.per_class[static_cast<size_t>(c)] =
        class_sum[static_cast<size_t>(c)] / static_cast<real>(data.size());
    total += m.per_class[static_cast<size_t>(c)];
  }
  m.mean_dice = total / static_cast<real>(classes);
  return m;
}

// Shared Stage I / Stage III loop: Adam on `params`, best-val-Dice snapshot
// restored before returning.
EvalReport run_stage(UNet& model, const std::vector<Var>& params,
                     const LoadedDataset& train, const LoadedDataset& val,
                     const StageConfig& cfg, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  Adam opt(params, cfg.lr);
  EvalReport report;
  real best_dice = -1.0;
  std::vector<Tensor> best_state;
  auto entries = model.state();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(static_cast<size_t>(train.size()));
    for (int i = 0; i < train.size(); ++i) order[static_cast<size_t>(i)] = i;
    Rng erng = rng.fork(static_cast<uint64_t>(epoch));
    erng.shuffle(order);

    real loss_sum = 0.0;
    int64_t step = 0;
    for (int start = 0; start < train.size(); start += cfg.batch_size) {
      const int end = std::min(train.size(), start + cfg.batch_size);
      std::vector<int> batch(order.begin() + start, order.begin() + end);
      Var x(train.batch_images(batch));
      const Tensor y = train.batch_masks(batch);
      Var pred = model.forward(x, /*training=*/true);
      Var loss = dice_loss(pred, y);
      const real lv = loss.value()[0];
      if (!std::isfinite(lv))
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch) + " step " +
                              std::to_string(step));
      opt.zero_grad();
      backward(loss);
      opt.step();
      loss_sum += lv * static_cast<real>(batch.size());
      ++step;
    }
    report.train_loss.push_back(loss_sum / static_cast<real>(train.size()));

    const ValMetrics vm = eval_pass(model, val, cfg.batch_size);
    report.val_loss.push_back(vm.loss);
    report.val_dice.push_back(vm.mean_dice);
    if (vm.mean_dice > best_dice) {
      best_dice = vm.mean_dice;
      best_state = copy_state_values(entries);
    }
  }

  restore_state_values(entries, best_state);
  const ValMetrics final_vm = eval_pass(model, val, cfg.batch_size);
  report.mean_dice = final_vm.mean_dice;
  report.per_class_dice = final_vm.per_class;
  report.runtime_seconds =
      std::chrono::duration<real>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace

void StageConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("StageConfig: epochs < 1");
  if (lr <= 0.0) throw std::invalid_argument("StageConfig: lr <= 0");
  if (batch_size < 1) throw std::invalid_argument("StageConfig: batch_size < 1");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json doc;
  doc["mean_dice"] = mean_dice;
  doc["per_class_dice"] = per_class_dice;
  doc["train_loss"] = train_loss;
  doc["val_loss"] = val_loss;
  doc["val_dice"] = val_dice;
  return doc;
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport r;
  try {
    r.mean_dice = doc.at("mean_dice").get<real>();
    r.per_class_dice = doc.at("per_class_dice").get<std::vector<real>>();
    r.train_loss = doc.at("train_loss").get<std::vector<real>>();
    r.val_loss = doc.at("val_loss").get<std::vector<real>>();
    r.val_dice = doc.at("val_dice").get<std::vector<real>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

std::string EvalReport::curves_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_dice\n";
  char buf[128];
  for (size_t i = 0; i < train_loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i + 1,
                  train_loss[i], val_loss[i], val_dice[i]);
    out += buf;
  }
  return out;
}

real dice_score(const Tensor& probs, const Tensor& target, real eps) {
  if (!probs.same_shape(target))
    throw std::invalid_argument("dice_score: shape mismatch " +
                                probs.shape_str() + " vs " +
                                target.shape_str());
  if (probs.rank() != 3 && probs.rank() != 4)
    throw std::invalid_argument("dice_score: expected rank 3 or 4");
  const int n = probs.rank() == 4 ? probs.dim(0) : 1;
  const int c = probs.rank() == 4 ? probs.dim(1) : probs.dim(0);
  const int64_t plane = probs.size() / (static_cast<int64_t>(n) * c);
  real total = 0.0;
  for (int64_t nc = 0; nc < static_cast<int64_t>(n) * c; ++nc) {
    const real* p = probs.data() + nc * plane;
    const real* g = target.data() + nc * plane;
    real inter = 0.0, psum = 0.0, gsum = 0.0;
    for (int64_t i = 0; i < plane; ++i) {
      inter += p[i] * g[i];
      psum += p[i];
      gsum += g[i];
    }
    total += (2.0 * inter + eps) / (psum + gsum + eps);
  }
  return total / (static_cast<real>(n) * c);
}

std::vector<std::vector<int>> batch_indices(int n, int batch_size) {
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch_size) {
    std::vector<int> batch;
    for (int i = start; i < std::min(n, start + batch_size); ++i)
      batch.push_back(i);
    out.push_back(std::move(batch));
  }
  return out;
}

TrainResult train_baseline(const UNetConfig& unet_cfg, const StageConfig& cfg,
                           const DatasetManifest& manifest,
                           const SplitSpec& splits,
                           const std::string& out_dir) {
  unet_cfg.validate();
  cfg.validate();
  Rng rng(cfg.seed);
  Rng init_rng = rng.fork(0);
  auto model = build_unet(unet_cfg, SkipMode::concat, nullptr, init_rng);

  const LoadedDataset train = LoadedDataset::from(manifest, splits.train_dt);
  const LoadedDataset val = LoadedDataset::from(manifest, splits.val_dt);

  const auto params = trainable_params(model->state());
  Rng loop_rng = rng.fork(1);
  EvalReport report = run_stage(*model, params, train, val, cfg, loop_rng);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json ckpt_cfg;
    ckpt_cfg["unet"] = unet_config_to_json(unet_cfg);
    ckpt_cfg["skip_mode"] = skip_mode_name(SkipMode::concat);
    save_checkpoint((fs::path(out_dir) / "baseline.ckpt").string(), ckpt_cfg,
                    model->state());
    write_report_files(out_dir, report);
  }
  return {std::move(model), std::move(report)};
}

TrainResult implant_and_train(const std::string& baseline_ckpt,
                              const Genotype& genotype,
                              const SearchSpaceConfig& space_cfg,
                              const UNetConfig& unet_cfg,
                              const StageConfig& cfg,
                              const DatasetManifest& manifest,
                              const SplitSpec& splits,
                              const std::string& out_dir) {
  unet_cfg.validate();
  cfg.validate();
  genotype.validate(space_cfg.n_inputs);
  Rng rng(cfg.seed);

  Rng base_rng = rng.fork(0);
  auto cell_rng = std::make_shared<Rng>(rng.fork(1));
  CellFactory factory =
      make_discrete_cell_factory(space_cfg, genotype, cell_rng);
  auto model = build_unet(unet_cfg, SkipMode::discrete_cell, &factory,
                          base_rng);

  load_checkpoint_into(baseline_ckpt, model->base_state());
  freeze_base_weights(*model);
  const WeightDigest base_digest = weight_digest(*model, WeightScope::base);

  const LoadedDataset train = LoadedDataset::from(manifest, splits.train_dt);
  const LoadedDataset val = LoadedDataset::from(manifest, splits.val_dt);

  const auto params = trainable_params(model->state());
  if (params.empty())
    throw std::invalid_argument("implant_and_train: no trainable cell weights");
  Rng loop_rng = rng.fork(2);
  EvalReport report = run_stage(*model, params, train, val, cfg, loop_rng);

  if (weight_digest(*model, WeightScope::base) != base_digest)
    throw FreezeViolation("implant_and_train: base weights changed");

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json ckpt_cfg;
    ckpt_cfg["unet"] = unet_config_to_json(unet_cfg);
    ckpt_cfg["skip_mode"] = skip_mode_name(SkipMode::discrete_cell);
    ckpt_cfg["space"] = space_config_to_json(space_cfg);
    ckpt_cfg["genotype"] = nlohmann::json::parse(genotype_to_json(genotype));
    save_checkpoint((fs::path(out_dir) / "implant.ckpt").string(), ckpt_cfg,
                    model->state());
    write_report_files(out_dir, report);
  }
  return {std::move(model), std::move(report)};
}

EvalReport evaluate(UNet& model, const LoadedDataset& data, int batch_size) {
  const ValMetrics vm = eval_pass(model, data, batch_size);
  EvalReport report;
  report.mean_dice = vm.mean_dice;
  report.per_class_dice = vm.per_class;
  return report;
}

}  // namespace iac
