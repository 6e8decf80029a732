#include "iac/search.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

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

std::vector<real> tensor_to_vec(const Tensor& t) {
  std::vector<real> v(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) v[static_cast<size_t>(i)] = t[i];
  return v;
}

// Current Ψ (per node) and φ (per edge) summaries from the live parameters.
void arch_summaries(const ArchParams& arch, const SearchSpaceConfig& cfg,
                    std::vector<std::vector<real>>& psi,
                    std::vector<std::vector<real>>& phi) {
  psi.clear();
  phi.clear();
  for (int j = 0; j < cfg.n_nodes; ++j) {
    const auto beta =
        tensor_to_vec(arch.beta.node_logits[static_cast<size_t>(j)].value());
    psi.push_back(cfg.edge_norm_mode == SearchSpaceConfig::EdgeNorm::pcdarts
                      ? edge_weights_pcdarts(beta)
                      : edge_weights_tan_rescaled(beta));
  }
  const Tensor& al = arch.alpha.logits.value();
  for (int e = 0; e < cfg.n_edges(); ++e) {
    std::vector<real> logits(static_cast<size_t>(cfg.n_ops()));
    for (int o = 0; o < cfg.n_ops(); ++o)
      logits[static_cast<size_t>(o)] =
          al[static_cast<int64_t>(e) * cfg.n_ops() + o];
    phi.push_back(op_mixture_weights(logits));
  }
}

struct BatchPlan {
  std::vector<std::vector<int>> batches;
};

BatchPlan plan_epoch(const LoadedDataset& data, int batch_size, Rng rng) {
  std::vector<int> order(static_cast<size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order);
  BatchPlan plan;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int end = std::min(data.size(), start + batch_size);
    plan.batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return plan;
}

real train_step(UNet& net, const LoadedDataset& data,
                const std::vector<int>& batch, Rng& mask_rng,
                const std::function<void()>& zero,
                const std::function<void()>& apply, int epoch,
                const char* what) {
  Var x(data.batch_images(batch));
  const Tensor y = data.batch_masks(batch);
  Var pred = net.forward(x, /*training=*/true, &mask_rng);
  Var loss = dice_loss(pred, y);
  const real lv = loss.value()[0];
  if (!std::isfinite(lv))
    throw DivergenceError(std::string("search diverged: non-finite ") + what +
                          " loss at epoch " + std::to_string(epoch));
  zero();
  backward(loss);
  apply();
  return lv;
}

}  // namespace

void SearchConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("SearchConfig: epochs < 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs)
    throw std::invalid_argument(
        "SearchConfig: warmup_epochs must be in [0, epochs)");
  if (omega_lr < 0.0 || arch_lr < 0.0)
    throw std::invalid_argument("SearchConfig: negative learning rate");
  if (batch_size < 1) throw std::invalid_argument("SearchConfig: batch_size < 1");
  if (K < 1) throw std::invalid_argument("SearchConfig: K < 1");
  if (schedule_power < 1.0)
    throw std::invalid_argument("SearchConfig: schedule_power < 1");
  for (int e : snapshot_epochs)
    if (e < 1 || e > epochs)
      throw std::invalid_argument("SearchConfig: snapshot epoch " +
                                  std::to_string(e) + " outside [1, epochs]");
}

nlohmann::json GenotypeTrace::to_json() const {
  nlohmann::json doc;
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch},
                  {"phase", e.warmup ? "warmup" : "search"},
                  {"train_loss", e.train_loss},
                  {"val_loss", e.val_loss}});
  }
  doc["epochs"] = ep;
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& s : snapshots) {
    snaps.push_back(
        {{"epoch", s.epoch},
         {"genotype", nlohmann::json::parse(genotype_to_json(s.genotype))},
         {"train_loss", s.train_loss},
         {"val_loss", s.val_loss},
         {"psi", s.psi},
         {"phi", s.phi}});
  }
  doc["snapshots"] = snaps;
  return doc;
}

std::vector<StateEntry> arch_state(ArchParams& arch) {
  std::vector<StateEntry> out;
  out.push_back({"alpha", arch.alpha.logits, nullptr});
  for (size_t j = 0; j < arch.beta.node_logits.size(); ++j)
    out.push_back({"beta.n" + std::to_string(j), arch.beta.node_logits[j],
                   nullptr});
  return out;
}

void save_arch_params(const std::string& path, ArchParams& arch) {
  nlohmann::json cfg;
  cfg["kind"] = "arch_params";
  save_checkpoint(path, cfg, arch_state(arch));
}

void load_arch_params(const std::string& path, ArchParams& arch) {
  load_checkpoint_into(path, arch_state(arch));
}

void warmup(UNet& supernet, const LoadedDataset& train_search,
            const SearchConfig& cfg) {
  cfg.validate();
  if (train_search.size() == 0)
    throw std::invalid_argument("warmup: empty search split");
  if (!supernet.base_frozen())
    throw std::invalid_argument("warmup: base weights must be frozen");
  const auto omega_params = trainable_params(supernet.cell_state());
  if (omega_params.empty())
    throw std::invalid_argument("warmup: no trainable cell weights");
  Sgd opt(omega_params, cfg.omega_lr, cfg.omega_momentum,
          cfg.omega_weight_decay);
  Rng rng(cfg.seed);
  Rng mask_rng = rng.fork(100);
  for (int epoch = 1; epoch <= cfg.warmup_epochs; ++epoch) {
    const BatchPlan plan =
        plan_epoch(train_search, cfg.batch_size, rng.fork(1000 + epoch));
    for (const auto& batch : plan.batches)
      train_step(supernet, train_search, batch, mask_rng,
                 [&]() { opt.zero_grad(); }, [&]() { opt.step(); }, epoch,
                 "warmup");
  }
}

GenotypeTrace run_search(UNet& supernet, ArchParams& arch,
                         const LoadedDataset& train_search,
                         const LoadedDataset& val_search,
                         const SearchSpaceConfig& space_cfg,
                         const SearchConfig& cfg, const std::string& out_dir,
                         const SearchHooks& hooks) {
  cfg.validate();
  space_cfg.validate();
  if (train_search.size() != val_search.size())
    throw std::invalid_argument(
        "run_search: train_search and val_search must be equal-sized");
  if (train_search.size() == 0)
    throw std::invalid_argument("run_search: empty search split");
  if (!supernet.base_frozen())
    throw std::invalid_argument("run_search: base weights must be frozen");

  if (!out_dir.empty()) fs::create_directories(out_dir);

  const WeightDigest base_digest_0 =
      weight_digest(supernet, WeightScope::base);

  const auto omega_params = trainable_params(supernet.cell_state());
  if (omega_params.empty())
    throw std::invalid_argument("run_search: no trainable cell weights");
  const auto arch_params = arch.params();

  Sgd omega_opt(omega_params, cfg.omega_lr, cfg.omega_momentum,
                cfg.omega_weight_decay);
  Adam arch_opt(arch_params, cfg.arch_lr);

  Rng rng(cfg.seed);
  Rng mask_rng = rng.fork(100);

  const int Z_train = static_cast<int>(
      batch_indices(train_search.size(), cfg.batch_size).size());
  const int64_t total_omega_steps =
      static_cast<int64_t>(cfg.epochs) * Z_train;
  int64_t omega_step = 0;

  GenotypeTrace trace;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (hooks.lambda_schedule) hooks.lambda_schedule(epoch);
    const bool in_warmup = epoch <= cfg.warmup_epochs;

    const BatchPlan train_plan =
        plan_epoch(train_search, cfg.batch_size, rng.fork(1000 + epoch));
    const BatchPlan val_plan =
        plan_epoch(val_search, cfg.batch_size, rng.fork(2000 + epoch));
    const int Z = static_cast<int>(train_plan.batches.size());

    real train_loss_sum = 0.0;
    real val_loss_sum = 0.0;
    int64_t train_seen = 0, val_seen = 0;

    for (int z = 0; z < Z; ++z) {
      const auto& tb = train_plan.batches[static_cast<size_t>(z)];

      auto arch_step = [&]() {
        const auto& vb =
            val_plan.batches[static_cast<size_t>(z % val_plan.batches.size())];
        if (hooks.on_step) hooks.on_step("arch", epoch, z + 1);
        const real lv = train_step(
            supernet, val_search, vb, mask_rng,
            [&]() { arch_opt.zero_grad(); }, [&]() { arch_opt.step(); }, epoch,
            "val");
        val_loss_sum += lv * static_cast<real>(vb.size());
        val_seen += static_cast<int64_t>(vb.size());
      };
      auto omega_step_fn = [&]() {
        if (hooks.on_step) hooks.on_step("omega", epoch, z + 1);
        omega_opt.set_lr(lr_schedule_cosine_power(
            omega_step, total_omega_steps, cfg.omega_lr, cfg.omega_lr_min,
            cfg.schedule_power));
        const real lv = train_step(
            supernet, train_search, tb, mask_rng,
            [&]() { omega_opt.zero_grad(); }, [&]() { omega_opt.step(); },
            epoch, "train");
        train_loss_sum += lv * static_cast<real>(tb.size());
        train_seen += static_cast<int64_t>(tb.size());
        ++omega_step;
      };

      if (in_warmup) {
        omega_step_fn();
      } else if (cfg.arch_first) {
        arch_step();
        omega_step_fn();
      } else {
        omega_step_fn();
        arch_step();
      }
    }

    for (const Var& p : arch_params)
      if (!p.value().all_finite()) {
        if (!out_dir.empty())
          save_arch_params(
              (fs::path(out_dir) / "arch_diverged.bin").string(), arch);
        throw DivergenceError("search diverged: non-finite arch params at "
                              "epoch " +
                              std::to_string(epoch));
      }

    if (weight_digest(supernet, WeightScope::base) != base_digest_0)
      throw FreezeViolation("run_search: frozen base digest changed at epoch " +
                            std::to_string(epoch));

    EpochStats es;
    es.epoch = epoch;
    es.warmup = in_warmup;
    es.train_loss =
        train_seen > 0 ? train_loss_sum / static_cast<real>(train_seen) : 0.0;
    es.val_loss =
        val_seen > 0 ? val_loss_sum / static_cast<real>(val_seen) : 0.0;
    trace.epochs.push_back(es);

    if (std::find(cfg.snapshot_epochs.begin(), cfg.snapshot_epochs.end(),
                  epoch) != cfg.snapshot_epochs.end()) {
      SnapshotEntry snap;
      snap.epoch = epoch;
      snap.genotype = discretize(arch, space_cfg);
      snap.genotype.meta["epoch"] = epoch;
      snap.genotype.meta["seed"] = cfg.seed;
      snap.train_loss = es.train_loss;
      snap.val_loss = es.val_loss;
      arch_summaries(arch, space_cfg, snap.psi, snap.phi);
      if (!out_dir.empty()) {
        write_text_file((fs::path(out_dir) /
                         ("genotype_ep" + std::to_string(epoch) + ".json"))
                            .string(),
                        genotype_to_json(snap.genotype));
        save_arch_params(
            (fs::path(out_dir) / ("arch_ep" + std::to_string(epoch) + ".bin"))
                .string(),
            arch);
      }
      trace.snapshots.push_back(std::move(snap));
    }
  }

  if (!out_dir.empty()) {
    write_text_file((fs::path(out_dir) / "trace.json").string(),
                    trace.to_json().dump(2) + "\n");
    nlohmann::json wcfg;
    wcfg["kind"] = "search_cell_weights";
    auto cell_entries = supernet.cell_state();
    save_checkpoint((fs::path(out_dir) / "weights_final.ckpt").string(), wcfg,
                    cell_entries);
  }
  return trace;
}

}  // namespace iac
