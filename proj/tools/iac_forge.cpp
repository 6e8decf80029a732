// iac-forge: one binary driving the whole workflow — synthetic data,
// splits, baseline training, cell search, implantation, evaluation and
// report tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "iac/cell.hpp"
#include "iac/checkpoint.hpp"
#include "iac/config.hpp"
#include "iac/data.hpp"
#include "iac/errors.hpp"
#include "iac/pipeline.hpp"
#include "iac/report.hpp"
#include "iac/search.hpp"
#include "iac/unet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw iac::ParseError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw iac::ParseError("invalid JSON in " + path + ": " + e.what());
  }
}

struct Globals {
  std::string config_path;
  long long seed = -1;  // < 0 keeps the config's per-stage seeds
  std::string out = "out";
  bool deterministic = false;
};

// Runs are bit-reproducible at any thread count (reductions are
// order-fixed); the flag pins to one thread anyway for paranoid replays.
void apply_globals(const Globals& g) {
#ifdef _OPENMP
  if (g.deterministic) omp_set_num_threads(1);
#else
  (void)g;
#endif
}

iac::ExperimentConfig effective_config(const Globals& g) {
  iac::ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = iac::load_experiment_config(g.config_path);
  if (g.seed >= 0) {
    const auto s = static_cast<uint64_t>(g.seed);
    cfg.dataset.seed = s;
    cfg.split_seed = s;
    cfg.stage1.seed = s;
    cfg.stage2.seed = s;
    cfg.stage3.seed = s;
  }
  cfg.validate();
  return cfg;
}

// Rebuild the model a checkpoint was saved from, using its own header.
std::unique_ptr<iac::UNet> model_from_checkpoint(
    const std::string& ckpt_path) {
  const iac::CheckpointInfo info = iac::read_checkpoint_header(ckpt_path);
  if (!info.config.contains("unet"))
    throw iac::ParseError("checkpoint " + ckpt_path +
                          " carries no model config");
  const iac::UNetConfig ucfg =
      iac::unet_config_from_json(info.config.at("unet"));
  const iac::SkipMode mode =
      iac::skip_mode_from_name(info.config.at("skip_mode").get<std::string>());
  iac::Rng rng(0);  // init values are overwritten by the load below
  std::unique_ptr<iac::UNet> model;
  if (mode == iac::SkipMode::concat) {
    model = iac::build_unet(ucfg, mode, nullptr, rng);
  } else if (mode == iac::SkipMode::discrete_cell) {
    const auto space = iac::space_config_from_json(info.config.at("space"));
    const auto genotype =
        iac::genotype_from_json(info.config.at("genotype").dump());
    auto cell_rng = std::make_shared<iac::Rng>(0);
    const iac::CellFactory factory =
        iac::make_discrete_cell_factory(space, genotype, cell_rng);
    model = iac::build_unet(ucfg, mode, &factory, rng);
  } else {
    throw std::invalid_argument(
        "checkpoint holds a continuous supernet; re-run the search instead "
        "of evaluating it directly");
  }
  auto entries = model->state();
  iac::load_checkpoint_into(ckpt_path, entries);
  return model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"implantable adaptive cell workflow"};
  app.require_subcommand(1);
  app.fallthrough(true);

  Globals g;
  app.add_option("--config", g.config_path, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "override every stage seed");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic,
               "pin execution to a single thread");

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  std::string gen_task;
  int gen_n = -1, gen_h = -1, gen_w = -1, gen_classes = -1;
  double gen_noise = -1.0;
  long long gen_seed = -1;
  gen->add_option("--task", gen_task, "shapes_easy | skip_dependent");
  gen->add_option("--n", gen_n, "sample count");
  gen->add_option("--height", gen_h, "image height");
  gen->add_option("--width", gen_w, "image width");
  gen->add_option("--classes", gen_classes, "mask channels");
  gen->add_option("--noise", gen_noise, "additive noise sigma");
  gen->add_option("--data-seed", gen_seed, "generator seed");
  gen->callback([&] {
    apply_globals(g);
    iac::ExperimentConfig cfg = effective_config(g);
    iac::SyntheticTaskSpec spec = cfg.dataset;
    if (!gen_task.empty()) spec.task = iac::task_from_name(gen_task);
    if (gen_n >= 0) spec.n_samples = gen_n;
    if (gen_h >= 0) spec.height = gen_h;
    if (gen_w >= 0) spec.width = gen_w;
    if (gen_classes >= 0) spec.classes = gen_classes;
    if (gen_noise >= 0) spec.noise = gen_noise;
    if (gen_seed >= 0) spec.seed = static_cast<uint64_t>(gen_seed);
    spec.validate();
    fs::create_directories(g.out);
    const auto manifest = iac::generate_synthetic(spec, g.out);
    std::printf("wrote %zu samples (%s, %dx%d, %d class%s) to %s\n",
                manifest.samples.size(), iac::task_name(spec.task).c_str(),
                spec.height, spec.width, spec.classes,
                spec.classes == 1 ? "" : "es", g.out.c_str());
  });

  // split ------------------------------------------------------------------
  auto* split = app.add_subcommand("split", "partition a dataset");
  std::string split_data;
  split->add_option("--data", split_data, "dataset directory")->required();
  split->callback([&] {
    apply_globals(g);
    const iac::ExperimentConfig cfg = effective_config(g);
    const auto manifest = iac::DatasetManifest::load(split_data);
    const auto splits = iac::make_splits(manifest, cfg.train_fraction,
                                         cfg.search_fraction, cfg.split_seed);
    fs::create_directories(g.out);
    const std::string path = (fs::path(g.out) / "splits.json").string();
    splits.save(path);
    std::printf("train %zu  val %zu  train_search %zu  val_search %zu -> %s\n",
                splits.train_dt.size(), splits.val_dt.size(),
                splits.train_search_dt.size(), splits.val_search_dt.size(),
                path.c_str());
  });

  // train-baseline ---------------------------------------------------------
  auto* base = app.add_subcommand("train-baseline", "stage I training");
  std::string base_data, base_splits;
  base->add_option("--data", base_data, "dataset directory")->required();
  base->add_option("--splits", base_splits, "splits.json path")->required();
  base->callback([&] {
    apply_globals(g);
    const iac::ExperimentConfig cfg = effective_config(g);
    const auto manifest = iac::DatasetManifest::load(base_data);
    const auto splits = iac::SplitSpec::load(base_splits);
    fs::create_directories(g.out);
    const auto res =
        iac::train_baseline(cfg.unet, cfg.stage1, manifest, splits, g.out);
    std::printf("baseline val dice %.4f -> %s/baseline.ckpt\n",
                res.report.mean_dice, g.out.c_str());
  });

  // search -----------------------------------------------------------------
  auto* search = app.add_subcommand("search", "stage II cell search");
  std::string search_data, search_splits, search_base;
  search->add_option("--data", search_data, "dataset directory")->required();
  search->add_option("--splits", search_splits, "splits.json path")
      ->required();
  search->add_option("--baseline", search_base, "stage I checkpoint")
      ->required();
  search->callback([&] {
    apply_globals(g);
    const iac::ExperimentConfig cfg = effective_config(g);
    const auto manifest = iac::DatasetManifest::load(search_data);
    const auto splits = iac::SplitSpec::load(search_splits);
    iac::Rng seed_rng(cfg.stage2.seed);
    iac::ArchParams arch(cfg.space);
    auto cell_rng = std::make_shared<iac::Rng>(seed_rng.fork(500));
    const iac::CellFactory factory =
        iac::make_continuous_cell_factory(cfg.space, arch, cell_rng);
    iac::Rng base_rng = seed_rng.fork(0);
    auto supernet = iac::build_unet(cfg.unet, iac::SkipMode::continuous_cell,
                                    &factory, base_rng);
    auto entries = supernet->base_state();
    iac::load_checkpoint_into(search_base, entries);
    iac::freeze_base_weights(*supernet);
    const auto train_search =
        iac::LoadedDataset::from(manifest, splits.train_search_dt);
    const auto val_search =
        iac::LoadedDataset::from(manifest, splits.val_search_dt);
    fs::create_directories(g.out);
    const auto trace = iac::run_search(*supernet, arch, train_search,
                                       val_search, cfg.space, cfg.stage2,
                                       g.out);
    if (!trace.snapshots.empty()) {
      const auto& last = trace.snapshots.back();
      std::printf("final genotype (epoch %d):\n%s", last.epoch,
                  iac::genotype_pretty(last.genotype).c_str());
    }
    std::printf("trace -> %s/trace.json\n", g.out.c_str());
  });

  // implant ----------------------------------------------------------------
  auto* implant = app.add_subcommand("implant", "stage III fine-tune");
  std::string imp_data, imp_splits, imp_base, imp_genotype;
  implant->add_option("--data", imp_data, "dataset directory")->required();
  implant->add_option("--splits", imp_splits, "splits.json path")->required();
  implant->add_option("--baseline", imp_base, "stage I checkpoint")
      ->required();
  implant->add_option("--genotype", imp_genotype, "genotype JSON file")
      ->required();
  implant->callback([&] {
    apply_globals(g);
    const iac::ExperimentConfig cfg = effective_config(g);
    const auto manifest = iac::DatasetManifest::load(imp_data);
    const auto splits = iac::SplitSpec::load(imp_splits);
    const auto genotype = iac::genotype_from_json(read_file(imp_genotype));
    fs::create_directories(g.out);
    const auto res =
        iac::implant_and_train(imp_base, genotype, cfg.space, cfg.unet,
                               cfg.stage3, manifest, splits, g.out);
    std::printf("implanted val dice %.4f -> %s/implant.ckpt\n",
                res.report.mean_dice, g.out.c_str());
  });

  // eval -------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a split");
  std::string ev_data, ev_splits, ev_ckpt, ev_which = "val";
  int ev_batch = 16;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--splits", ev_splits, "splits.json path")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--which", ev_which,
                 "train | val | train_search | val_search")
      ->capture_default_str();
  ev->add_option("--batch", ev_batch, "batch size")->capture_default_str();
  ev->callback([&] {
    apply_globals(g);
    const auto manifest = iac::DatasetManifest::load(ev_data);
    const auto splits = iac::SplitSpec::load(ev_splits);
    const std::vector<std::string>* ids = nullptr;
    if (ev_which == "train")
      ids = &splits.train_dt;
    else if (ev_which == "val")
      ids = &splits.val_dt;
    else if (ev_which == "train_search")
      ids = &splits.train_search_dt;
    else if (ev_which == "val_search")
      ids = &splits.val_search_dt;
    else
      throw std::invalid_argument("unknown split '" + ev_which + "'");
    auto model = model_from_checkpoint(ev_ckpt);
    const auto data = iac::LoadedDataset::from(manifest, *ids);
    const auto report = iac::evaluate(*model, data, ev_batch);
    std::printf("%s dice %.6f\n", ev_which.c_str(), report.mean_dice);
    for (size_t c = 0; c < report.per_class_dice.size(); ++c)
      std::printf("  class %zu dice %.6f\n", c, report.per_class_dice[c]);
    if (!g.out.empty()) {
      fs::create_directories(g.out);
      write_file((fs::path(g.out) / "eval.json").string(),
                 report.to_json().dump(2) + "\n");
    }
  });

  // report -----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "improvement table");
  std::string rep_baselines, rep_results;
  rep->add_option("--baselines", rep_baselines,
                  "JSON map: model key -> baseline dice")
      ->required();
  rep->add_option("--results", rep_results,
                  "JSON map: model key -> {snapshot label -> dice}")
      ->required();
  rep->callback([&] {
    apply_globals(g);
    const auto jb = parse_json_file(rep_baselines);
    const auto jr = parse_json_file(rep_results);
    std::map<std::string, iac::real> baselines;
    std::map<std::string, std::map<std::string, iac::real>> results;
    try {
      baselines = jb.get<decltype(baselines)>();
      results = jr.get<decltype(results)>();
    } catch (const json::exception& e) {
      throw iac::ParseError(std::string("report inputs malformed: ") +
                            e.what());
    }
    const auto table = iac::improvement_table(baselines, results);
    const std::string text = iac::render_text(table);
    fs::create_directories(g.out);
    write_file((fs::path(g.out) / "table.csv").string(),
               iac::render_csv(table));
    write_file((fs::path(g.out) / "table.txt").string(), text);
    std::fputs(text.c_str(), stdout);
  });

  // genotype ---------------------------------------------------------------
  auto* geno = app.add_subcommand("genotype", "inspect genotype files");
  geno->require_subcommand(1);
  auto* gshow = geno->add_subcommand("show", "print a readable edge listing");
  std::string show_path;
  gshow->add_option("file", show_path, "genotype JSON")->required();
  gshow->callback([&] {
    const auto genotype = iac::genotype_from_json(read_file(show_path));
    std::fputs(iac::genotype_pretty(genotype).c_str(), stdout);
  });
  auto* gplot = geno->add_subcommand("plot", "emit a DOT graph");
  std::string plot_path, plot_out;
  gplot->add_option("file", plot_path, "genotype JSON")->required();
  gplot->add_option("--dot", plot_out, "output path (default: <file>.dot)");
  gplot->callback([&] {
    const auto genotype = iac::genotype_from_json(read_file(plot_path));
    std::string dst = plot_out;
    if (dst.empty()) dst = fs::path(plot_path).replace_extension(".dot");
    write_file(dst, iac::genotype_to_dot(genotype));
    std::printf("%s\n", dst.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const iac::ParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
