// Release acceptance harness. Each criterion is one self-contained check
// that prints exactly one line:
//
//   criterion N: pass - <what was verified>
//   criterion N: FAIL - <first failing condition>
//
// Run everything, or a single criterion with `--only N` (that is how ctest
// registers them, since several criteria are long end-to-end runs). Exit is
// nonzero if any selected criterion fails. Tolerances are pinned here, not
// configurable: they are part of the contract.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "iac/cell.hpp"
#include "iac/checkpoint.hpp"
#include "iac/data.hpp"
#include "iac/digest.hpp"
#include "iac/pipeline.hpp"
#include "iac/relaxation.hpp"
#include "iac/report.hpp"
#include "iac/search.hpp"
#include "iac/stats.hpp"
#include "iac/unet.hpp"

#include "support/tmp_dir.hpp"

namespace {

using iac::real;

[[noreturn]] void fail(const std::string& why) {
  throw std::runtime_error(why);
}

void require(bool cond, const std::string& why) {
  if (!cond) fail(why);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "missing file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Digest over parameters only; BN running statistics are updated by
// training-mode forwards and are deliberately excluded where a criterion
// speaks about "weights".
iac::WeightDigest param_digest(const std::vector<iac::StateEntry>& entries) {
  std::vector<iac::StateEntry> params;
  for (const auto& e : entries)
    if (e.is_param()) params.push_back(e);
  return iac::digest_state(params);
}

bool digest_equal(const iac::WeightDigest& a, const iac::WeightDigest& b) {
  return a.global == b.global && a.blocks == b.blocks;
}

// Supernet wired exactly like the `search` subcommand: one Rng tree rooted
// at the stage seed, cell init from fork(500), base init from fork(0), base
// weights replaced by the Stage I checkpoint when one is given, then frozen.
struct SupernetRig {
  iac::ArchParams arch;
  std::unique_ptr<iac::UNet> net;
};

SupernetRig build_supernet(const iac::UNetConfig& ucfg,
                           const iac::SearchSpaceConfig& space,
                           const std::string& baseline_ckpt, uint64_t seed) {
  SupernetRig rig;
  rig.arch = iac::ArchParams(space);
  iac::Rng seed_rng(seed);
  auto cell_rng = std::make_shared<iac::Rng>(seed_rng.fork(500));
  auto factory = iac::make_continuous_cell_factory(space, rig.arch, cell_rng);
  iac::Rng base_rng = seed_rng.fork(0);
  rig.net = iac::build_unet(ucfg, iac::SkipMode::continuous_cell, &factory,
                            base_rng);
  if (!baseline_ckpt.empty()) {
    auto base_entries = rig.net->base_state();
    iac::load_checkpoint_into(baseline_ckpt, base_entries);
  }
  iac::freeze_base_weights(*rig.net);
  return rig;
}

// ---------------------------------------------------------------------------
// 1. Edge-normalization cap suite.
std::string criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  iac::Rng rng(20250801);
  int uncapped = 0;
  for (int it = 0; it < 10000; ++it) {
    const int arity = rng.uniform_int(2, 5);
    std::vector<real> beta(static_cast<size_t>(arity));
    for (auto& b : beta) b = rng.uniform(-1.5, 1.5);

    const auto psi = iac::edge_weights_tan_rescaled(beta);
    require(psi.size() == beta.size(), "weight count != arity");
    real sum = 0.0, mx = 0.0;
    for (real w : psi) {
      sum += w;
      mx = std::max(mx, w);
    }
    require(std::abs(sum - 1.0) <= 1e-6,
            "weights sum to " + fmt(sum, 9) + " at iteration " +
                std::to_string(it));
    require(mx <= 0.5 + 1e-9,
            "max weight " + fmt(mx, 9) + " exceeds cap at iteration " +
                std::to_string(it));

    // Independent oracle: plain softmax over tan(beta), no stabilization.
    std::vector<double> nat(beta.size());
    double denom = 0.0;
    for (size_t i = 0; i < beta.size(); ++i) {
      nat[i] = std::exp(std::tan(beta[i]));
      denom += nat[i];
    }
    double nat_max = 0.0;
    for (auto& w : nat) {
      w /= denom;
      nat_max = std::max(nat_max, w);
    }
    if (nat_max <= 0.5) {
      ++uncapped;
      for (size_t i = 0; i < beta.size(); ++i)
        require(std::abs(psi[i] - nat[i]) <= 1e-12,
                "uncapped output differs from softmax(tan) at iteration " +
                    std::to_string(it));
    }
  }
  require(uncapped > 0, "no uncapped case drawn; equality clause is vacuous");

  const auto worked = iac::edge_weights_tan_rescaled({1.0, 0.5, 0.2});
  const real expected[3] = {0.5, 0.2925, 0.2075};
  for (size_t i = 0; i < 3; ++i)
    require(std::abs(worked[i] - expected[i]) < 0.5e-4,
            "worked example entry " + std::to_string(i) + " = " +
                fmt(worked[i], 6) + ", expected " + fmt(expected[i], 4));

  const double dt = seconds_since(t0);
  require(dt < 5.0, "runtime " + fmt(dt, 2) + " s exceeds 5 s");
  return "10000 vectors within sum/cap bounds, " + std::to_string(uncapped) +
         " uncapped cases equal plain softmax(tan) to 1e-12, worked example "
         "{0.5, 0.2925, 0.2075} reproduced (" +
         fmt(dt, 2) + " s)";
}

// ---------------------------------------------------------------------------
// 2. Gradient check on a toy continuous cell, both edge-norm modes.
std::string criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  const int C = 4, H = 8, W = 8;
  double worst = 0.0;
  int points = 0;

  for (auto mode : {iac::SearchSpaceConfig::EdgeNorm::tan_rescaled,
                    iac::SearchSpaceConfig::EdgeNorm::pcdarts}) {
    iac::SearchSpaceConfig space;
    space.n_nodes = 1;
    space.n_inputs = 2;
    space.ops = {iac::OpKind::identity, iac::OpKind::sep_conv_3x3};
    space.K = 1;
    space.edge_norm_mode = mode;
    space.validate();

    iac::ArchParams arch(space);
    iac::Rng wrng(mode == iac::SearchSpaceConfig::EdgeNorm::tan_rescaled ? 101
                                                                         : 102);
    iac::ContinuousCell cell(space, C, C, arch, wrng);

    iac::Rng rng(mode == iac::SearchSpaceConfig::EdgeNorm::tan_rescaled ? 4001
                                                                        : 4002);
    real* alpha = arch.alpha.logits.value().data();
    real* beta = arch.beta.node_logits[0].value().data();
    const int n_alpha = static_cast<int>(arch.alpha.logits.value().size());
    const int n_beta =
        static_cast<int>(arch.beta.node_logits[0].value().size());

    for (int trial = 0; trial < 20; ++trial) {
      iac::Tensor up({1, C, H, W}), skip({1, C, H, W});
      for (int64_t i = 0; i < up.size(); ++i) up.data()[i] = rng.normal(0, 1);
      for (int64_t i = 0; i < skip.size(); ++i)
        skip.data()[i] = rng.normal(0, 1);

      for (int i = 0; i < n_alpha; ++i) alpha[i] = rng.uniform(-1.0, 1.0);
      // Stay clear of the cap's argmax boundary so finite differences never
      // cross branches.
      do {
        for (int i = 0; i < n_beta; ++i) beta[i] = rng.uniform(-1.2, 1.2);
      } while (mode == iac::SearchSpaceConfig::EdgeNorm::tan_rescaled &&
               std::abs(std::tan(beta[0]) - std::tan(beta[1])) <= 0.1);

      auto eval = [&]() {
        iac::Rng mr(555);
        iac::Var y = cell.forward(iac::Var(up), iac::Var(skip), mr, false);
        return iac::sum(iac::mul(y, y));
      };

      for (auto& p : arch.params()) p.zero_grad();
      iac::Var loss = eval();
      iac::backward(loss);
      std::vector<double> analytic;
      for (int i = 0; i < n_alpha; ++i)
        analytic.push_back(arch.alpha.logits.grad().data()[i]);
      for (int i = 0; i < n_beta; ++i)
        analytic.push_back(arch.beta.node_logits[0].grad().data()[i]);

      const double h = 1e-5;
      auto fd_at = [&](real* slot) {
        const real keep = *slot;
        *slot = keep + h;
        const double up_v = eval().value().data()[0];
        *slot = keep - h;
        const double dn_v = eval().value().data()[0];
        *slot = keep;
        return (up_v - dn_v) / (2.0 * h);
      };

      size_t k = 0;
      for (int i = 0; i < n_alpha; ++i, ++k) {
        const double fd = fd_at(alpha + i);
        const double denom = std::max(std::abs(analytic[k]), std::abs(fd));
        const double err = std::abs(analytic[k] - fd);
        worst = std::max(worst, err / std::max(denom, 1e-8));
        require(err <= std::max(1e-8, 1e-4 * denom),
                "alpha grad mismatch: analytic " + fmt(analytic[k], 10) +
                    " vs fd " + fmt(fd, 10));
      }
      for (int i = 0; i < n_beta; ++i, ++k) {
        const double fd = fd_at(beta + i);
        const double denom = std::max(std::abs(analytic[k]), std::abs(fd));
        const double err = std::abs(analytic[k] - fd);
        worst = std::max(worst, err / std::max(denom, 1e-8));
        require(err <= std::max(1e-8, 1e-4 * denom),
                "beta grad mismatch: analytic " + fmt(analytic[k], 10) +
                    " vs fd " + fmt(fd, 10));
      }
      ++points;
    }
  }

  const double dt = seconds_since(t0);
  require(dt < 60.0, "runtime " + fmt(dt, 1) + " s exceeds 60 s");
  return std::to_string(points) +
         " parameter points across tan_rescaled and pcdarts modes, worst "
         "relative error " +
         fmt(worst, 8) + " (" + fmt(dt, 1) + " s)";
}

// ---------------------------------------------------------------------------
// 3. Identity collapse of the masked mixed op.
std::string criterion_3() {
  iac::Rng rng(33);
  double worst = 0.0;
  int combos = 0;
  for (int C = 1; C <= 16; ++C) {
    for (int K : {1, 2, 4}) {
      const int active = std::max(1, C / K);
      std::vector<std::unique_ptr<iac::CellOp>> ops;
      iac::Rng org(7);
      for (int i = 0; i < 3; ++i)
        ops.push_back(iac::instantiate_op(iac::OpKind::identity, active, org));

      for (int rep = 0; rep < 50; ++rep) {
        const auto mask = iac::sample_channel_mask(C, K, rng);
        require(mask.active_count() == active, "unexpected mask cardinality");

        iac::Tensor x({2, C, 6, 6});
        for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0, 1);
        iac::Tensor logits({3});
        for (int i = 0; i < 3; ++i) logits.data()[i] = rng.uniform(-2.0, 2.0);

        const iac::Var out = iac::mixed_op_forward(
            iac::Var(x), iac::Var(logits), ops, mask, false);
        require(out.shape() == x.shape(), "mixed op changed the shape");
        for (int64_t i = 0; i < x.size(); ++i) {
          const double d = std::abs(out.value().data()[i] - x.data()[i]);
          worst = std::max(worst, d);
          require(d <= 1e-6, "identity mixture deviates by " + fmt(d, 9) +
                                 " at C=" + std::to_string(C) +
                                 " K=" + std::to_string(K));
        }
        ++combos;
      }
    }
  }
  return std::to_string(combos) +
         " (C,K,mask) combinations returned the input, worst deviation " +
         fmt(worst, 9);
}

// ---------------------------------------------------------------------------
// 4. One-hot degeneration at large alpha margin.
std::string criterion_4() {
  const auto& kinds = iac::candidate_ops();
  const int C = 6, H = 8, W = 8;
  iac::Rng rng(44);
  double worst = 0.0;

  for (size_t t = 0; t < kinds.size(); ++t) {
    // Twin init streams: the op list and the reference op draw identical
    // weights, so outputs are comparable bit-for-bit up to the mixture.
    iac::Rng r1(1000 + static_cast<uint64_t>(t));
    iac::Rng r2(1000 + static_cast<uint64_t>(t));
    std::vector<std::unique_ptr<iac::CellOp>> ops, twin;
    for (iac::OpKind k : kinds) ops.push_back(iac::instantiate_op(k, C, r1));
    for (iac::OpKind k : kinds) twin.push_back(iac::instantiate_op(k, C, r2));

    iac::Tensor logits({static_cast<int>(kinds.size())});
    logits.zero();
    logits.data()[t] = 20.0;

    iac::Rng mrng(99);
    const auto mask = iac::sample_channel_mask(C, 1, mrng);
    require(mask.active_count() == C, "K=1 mask must cover all channels");

    iac::Tensor x({1, C, H, W});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0, 1);

    const iac::Var mixed = iac::mixed_op_forward(iac::Var(x), iac::Var(logits),
                                                 ops, mask, false);
    iac::Tensor want(x.shape());
    if (kinds[t] == iac::OpKind::zero) {
      want.zero();
    } else {
      want = twin[t]->forward(iac::Var(x), false).value();
    }
    for (int64_t i = 0; i < x.size(); ++i) {
      const double d = std::abs(mixed.value().data()[i] - want.data()[i]);
      worst = std::max(worst, d);
      require(d <= 1e-5, "op " + iac::op_name(kinds[t]) +
                             ": mixture deviates from the selected op by " +
                             fmt(d, 9));
    }
  }
  return "all " + std::to_string(kinds.size()) +
         " op kinds collapse to the selected op at margin-20 logits, worst "
         "deviation " +
         fmt(worst, 9);
}

// ---------------------------------------------------------------------------
// 5. Discretization validity and invariances.
std::string criterion_5() {
  iac::SearchSpaceConfig space;  // default 4-node, 8-op space
  space.validate();
  iac::Rng rng(55);

  auto randomize = [&](iac::ArchParams& arch) {
    real* a = arch.alpha.logits.value().data();
    for (int64_t i = 0; i < arch.alpha.logits.value().size(); ++i)
      a[i] = rng.normal(0.0, 2.0);
    for (auto& node : arch.beta.node_logits) {
      real* b = node.value().data();
      for (int64_t i = 0; i < node.value().size(); ++i)
        b[i] = rng.uniform(-1.2, 1.2);
    }
  };
  auto clone_scaled = [&](const iac::ArchParams& src, real factor,
                          bool shift_beta) {
    iac::ArchParams dst(space);
    const real* a = src.alpha.logits.value().data();
    real* da = dst.alpha.logits.value().data();
    for (int64_t i = 0; i < src.alpha.logits.value().size(); ++i)
      da[i] = a[i] * factor;
    for (size_t j = 0; j < src.beta.node_logits.size(); ++j) {
      const real c = shift_beta ? rng.uniform(-0.2, 0.2) : 0.0;
      const real* b = src.beta.node_logits[j].value().data();
      real* db = dst.beta.node_logits[j].value().data();
      for (int64_t i = 0; i < src.beta.node_logits[j].value().size(); ++i)
        db[i] = b[i] + c;
    }
    return dst;
  };

  for (int it = 0; it < 1000; ++it) {
    iac::ArchParams arch(space);
    randomize(arch);
    const iac::Genotype g = iac::discretize(arch, space);
    g.validate(space.n_inputs);
    require(g.n_nodes() == space.n_nodes, "node count mismatch");
    for (const auto& node : g.nodes)
      for (const auto& e : node)
        require(e.op != iac::OpKind::zero,
                "zero op selected at iteration " + std::to_string(it));

    const auto doubled = clone_scaled(arch, 2.0, false);
    require(iac::discretize(doubled, space) == g,
            "genotype changed under alpha x2 at iteration " +
                std::to_string(it));
    const real u = rng.uniform(0.2, 5.0);
    const auto scaled = clone_scaled(arch, u, false);
    require(iac::discretize(scaled, space) == g,
            "genotype changed under alpha x" + fmt(u, 3) + " at iteration " +
                std::to_string(it));
    const auto shifted = clone_scaled(arch, 1.0, true);
    require(iac::discretize(shifted, space) == g,
            "genotype changed under per-node beta shift at iteration " +
                std::to_string(it));

    const std::string s = iac::genotype_to_json(g);
    const iac::Genotype g2 = iac::genotype_from_json(s);
    require(g2 == g, "JSON round trip altered the genotype");
    require(iac::genotype_to_json(g2) == s, "JSON round trip not byte-exact");
  }
  return "1000 genotypes structurally valid with no zero ops; invariant "
         "under alpha scaling (x2 and random positive) and per-node beta "
         "shifts; JSON round trips byte-exact";
}

// ---------------------------------------------------------------------------
// 6. Freeze contract at desk scale.
std::string criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::TmpDir tmp("acc6");

  iac::SyntheticTaskSpec dspec;
  dspec.task = iac::SyntheticTaskSpec::Task::skip_dependent;
  dspec.n_samples = 250;
  dspec.height = 64;
  dspec.width = 64;
  dspec.classes = 1;
  dspec.noise = 0.15;
  dspec.seed = 11;
  const auto manifest = iac::generate_synthetic(dspec, tmp.sub("data"));
  const auto splits = iac::make_splits(manifest, 0.8, 0.5, 3);

  iac::UNetConfig ucfg;
  ucfg.depth = 3;
  ucfg.base_width = 8;
  ucfg.in_channels = 1;
  ucfg.out_channels = 1;

  // Stage I here only has to produce a plausible frozen base; its length is
  // not part of the contract, so keep it short.
  iac::StageConfig s1;
  s1.epochs = 5;
  s1.batch_size = 16;
  s1.seed = 1;
  auto base = iac::train_baseline(ucfg, s1, manifest, splits, tmp.sub("stage1"));

  iac::SearchSpaceConfig space;
  iac::SearchConfig s2;
  s2.epochs = 20;
  s2.warmup_epochs = 5;
  s2.batch_size = 16;
  s2.K = space.K;
  s2.snapshot_epochs = {5, 10, 15, 20};
  s2.seed = 2;

  auto rig =
      build_supernet(ucfg, space, tmp.sub("stage1") + "/baseline.ckpt", s2.seed);

  const int64_t n_base = iac::count_params(rig.net->base_state(), false);
  const int64_t n_cell = iac::count_params(rig.net->cell_state(), false);
  const int64_t n_all = iac::count_params(rig.net->state(), false);
  require(n_all == n_base + n_cell, "supernet param partition does not add up");
  require(rig.net->param_count(true) == n_cell,
          "trainable count != cell params after freeze");
  require(iac::count_params(rig.net->base_state(), true) == 0,
          "frozen base still reports trainable params");
  require(rig.arch.alpha.logits.value().size() ==
              static_cast<int64_t>(space.n_edges()) * space.n_ops(),
          "alpha size != n_edges * n_ops");
  for (int j = 0; j < space.n_nodes; ++j)
    require(rig.arch.beta.node_logits[static_cast<size_t>(j)].value().size() ==
                space.n_inputs + j,
            "beta arity wrong at node " + std::to_string(j));

  const auto before = iac::weight_digest(*rig.net, iac::WeightScope::base);
  const auto train_search =
      iac::LoadedDataset::from(manifest, splits.train_search_dt);
  const auto val_search =
      iac::LoadedDataset::from(manifest, splits.val_search_dt);
  const auto trace = iac::run_search(*rig.net, rig.arch, train_search,
                                     val_search, space, s2, tmp.sub("stage2"));
  const auto after = iac::weight_digest(*rig.net, iac::WeightScope::base);
  require(digest_equal(before, after),
          "base digest changed across the 20-epoch search");

  iac::StageConfig s3;
  s3.epochs = 30;
  s3.batch_size = 16;
  s3.seed = 3;
  auto imp = iac::implant_and_train(tmp.sub("stage1") + "/baseline.ckpt",
                                    trace.snapshots.back().genotype, space,
                                    ucfg, s3, manifest, splits,
                                    tmp.sub("stage3"));

  const auto base_s1 = iac::weight_digest(*base.model, iac::WeightScope::base);
  const auto base_s3 = iac::weight_digest(*imp.model, iac::WeightScope::base);
  require(digest_equal(base_s1, base_s3),
          "implanted base digest differs from the Stage I base");
  const int64_t i_base = iac::count_params(imp.model->base_state(), false);
  const int64_t i_cell = iac::count_params(imp.model->cell_state(), false);
  require(iac::count_params(imp.model->state(), false) == i_base + i_cell,
          "implant param partition does not add up");
  require(imp.model->param_count(true) == i_cell,
          "implant trainable count != cell params");
  require(iac::count_params(imp.model->base_state(), true) == 0,
          "implanted base still reports trainable params");

  return "base digest bit-identical through 20-epoch search and 30-epoch "
         "implant; partitions hold (supernet " +
         std::to_string(n_all) + " = " + std::to_string(n_base) + " base + " +
         std::to_string(n_cell) + " cell; implant cell " +
         std::to_string(i_cell) + " trainable, base 0) (" +
         fmt(seconds_since(t0), 0) + " s)";
}

// ---------------------------------------------------------------------------
// 7. Search-loop fidelity: frozen-arch genotypes, frozen-omega digests,
// interleaving order.
std::string criterion_7() {
  testsupport::TmpDir tmp("acc7");

  iac::SyntheticTaskSpec dspec;
  dspec.task = iac::SyntheticTaskSpec::Task::skip_dependent;
  dspec.n_samples = 12;
  dspec.height = 16;
  dspec.width = 16;
  dspec.classes = 2;
  dspec.noise = 0.15;
  dspec.seed = 5;
  const auto manifest = iac::generate_synthetic(dspec, tmp.sub("data"));
  const auto splits = iac::make_splits(manifest, 0.8, 0.5, 3);
  const auto train_search =
      iac::LoadedDataset::from(manifest, splits.train_search_dt);
  const auto val_search =
      iac::LoadedDataset::from(manifest, splits.val_search_dt);

  iac::UNetConfig ucfg;
  ucfg.depth = 2;
  ucfg.base_width = 4;
  ucfg.in_channels = 1;
  ucfg.out_channels = 2;
  iac::SearchSpaceConfig space;

  iac::SearchConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 0;
  cfg.batch_size = 4;
  cfg.K = space.K;
  cfg.snapshot_epochs = {1, 2, 3};
  cfg.seed = 17;

  // (a) arch lr 0: every snapshot must equal the genotype of untouched
  // initial parameters, and the arch digest must not move.
  {
    auto rig = build_supernet(ucfg, space, "", cfg.seed);
    iac::SearchConfig c = cfg;
    c.arch_lr = 0.0;
    const iac::Genotype init_geno =
        iac::discretize(iac::ArchParams(space), space);
    auto arch_entries = iac::arch_state(rig.arch);
    const auto arch_before = iac::digest_state(arch_entries);
    const auto trace = iac::run_search(*rig.net, rig.arch, train_search,
                                       val_search, space, c);
    require(trace.snapshots.size() == 3, "expected 3 snapshots");
    for (const auto& snap : trace.snapshots)
      require(snap.genotype == init_geno,
              "snapshot at epoch " + std::to_string(snap.epoch) +
                  " differs from the init genotype despite arch lr 0");
    require(digest_equal(iac::digest_state(arch_entries), arch_before),
            "arch digest moved despite arch lr 0");
  }

  // (b) omega lr 0: cell parameters must not move while alpha/beta do.
  {
    auto rig = build_supernet(ucfg, space, "", cfg.seed);
    iac::SearchConfig c = cfg;
    c.omega_lr = 0.0;
    c.omega_lr_min = 0.0;
    auto arch_entries = iac::arch_state(rig.arch);
    const auto arch_before = iac::digest_state(arch_entries);
    const auto cell_before = param_digest(rig.net->cell_state());
    const auto base_before = iac::weight_digest(*rig.net, iac::WeightScope::base);
    iac::run_search(*rig.net, rig.arch, train_search, val_search, space, c);
    require(digest_equal(param_digest(rig.net->cell_state()), cell_before),
            "cell params moved despite omega lr 0");
    require(!digest_equal(iac::digest_state(arch_entries), arch_before),
            "alpha/beta never moved during the search");
    require(digest_equal(iac::weight_digest(*rig.net, iac::WeightScope::base),
                         base_before),
            "base digest moved during the search");
  }

  // (c) instrumented step log: warmup is omega-only, then arch precedes
  // omega at every step z.
  std::string order_note;
  {
    auto rig = build_supernet(ucfg, space, "", cfg.seed);
    iac::SearchConfig c = cfg;
    c.warmup_epochs = 1;
    c.snapshot_epochs = {3};
    struct Step {
      std::string phase;
      int epoch, z;
    };
    std::vector<Step> log;
    std::vector<int> lambda_epochs;
    iac::SearchHooks hooks;
    hooks.on_step = [&](const std::string& phase, int epoch, int z) {
      log.push_back({phase, epoch, z});
    };
    hooks.lambda_schedule = [&](int epoch) { lambda_epochs.push_back(epoch); };
    iac::run_search(*rig.net, rig.arch, train_search, val_search, space, c, "",
                    hooks);

    const int Z =
        static_cast<int>(iac::batch_indices(train_search.size(), c.batch_size)
                             .size());
    require(static_cast<int>(log.size()) == Z + 2 * Z * (c.epochs - 1),
            "unexpected step count " + std::to_string(log.size()));
    size_t k = 0;
    for (int z = 1; z <= Z; ++z, ++k)
      require(log[k].phase == "omega" && log[k].epoch == 1 && log[k].z == z,
              "warmup epoch is not omega-only at step " + std::to_string(z));
    for (int epoch = 2; epoch <= c.epochs; ++epoch)
      for (int z = 1; z <= Z; ++z) {
        require(log[k].phase == "arch" && log[k].epoch == epoch &&
                    log[k].z == z,
                "arch step missing at epoch " + std::to_string(epoch) +
                    " z " + std::to_string(z));
        ++k;
        require(log[k].phase == "omega" && log[k].epoch == epoch &&
                    log[k].z == z,
                "omega step does not follow arch at epoch " +
                    std::to_string(epoch) + " z " + std::to_string(z));
        ++k;
      }
    require(lambda_epochs == std::vector<int>({1, 2, 3}),
            "lambda schedule not invoked once per epoch");
    order_note = std::to_string(Z) + " omega-only warmup steps, then arch "
                 "before omega in all " +
                 std::to_string(Z * (c.epochs - 1)) + " search steps";
  }

  return "arch-lr-0 snapshots all equal the init-tie-break genotype; "
         "omega-lr-0 leaves cell params bit-identical while alpha/beta "
         "digests move; " +
         order_note;
}

// ---------------------------------------------------------------------------
// 8. End-to-end trend across 5 seeds at the pinned desk recipe.
std::string criterion_8() {
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::TmpDir tmp("acc8");

  iac::SyntheticTaskSpec dspec;
  dspec.task = iac::SyntheticTaskSpec::Task::skip_dependent;
  dspec.n_samples = 250;  // 200 train / 50 val after the 0.8 split
  dspec.height = 64;
  dspec.width = 64;
  dspec.classes = 1;
  dspec.noise = 0.15;
  dspec.seed = 11;
  const auto manifest = iac::generate_synthetic(dspec, tmp.sub("data"));
  const auto splits = iac::make_splits(manifest, 0.8, 0.5, 3);
  require(static_cast<int>(splits.train_dt.size()) == 200 &&
              static_cast<int>(splits.val_dt.size()) == 50,
          "expected a 200/50 train/val split");

  iac::UNetConfig ucfg;
  ucfg.depth = 3;
  ucfg.base_width = 8;
  ucfg.in_channels = 1;
  ucfg.out_channels = 1;
  iac::SearchSpaceConfig space;

  std::vector<double> deltas;
  std::ostringstream per_seed;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const std::string root = tmp.sub("seed" + std::to_string(seed));

    iac::StageConfig s1;
    s1.epochs = 30;
    s1.batch_size = 16;
    s1.seed = seed;
    auto base =
        iac::train_baseline(ucfg, s1, manifest, splits, root + "/stage1");

    iac::SearchConfig s2;
    s2.epochs = 20;
    s2.warmup_epochs = 5;
    s2.batch_size = 16;
    s2.K = space.K;
    s2.snapshot_epochs = {5, 10, 15, 20};
    s2.seed = seed;
    auto rig =
        build_supernet(ucfg, space, root + "/stage1/baseline.ckpt", s2.seed);
    const auto train_search =
        iac::LoadedDataset::from(manifest, splits.train_search_dt);
    const auto val_search =
        iac::LoadedDataset::from(manifest, splits.val_search_dt);
    const auto trace = iac::run_search(*rig.net, rig.arch, train_search,
                                       val_search, space, s2, root + "/stage2");

    iac::StageConfig s3;
    s3.epochs = 30;
    s3.batch_size = 16;
    s3.seed = seed;
    auto imp = iac::implant_and_train(root + "/stage1/baseline.ckpt",
                                      trace.snapshots.back().genotype, space,
                                      ucfg, s3, manifest, splits,
                                      root + "/stage3");

    const double d = imp.report.mean_dice - base.report.mean_dice;
    deltas.push_back(d);
    per_seed << (seed > 1 ? ", " : "") << "s" << seed << " "
             << (d >= 0 ? "+" : "") << fmt(d, 4);
  }

  double mean = 0.0, lo = deltas[0], hi = deltas[0];
  for (double d : deltas) {
    mean += d;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  mean /= static_cast<double>(deltas.size());

  require(mean >= 0.0, "mean delta " + fmt(mean, 4) + " is negative");
  require(lo >= -0.02, "worst seed regresses by " + fmt(-lo, 4));
  require(hi >= 0.01, "no seed improves by at least 0.01 (best " +
                          fmt(hi, 4) + ")");

  const double wall = seconds_since(t0);
  unsigned cores = std::thread::hardware_concurrency();
  if (cores == 0) cores = 1;
  // 30-minute budget assumes 4 cores; single-threaded math pro-rates it.
  const double budget = cores >= 4 ? 1800.0 : 1800.0 * 4.0 / cores;
  require(wall <= budget, "wall clock " + fmt(wall, 0) + " s exceeds " +
                              fmt(budget, 0) + " s budget");

  return "deltas [" + per_seed.str() + "], mean " + (mean >= 0 ? "+" : "") +
         fmt(mean, 4) + ", best +" + fmt(hi, 4) + "; wall " + fmt(wall, 0) +
         " s within " + fmt(budget, 0) + " s (30 min x 4/" +
         std::to_string(cores) + " cores)";
}

// ---------------------------------------------------------------------------
// 9. Statistics oracle.
std::string criterion_9() {
  iac::Rng rng(20250809);

  // Brute-force reference: enumerate every sign assignment over the ranked
  // absolute differences. Cases below are drawn tie-free and zero-free with
  // wide margins, so plain comparisons are exact.
  auto brute = [](const std::vector<real>& a, const std::vector<real>& b) {
    const size_t n = a.size();
    std::vector<double> d(n);
    for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
      return std::abs(d[x]) < std::abs(d[y]);
    });
    std::vector<double> rank(n);
    for (size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<double>(r + 1);
    double w_obs = 0.0;
    for (size_t i = 0; i < n; ++i)
      if (d[i] > 0) w_obs += rank[i];
    int64_t ge = 0, le = 0;
    const int64_t total = int64_t{1} << n;
    for (int64_t pattern = 0; pattern < total; ++pattern) {
      double w = 0.0;
      for (size_t i = 0; i < n; ++i)
        if (pattern & (int64_t{1} << i)) w += rank[i];
      if (w >= w_obs - 1e-9) ++ge;
      if (w <= w_obs + 1e-9) ++le;
    }
    const double p_one = static_cast<double>(ge) / static_cast<double>(total);
    const double p_two = std::min(
        1.0, 2.0 * static_cast<double>(std::min(ge, le)) /
                 static_cast<double>(total));
    return std::pair<double, double>(p_one, p_two);
  };

  for (int it = 0; it < 100; ++it) {
    const size_t n = static_cast<size_t>(rng.uniform_int(5, 10));
    std::vector<real> a(n), b(n);
    while (true) {
      bool ok = true;
      std::vector<double> mags;
      for (size_t i = 0; i < n; ++i) {
        a[i] = rng.uniform(0.0, 1.0);
        double d = rng.uniform(-0.5, 0.5);
        if (std::abs(d) <= 1e-3) ok = false;
        b[i] = a[i] - d;
        mags.push_back(std::abs(d));
      }
      std::sort(mags.begin(), mags.end());
      for (size_t i = 0; ok && i + 1 < n; ++i)
        if (mags[i + 1] - mags[i] <= 1e-3) ok = false;
      if (ok) break;
    }
    const auto want = brute(a, b);
    const auto got = iac::wilcoxon_signed_rank(a, b);
    require(got.exact, "expected the exact branch for n <= 10");
    require(std::abs(got.p_one_sided - want.first) <= 1e-12,
            "one-sided p " + fmt(got.p_one_sided, 15) + " vs enumeration " +
                fmt(want.first, 15) + " at case " + std::to_string(it));
    require(std::abs(got.p_two_sided - want.second) <= 1e-12,
            "two-sided p mismatch at case " + std::to_string(it));
  }

  const auto all_pos = iac::wilcoxon_signed_rank({1, 2, 3, 4, 5},
                                                 {0, 0, 0, 0, 0});
  require(all_pos.p_one_sided == 0.03125,
          "n=5 all-positive one-sided p is " + fmt(all_pos.p_one_sided, 10));

  // Hand-worked paired t: diffs {0.3, 0.1, 0.4, 0.15, 0.25, 0.2}.
  const std::vector<real> a{0.3, 0.1, 0.4, 0.15, 0.25, 0.2};
  const std::vector<real> b(6, 0.0);
  const auto t = iac::paired_t_test(a, b);
  require(t.df == 5, "df is " + std::to_string(t.df));
  require(std::abs(t.t - 5.291502622129181) <= 1e-10,
          "t statistic " + fmt(t.t, 15));
  require(std::abs(t.p_two_sided - 0.003214403408510204) <= 1e-10,
          "t p-value " + fmt(t.p_two_sided, 15));

  return "100 tie-free cases match 2^n sign enumeration to 1e-12 both "
         "tails; n=5 all-positive one-sided p exactly 0.03125; paired t "
         "matches the closed form to 1e-10";
}

// ---------------------------------------------------------------------------
// 10. Report fidelity on the published KITS/Base row.
std::string criterion_10() {
  const std::map<std::string, real> baselines{{"KITS/Base", 0.445}};
  const std::map<std::string, std::map<std::string, real>> results{
      {"KITS/Base",
       {{"EP25", 0.606},
        {"EP50", 0.467},
        {"EP100", 0.630},
        {"EP150", 0.625},
        {"EP200", 0.595}}}};

  const auto table = iac::improvement_table(baselines, results);
  const std::vector<std::string> want_cols{"EP25", "EP50", "EP100", "EP150",
                                           "EP200"};
  require(table.columns == want_cols, "columns not in natural order");
  require(table.rows.size() == 1, "expected a single row");
  const std::vector<real> want_deltas{0.161, 0.022, 0.185, 0.180, 0.150};
  for (size_t i = 0; i < want_deltas.size(); ++i)
    require(std::abs(table.rows[0].deltas[i] - want_deltas[i]) <= 1e-12,
            "delta " + std::to_string(i) + " is " +
                fmt(table.rows[0].deltas[i], 15));

  const std::string text = iac::render_text(table);
  for (const char* cell : {"0.606 +0.161^", "0.467 +0.022^", "0.630 +0.185^",
                           "0.625 +0.180^", "0.595 +0.150^"})
    require(text.find(cell) != std::string::npos,
            std::string("rendered table misses cell \"") + cell + "\"");

  return "deltas {+0.161, +0.022, +0.185, +0.180, +0.150} exact to 1e-12, "
         "all five cells rendered with improvement markers";
}

// ---------------------------------------------------------------------------
// 11. Whole-pipeline determinism.
std::string criterion_11() {
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::TmpDir tmp("acc11");

  struct RunOut {
    std::map<std::string, std::string> files;    // relative path -> bytes
    std::map<std::string, std::string> digests;  // checkpoint -> digest hex
  };

  auto run_once = [&](const std::string& root) {
    iac::SyntheticTaskSpec dspec;
    dspec.task = iac::SyntheticTaskSpec::Task::skip_dependent;
    dspec.n_samples = 40;
    dspec.height = 32;
    dspec.width = 32;
    dspec.classes = 1;
    dspec.noise = 0.15;
    dspec.seed = 77;
    const auto manifest = iac::generate_synthetic(dspec, root + "/data");
    const auto splits = iac::make_splits(manifest, 0.8, 0.5, 5);

    iac::UNetConfig ucfg;
    ucfg.depth = 2;
    ucfg.base_width = 4;
    ucfg.in_channels = 1;
    ucfg.out_channels = 1;
    iac::SearchSpaceConfig space;

    iac::StageConfig s1;
    s1.epochs = 3;
    s1.batch_size = 8;
    s1.seed = 21;
    iac::train_baseline(ucfg, s1, manifest, splits, root + "/stage1");

    iac::SearchConfig s2;
    s2.epochs = 4;
    s2.warmup_epochs = 1;
    s2.batch_size = 8;
    s2.K = space.K;
    s2.snapshot_epochs = {2, 4};
    s2.seed = 22;
    auto rig =
        build_supernet(ucfg, space, root + "/stage1/baseline.ckpt", s2.seed);
    const auto train_search =
        iac::LoadedDataset::from(manifest, splits.train_search_dt);
    const auto val_search =
        iac::LoadedDataset::from(manifest, splits.val_search_dt);
    const auto trace = iac::run_search(*rig.net, rig.arch, train_search,
                                       val_search, space, s2, root + "/stage2");

    iac::StageConfig s3;
    s3.epochs = 3;
    s3.batch_size = 8;
    s3.seed = 23;
    iac::implant_and_train(root + "/stage1/baseline.ckpt",
                           trace.snapshots.back().genotype, space, ucfg, s3,
                           manifest, splits, root + "/stage3");

    RunOut out;
    for (const char* rel :
         {"stage2/trace.json", "stage2/genotype_ep2.json",
          "stage2/genotype_ep4.json", "stage1/report.json",
          "stage1/curves.csv", "stage3/report.json", "stage3/curves.csv"})
      out.files[rel] = read_file(root + "/" + rel);
    for (const char* ck : {"stage1/baseline.ckpt", "stage2/weights_final.ckpt",
                           "stage3/implant.ckpt"})
      out.digests[ck] = iac::read_checkpoint_header(root + "/" + ck).digest_hex;
    return out;
  };

  const RunOut first = run_once(tmp.sub("run1"));
  const RunOut second = run_once(tmp.sub("run2"));

  for (const auto& [rel, bytes] : first.files)
    require(second.files.at(rel) == bytes, rel + " differs between runs");
  for (const auto& [ck, hex] : first.digests)
    require(second.digests.at(ck) == hex,
            ck + " digest differs between runs");

  return "two identical-seed pipeline runs byte-identical across " +
         std::to_string(first.files.size()) + " artifacts and " +
         std::to_string(first.digests.size()) + " checkpoint digests (" +
         fmt(seconds_since(t0), 0) + " s)";
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: iac_acceptance [--only N]\n");
      return 2;
    }
  }

  struct Entry {
    int id;
    std::string (*fn)();
  };
  const Entry entries[] = {
      {1, criterion_1}, {2, criterion_2},  {3, criterion_3},
      {4, criterion_4}, {5, criterion_5},  {6, criterion_6},
      {7, criterion_7}, {8, criterion_8},  {9, criterion_9},
      {10, criterion_10}, {11, criterion_11},
  };

  if (only != 0) {
    bool known = false;
    for (const auto& e : entries) known = known || e.id == only;
    if (!known) {
      std::fprintf(stderr, "unknown criterion %d\n", only);
      return 2;
    }
  }

  bool all_ok = true;
  for (const auto& e : entries) {
    if (only != 0 && e.id != only) continue;
    try {
      const std::string detail = e.fn();
      std::printf("criterion %d: pass - %s\n", e.id, detail.c_str());
    } catch (const std::exception& ex) {
      all_ok = false;
      std::printf("criterion %d: FAIL - %s\n", e.id, ex.what());
    }
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
