#include <doctest.h>

#include <fstream>

#include "iac/config.hpp"
#include "iac/errors.hpp"
#include "support/tmp_dir.hpp"

using namespace iac;

TEST_SUITE("config") {

TEST_CASE("defaults survive a json round trip") {
  ExperimentConfig cfg;
  auto j = experiment_config_to_json(cfg);
  ExperimentConfig back = experiment_config_from_json(j);
  CHECK(back.unet.depth == cfg.unet.depth);
  CHECK(back.unet.base_width == cfg.unet.base_width);
  CHECK(back.space.n_nodes == cfg.space.n_nodes);
  CHECK(back.space.K == cfg.space.K);
  CHECK(back.space.edge_norm_mode == cfg.space.edge_norm_mode);
  CHECK(back.stage1.epochs == cfg.stage1.epochs);
  CHECK(back.stage2.epochs == cfg.stage2.epochs);
  CHECK(back.stage2.warmup_epochs == cfg.stage2.warmup_epochs);
  CHECK(back.stage2.snapshot_epochs == cfg.stage2.snapshot_epochs);
  CHECK(back.stage3.epochs == cfg.stage3.epochs);
  CHECK(back.train_fraction == cfg.train_fraction);
  CHECK(back.search_fraction == cfg.search_fraction);
  CHECK(back.dataset.n_samples == cfg.dataset.n_samples);
  CHECK(experiment_config_to_json(back) == j);
}

TEST_CASE("unknown keys are rejected with the key and section named") {
  auto j = experiment_config_to_json(ExperimentConfig{});
  j["unet"]["depht"] = 3;  // typo
  try {
    experiment_config_from_json(j);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("depht") != std::string::npos);
    CHECK(msg.find("unet") != std::string::npos);
  }

  auto j2 = experiment_config_to_json(ExperimentConfig{});
  j2["bogus_section"] = 1;
  CHECK_THROWS_AS(experiment_config_from_json(j2), ParseError);
}

TEST_CASE("type errors surface as parse errors") {
  auto j = experiment_config_to_json(ExperimentConfig{});
  j["stage1"]["epochs"] = "thirty";
  CHECK_THROWS_AS(experiment_config_from_json(j), ParseError);
}

TEST_CASE("edge norm names map to the two modes") {
  auto j = experiment_config_to_json(ExperimentConfig{});
  j["space"]["edge_norm"] = "pcdarts";
  CHECK(experiment_config_from_json(j).space.edge_norm_mode ==
        SearchSpaceConfig::EdgeNorm::pcdarts);
  j["space"]["edge_norm"] = "tan_rescaled";
  CHECK(experiment_config_from_json(j).space.edge_norm_mode ==
        SearchSpaceConfig::EdgeNorm::tan_rescaled);
  j["space"]["edge_norm"] = "softplus";
  CHECK_THROWS_AS(experiment_config_from_json(j), ParseError);
}

TEST_CASE("op list round trips by name") {
  auto j = experiment_config_to_json(ExperimentConfig{});
  j["space"]["ops"] = {"zero", "identity", "sep_conv_3x3"};
  auto cfg = experiment_config_from_json(j);
  REQUIRE(cfg.space.ops.size() == 3);
  CHECK(cfg.space.ops[2] == OpKind::sep_conv_3x3);

  j["space"]["ops"] = {"conv_9x9"};
  CHECK_THROWS_AS(experiment_config_from_json(j), ParseError);
}

TEST_CASE("validation rejects out-of-range fractions and K mismatch") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  ExperimentConfig bad = cfg;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.search_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.stage2.K = cfg.space.K + 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("backbone names round trip") {
  for (auto b : {UNetConfig::Backbone::base, UNetConfig::Backbone::narrow,
                 UNetConfig::Backbone::wide}) {
    ExperimentConfig cfg;
    cfg.unet.backbone = b;
    auto j = experiment_config_to_json(cfg);
    CHECK(experiment_config_from_json(j).unet.backbone == b);
  }
}

TEST_CASE("file loading: missing path and broken json name the file") {
  try {
    load_experiment_config("/nonexistent/exp.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/exp.json") !=
          std::string::npos);
  }

  testsupport::TmpDir tmp("cfg");
  {
    std::ofstream f(tmp.sub("broken.json"));
    f << "{ not json";
  }
  CHECK_THROWS_AS(load_experiment_config(tmp.sub("broken.json")), ParseError);

  {
    std::ofstream f(tmp.sub("ok.json"));
    f << R"({"stage1": {"epochs": 7}})";
  }
  auto cfg = load_experiment_config(tmp.sub("ok.json"));
  CHECK(cfg.stage1.epochs == 7);
  CHECK(cfg.stage2.epochs == ExperimentConfig{}.stage2.epochs);  // defaults
}

}  // TEST_SUITE
