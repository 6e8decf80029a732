// End-to-end checks of the iac-forge binary: real process spawns, captured
// output, exit codes. Heavier workflow paths live in the acceptance runner.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "iac/cell.hpp"
#include "support/tmp_dir.hpp"

#ifndef IAC_FORGE_PATH
#error "IAC_FORGE_PATH must point at the built binary"
#endif

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const std::string& capture_path) {
  const std::string cmd = std::string("\"") + IAC_FORGE_PATH + "\" " + args +
                          " > \"" + capture_path + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
#if defined(WIFEXITED)
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#else
  r.exit_code = status;
#endif
  std::ifstream in(capture_path);
  r.output.assign(std::istreambuf_iterator<char>(in),
                  std::istreambuf_iterator<char>());
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data then split produce a usable dataset") {
  testsupport::TmpDir tmp("cli");
  const std::string data = tmp.sub("data");
  const std::string cap = tmp.str() + "/cap.txt";

  auto gen = run_cli("--out \"" + data +
                         "\" gen-data --task shapes_easy --n 8 --height 12 "
                         "--width 12 --classes 1 --data-seed 4",
                     cap);
  CHECK(gen.exit_code == 0);
  CHECK(gen.output.find("wrote 8 samples") != std::string::npos);
  CHECK(fs::exists(fs::path(data) / "manifest.json"));

  const std::string run = tmp.sub("run");
  auto split =
      run_cli("--out \"" + run + "\" split --data \"" + data + "\"", cap);
  CHECK(split.exit_code == 0);
  CHECK(split.output.find("train 6  val 2  train_search 3  val_search 3") !=
        std::string::npos);
  CHECK(fs::exists(fs::path(run) / "splits.json"));
}

TEST_CASE("genotype show and plot") {
  testsupport::TmpDir tmp("cli");
  const std::string cap = tmp.str() + "/cap.txt";

  iac::Genotype g;
  g.nodes.push_back({iac::GenotypeEdge{0, iac::OpKind::sep_conv_3x3},
                     iac::GenotypeEdge{1, iac::OpKind::identity}});
  g.nodes.push_back({iac::GenotypeEdge{1, iac::OpKind::max_pool_3x3},
                     iac::GenotypeEdge{2, iac::OpKind::dil_conv_5x5}});
  const std::string gpath = tmp.str() + "/geno.json";
  write_text(gpath, iac::genotype_to_json(g));

  auto show = run_cli("genotype show \"" + gpath + "\"", cap);
  CHECK(show.exit_code == 0);
  CHECK(show.output.find("sep_conv_3x3") != std::string::npos);
  CHECK(show.output.find("max_pool_3x3") != std::string::npos);

  const std::string dot = tmp.str() + "/geno.dot";
  auto plot = run_cli(
      "genotype plot \"" + gpath + "\" --dot \"" + dot + "\"", cap);
  CHECK(plot.exit_code == 0);
  REQUIRE(fs::exists(dot));
  std::ifstream in(dot);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("digraph") != std::string::npos);
  CHECK(text.find("dil_conv_5x5") != std::string::npos);

  // malformed genotype file is a config error (exit 2)
  write_text(gpath, "{\"version\": 1, \"nodes\": \"oops\"}");
  auto bad = run_cli("genotype show \"" + gpath + "\"", cap);
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("config error") != std::string::npos);
}

TEST_CASE("report renders tables from JSON inputs") {
  testsupport::TmpDir tmp("cli");
  const std::string cap = tmp.str() + "/cap.txt";
  const std::string bpath = tmp.str() + "/baselines.json";
  const std::string rpath = tmp.str() + "/results.json";
  write_text(bpath, R"({"A": 0.50, "B": 0.60})");
  write_text(rpath, R"({"A": {"EP5": 0.55, "EP10": 0.52},
                        "B": {"EP5": 0.58, "EP10": 0.63}})");

  const std::string out = tmp.sub("rep");
  auto rep = run_cli("--out \"" + out + "\" report --baselines \"" + bpath +
                         "\" --results \"" + rpath + "\"",
                     cap);
  CHECK(rep.exit_code == 0);
  REQUIRE(fs::exists(fs::path(out) / "table.csv"));
  REQUIRE(fs::exists(fs::path(out) / "table.txt"));
  std::ifstream in(fs::path(out) / "table.csv");
  std::string csv((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  CHECK(csv.find("EP5") != std::string::npos);
  CHECK(csv.find("delta_mean") != std::string::npos);
  CHECK(rep.output.find("A") != std::string::npos);

  // mistyped results payload
  write_text(rpath, R"({"A": 0.5})");
  auto bad = run_cli("--out \"" + out + "\" report --baselines \"" + bpath +
                         "\" --results \"" + rpath + "\"",
                     cap);
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("config error") != std::string::npos);
}

TEST_CASE("bad invocations exit with code 2") {
  testsupport::TmpDir tmp("cli");
  const std::string cap = tmp.str() + "/cap.txt";

  auto none = run_cli("", cap);
  CHECK(none.exit_code == 2);

  auto unknown = run_cli("--definitely-not-a-flag gen-data", cap);
  CHECK(unknown.exit_code == 2);

  const std::string missing = tmp.str() + "/missing.json";
  auto nocfg = run_cli(
      "--config \"" + missing + "\" --out \"" + tmp.sub("x") + "\" gen-data",
      cap);
  CHECK(nocfg.exit_code == 2);
  CHECK(nocfg.output.find("config error") != std::string::npos);
  CHECK(nocfg.output.find(missing) != std::string::npos);
}

TEST_CASE("help exits cleanly") {
  testsupport::TmpDir tmp("cli");
  const std::string cap = tmp.str() + "/cap.txt";
  auto help = run_cli("--help", cap);
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("gen-data") != std::string::npos);
  CHECK(help.output.find("implant") != std::string::npos);
}

}  // TEST_SUITE
