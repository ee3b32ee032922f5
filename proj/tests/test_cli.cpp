#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <vector>

#include "tcsis/cli.hpp"
#include "tcsis/config.hpp"

using namespace tcsis;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tcsis");
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream out(p);
  out << j.dump(2);
  return p;
}

json small_config(int side) {
  return json{
      {"model",
       {{"model", "ising"}, {"L", side}, {"beta", 0.4407}, {"periodic", true}}},
      {"sampler", {{"n_steps", 8}, {"n_samples", 200}, {"source", "oracle"}}},
      {"mcmc", {{"sampler", "glauber"}, {"n_steps", 50}, {"n_chains", 100}}},
      {"seed", 9},
  };
}

}  // namespace

TEST_CASE("malformed configs exit with the user-error code") {
  TempDir tmp("tcsis_cli_badcfg");
  SUBCASE("unknown key") {
    const auto cfg = write_config(
        tmp.path, json{{"model", {{"model", "ising"}, {"LL", 2}}}});
    CHECK(run_cli({"oracle-check", "--config", cfg.string(), "--out",
                   (tmp.path / "out").string()}) == 1);
  }
  SUBCASE("unparseable json") {
    const fs::path p = tmp.path / "broken.json";
    std::ofstream(p) << "{not json";
    CHECK(run_cli({"oracle-check", "--config", p.string(), "--out",
                   (tmp.path / "out").string()}) == 1);
  }
  SUBCASE("missing file") {
    CHECK(run_cli({"oracle-check", "--config",
                   (tmp.path / "nothing.json").string(), "--out",
                   (tmp.path / "out").string()}) == 1);
  }
}

TEST_CASE("oracle-check reports the capacity code beyond the cap") {
  TempDir tmp("tcsis_cli_cap");
  const auto cfg = write_config(tmp.path, small_config(5));  // 2^25 states
  CHECK(run_cli({"oracle-check", "--config", cfg.string(), "--out",
                 (tmp.path / "out").string()}) == 2);
}

TEST_CASE("sample and metrics round trip through the filesystem") {
  TempDir tmp("tcsis_cli_roundtrip");
  const auto cfg = write_config(tmp.path, small_config(2));
  const fs::path sample_dir = tmp.path / "samples";
  REQUIRE(run_cli({"sample", "--config", cfg.string(), "--out",
                   sample_dir.string(), "--threads", "2"}) == 0);
  REQUIRE(fs::exists(sample_dir / "samples.csv"));
  REQUIRE(fs::exists(sample_dir / "samples.json"));

  SUBCASE("a file compared with itself has zero discrepancy") {
    const fs::path metrics_dir = tmp.path / "metrics";
    REQUIRE(run_cli({"metrics", "--config", cfg.string(), "--samples-a",
                     (sample_dir / "samples.csv").string(), "--samples-b",
                     (sample_dir / "samples.csv").string(), "--out",
                     metrics_dir.string()}) == 0);
    std::ifstream in(metrics_dir / "summary.json");
    json summary;
    in >> summary;
    CHECK(summary.at("corr_discrepancy").get<double>() == 0.0);
  }
  SUBCASE("exact comparison works on enumerable instances") {
    const fs::path metrics_dir = tmp.path / "metrics_exact";
    REQUIRE(run_cli({"metrics", "--config", cfg.string(), "--samples-a",
                     (sample_dir / "samples.csv").string(), "--exact", "--out",
                     metrics_dir.string()}) == 0);
    std::ifstream in(metrics_dir / "summary.json");
    json summary;
    in >> summary;
    CHECK(summary.contains("tv_a"));
  }
  SUBCASE("empty sample file is a user error") {
    const fs::path empty = tmp.path / "empty.csv";
    std::ofstream(empty) << "token_0,token_1,token_2,token_3\n";
    CHECK(run_cli({"metrics", "--config", cfg.string(), "--samples-a",
                   empty.string(), "--samples-b", empty.string(), "--out",
                   (tmp.path / "m").string()}) == 1);
  }
  SUBCASE("missing checkpoint is a user error") {
    CHECK(run_cli({"sample", "--config", cfg.string(), "--source",
                   (tmp.path / "missing.ckpt").string(), "--out",
                   (tmp.path / "s2").string()}) == 1);
  }
}

TEST_CASE("mcmc subcommand writes chains") {
  TempDir tmp("tcsis_cli_mcmc");
  const auto cfg = write_config(tmp.path, small_config(2));
  REQUIRE(run_cli({"mcmc", "--config", cfg.string(), "--out",
                   (tmp.path / "out").string(), "--threads", "2"}) == 0);
  const auto samples = read_samples_csv(tmp.path / "out" / "samples.csv");
  CHECK(samples.size() == 100);
}

TEST_CASE("train subcommand with zero steps checkpoints the initialization") {
  TempDir tmp("tcsis_cli_train0");
  json cfg_json = small_config(2);
  cfg_json["train"] = {{"variant", "self_normalized"},
                       {"batch", 4},
                       {"mc_samples", 5},
                       {"grad_steps", 0},
                       {"lr", 1e-3}};
  const auto cfg = write_config(tmp.path, cfg_json);
  const fs::path out = tmp.path / "out";
  REQUIRE(run_cli({"train", "--config", cfg.string(), "--out", out.string()}) ==
          0);
  const Checkpoint ckpt = load_checkpoint(out / "checkpoint.ckpt");
  const Network reference = make_score_network(4, 2, {256, 256}, 64, 9);
  CHECK(ckpt.net.trunk.layers[0].w == reference.trunk.layers[0].w);
  CHECK(ckpt.net.trunk.layers.back().w.cwiseAbs().maxCoeff() == 0.0);
}
