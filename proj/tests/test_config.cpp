#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tcsis/config.hpp"
#include "tcsis/errors.hpp"

using namespace tcsis;
using json = nlohmann::json;

TEST_CASE("config parsing applies defaults and honors values") {
  const json j = {
      {"model", {{"model", "ising"}, {"L", 4}, {"beta", 0.4407}, {"periodic", true}}},
      {"schedule", {{"kind", "geometric"}, {"eps_uniform", 1e-3}, {"T", 1.0}}},
      {"seed", 7},
  };
  const ExperimentConfig cfg = parse_config(j);
  CHECK(cfg.model.side == 4);
  CHECK(cfg.model.beta == doctest::Approx(0.4407));
  CHECK(cfg.model.periodic);
  CHECK(cfg.schedule.kind == "geometric");
  CHECK(cfg.seed == 7);
  CHECK(cfg.train.batch == 64);  // default
}

TEST_CASE("unknown keys are rejected by name") {
  const json j = {{"model", {{"model", "ising"}, {"LL", 4}}}};
  try {
    parse_config(j);
    FAIL("expected invalid_input");
  } catch (const invalid_input& e) {
    CHECK(std::string(e.what()).find("model.LL") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(json{{"mystery", 1}}), invalid_input);
}

TEST_CASE("wrong types and unsupported enums are rejected") {
  CHECK_THROWS_AS(parse_config(json{{"model", {{"L", "four"}}}}),
                  invalid_input);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"model", "potts"}}}}),
                  invalid_input);
  CHECK_THROWS_AS(parse_config(json{{"schedule", {{"kind", "cosine"}}}}),
                  invalid_input);
  CHECK_THROWS_AS(parse_config(json{{"train", {{"variant", "magic"}}}}),
                  invalid_input);
  CHECK_THROWS_AS(parse_config(json{{"mcmc", {{"sampler", "wolff"}}}}),
                  invalid_input);
}

TEST_CASE("resolved config round trips and records the tool version") {
  ExperimentConfig cfg;
  cfg.model.side = 3;
  cfg.model.beta = 0.28;
  cfg.train.variant = "unbiased";
  cfg.seed = 99;
  const json resolved = resolved_config_json(cfg);
  CHECK(resolved.at("tool_version") == kToolVersion);
  json stripped = resolved;
  stripped.erase("tool_version");
  const ExperimentConfig parsed = parse_config(stripped);
  CHECK(parsed.model.side == 3);
  CHECK(parsed.model.beta == doctest::Approx(0.28));
  CHECK(parsed.train.variant == "unbiased");
  CHECK(parsed.seed == 99);
}

TEST_CASE("reproduction presets pin the protocol constants") {
  CHECK(preset_config("l4-high").model.beta == doctest::Approx(0.28));
  CHECK(preset_config("l4-critical").model.beta == doctest::Approx(0.4407));
  CHECK(preset_config("l4-low").model.beta == doctest::Approx(0.6));
  for (const char* name : {"l4-high", "l4-critical", "l4-low"}) {
    const ExperimentConfig cfg = preset_config(name);
    CHECK(cfg.model.side == 4);
    CHECK(cfg.sampler.n_steps == 24);
    CHECK(cfg.mcmc.n_steps == 10000);
    CHECK(cfg.mcmc.n_chains == 10000);
  }
  CHECK(preset_config("smoke").model.side == 2);
  CHECK_THROWS_AS(preset_config("l12-critical"), invalid_input);
}

TEST_CASE("sample csv round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "tcsis_samples_test.csv";
  std::vector<SequenceState> samples;
  for (int i = 0; i < 5; ++i) {
    SequenceState x;
    x.vocab = 2;
    x.tokens = {static_cast<std::uint8_t>(i & 1),
                static_cast<std::uint8_t>((i >> 1) & 1), 1, 0};
    samples.push_back(x);
  }
  write_samples_csv(path, samples);
  const auto loaded = read_samples_csv(path);
  CHECK(loaded == samples);

  SUBCASE("byte-identical rewrite") {
    std::ifstream first(path);
    std::string a((std::istreambuf_iterator<char>(first)),
                  std::istreambuf_iterator<char>());
    write_samples_csv(path, samples);
    std::ifstream second(path);
    std::string b((std::istreambuf_iterator<char>(second)),
                  std::istreambuf_iterator<char>());
    CHECK(a == b);
  }
  fs::remove(path);

  SUBCASE("missing and malformed files are invalid") {
    CHECK_THROWS_AS(read_samples_csv("/nonexistent/file.csv"), invalid_input);
    const fs::path empty_path =
        fs::temp_directory_path() / "tcsis_empty_test.csv";
    std::ofstream(empty_path).close();
    CHECK_THROWS_AS(read_samples_csv(empty_path), invalid_input);
    fs::remove(empty_path);
  }
}

TEST_CASE("schedule config builds both kinds") {
  ScheduleConfig geo;
  const NoiseSchedule s = geo.build(2);
  CHECK(s.cumulative(0.0) == 0.0);
  CHECK(s.cumulative(1.0) > 3.0);  // V=2, eps 1e-3 gives a_bar(T) ~ 3.1
  ScheduleConfig constant;
  constant.kind = "constant";
  constant.sigma = 2.0;
  CHECK(constant.build(2).cumulative(0.5) == doctest::Approx(1.0));
}
