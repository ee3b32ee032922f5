#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "tcsis/mcmc.hpp"
#include "tcsis/schedule.hpp"
#include "tcsis/train.hpp"

namespace tcsis {

inline constexpr const char* kToolVersion = "tcsis 0.1.0";

struct ModelConfig {
  int side = 4;
  double beta = 0.4407;
  bool periodic = true;

  IsingModel build() const { return IsingModel(side, beta, periodic); }
};

struct ScheduleConfig {
  std::string kind = "geometric";
  double eps_uniform = 1e-3;
  double a_min = 1e-3;
  double sigma = 1.0;  // constant kind
  double T = 1.0;

  NoiseSchedule build(int vocab) const;
};

struct TrainBlockConfig {
  std::string variant = "self_normalized";
  int batch = 64;
  long long mc_samples = 500;
  long long grad_steps = 50000;
  double lr = 1e-5;
  std::string proposal = "noise";  // noise | model_mix | mcmc_gwg
  double model_weight = 0.9;
  int gwg_steps = 1000;
  int refresh_interval = 100;
  int refresh_chains = 64;
  int replay_capacity = 8192;
  std::vector<int> hidden = {256, 256};
  int time_dim = 64;
  int gate_hidden = 64;
  double ema_decay = 0.999;
  int log_interval = 250;
  int eval_interval = 2000;

  TrainConfig build(const NoiseSchedule& schedule, std::uint64_t seed,
                    int threads) const;
};

struct SamplerBlockConfig {
  int n_steps = 24;
  long long n_samples = 10000;
  std::string source = "oracle";  // oracle | mc:<N> | <checkpoint path>
};

struct McmcBlockConfig {
  std::string sampler = "glauber";
  long long n_steps = 10000;
  int n_chains = 10000;
  long long burn_in = 0;
  double gwg_temperature = 2.0;

  ChainConfig build(std::uint64_t seed, int threads) const;
};

struct ExperimentConfig {
  ModelConfig model;
  ScheduleConfig schedule;
  TrainBlockConfig train;
  SamplerBlockConfig sampler;
  McmcBlockConfig mcmc;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

// Strict parsing: unknown keys are rejected with the offending key named.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::filesystem::path& path);
nlohmann::json resolved_config_json(const ExperimentConfig& cfg);

// Reproduction presets: l4-high (beta 0.28), l4-critical (0.4407),
// l4-low (0.6), and a miniature smoke preset for integration checks.
ExperimentConfig preset_config(const std::string& preset);

// --- sample file I/O ------------------------------------------------------

// CSV with header token_0..token_{d-1}, one row per sample.
void write_samples_csv(const std::filesystem::path& path,
                       std::span<const SequenceState> samples);
std::vector<SequenceState> read_samples_csv(const std::filesystem::path& path,
                                            int vocab = 2);

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j);

}  // namespace tcsis
