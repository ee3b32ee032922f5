#include "tcsis/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "tcsis/errors.hpp"

namespace tcsis {

namespace {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& block,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) {
    throw invalid_input("config block '" + block + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw invalid_input("unknown config key '" + block + "." + key + "'");
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw invalid_input(std::string("config key '") + key +
                          "' has the wrong type");
    }
  }
}

ModelConfig parse_model(const json& j) {
  reject_unknown_keys(j, "model", {"model", "L", "beta", "periodic"});
  ModelConfig cfg;
  std::string kind = "ising";
  read_key(j, "model", kind);
  if (kind != "ising") {
    throw invalid_input("unsupported model '" + kind + "'");
  }
  read_key(j, "L", cfg.side);
  read_key(j, "beta", cfg.beta);
  read_key(j, "periodic", cfg.periodic);
  return cfg;
}

ScheduleConfig parse_schedule(const json& j) {
  reject_unknown_keys(j, "schedule",
                      {"kind", "eps_uniform", "a_min", "sigma", "T"});
  ScheduleConfig cfg;
  read_key(j, "kind", cfg.kind);
  if (cfg.kind != "geometric" && cfg.kind != "constant") {
    throw invalid_input("unsupported schedule kind '" + cfg.kind + "'");
  }
  read_key(j, "eps_uniform", cfg.eps_uniform);
  read_key(j, "a_min", cfg.a_min);
  read_key(j, "sigma", cfg.sigma);
  read_key(j, "T", cfg.T);
  return cfg;
}

TrainBlockConfig parse_train(const json& j) {
  reject_unknown_keys(
      j, "train",
      {"variant", "batch", "mc_samples", "grad_steps", "lr", "proposal",
       "model_weight", "gwg_steps", "refresh_interval", "refresh_chains",
       "replay_capacity", "hidden", "time_dim", "gate_hidden", "ema_decay",
       "log_interval", "eval_interval"});
  TrainBlockConfig cfg;
  read_key(j, "variant", cfg.variant);
  if (cfg.variant != "self_normalized" && cfg.variant != "unbiased") {
    throw invalid_input("unsupported train variant '" + cfg.variant + "'");
  }
  read_key(j, "batch", cfg.batch);
  read_key(j, "mc_samples", cfg.mc_samples);
  read_key(j, "grad_steps", cfg.grad_steps);
  read_key(j, "lr", cfg.lr);
  read_key(j, "proposal", cfg.proposal);
  if (cfg.proposal != "noise" && cfg.proposal != "model_mix" &&
      cfg.proposal != "mcmc_gwg") {
    throw invalid_input("unsupported proposal '" + cfg.proposal + "'");
  }
  read_key(j, "model_weight", cfg.model_weight);
  read_key(j, "gwg_steps", cfg.gwg_steps);
  read_key(j, "refresh_interval", cfg.refresh_interval);
  read_key(j, "refresh_chains", cfg.refresh_chains);
  read_key(j, "replay_capacity", cfg.replay_capacity);
  read_key(j, "hidden", cfg.hidden);
  read_key(j, "time_dim", cfg.time_dim);
  read_key(j, "gate_hidden", cfg.gate_hidden);
  read_key(j, "ema_decay", cfg.ema_decay);
  read_key(j, "log_interval", cfg.log_interval);
  read_key(j, "eval_interval", cfg.eval_interval);
  return cfg;
}

SamplerBlockConfig parse_sampler(const json& j) {
  reject_unknown_keys(j, "sampler", {"n_steps", "n_samples", "source"});
  SamplerBlockConfig cfg;
  read_key(j, "n_steps", cfg.n_steps);
  read_key(j, "n_samples", cfg.n_samples);
  read_key(j, "source", cfg.source);
  return cfg;
}

McmcBlockConfig parse_mcmc(const json& j) {
  reject_unknown_keys(
      j, "mcmc",
      {"sampler", "n_steps", "n_chains", "burn_in", "gwg_temperature"});
  McmcBlockConfig cfg;
  read_key(j, "sampler", cfg.sampler);
  if (cfg.sampler != "glauber" && cfg.sampler != "gwg") {
    throw invalid_input("unsupported mcmc sampler '" + cfg.sampler + "'");
  }
  read_key(j, "n_steps", cfg.n_steps);
  read_key(j, "n_chains", cfg.n_chains);
  read_key(j, "burn_in", cfg.burn_in);
  read_key(j, "gwg_temperature", cfg.gwg_temperature);
  return cfg;
}

}  // namespace

NoiseSchedule ScheduleConfig::build(int vocab) const {
  if (kind == "constant") return NoiseSchedule::constant(sigma, T);
  return NoiseSchedule::geometric(vocab, eps_uniform, a_min, T);
}

TrainConfig TrainBlockConfig::build(const NoiseSchedule& schedule,
                                    std::uint64_t seed, int threads) const {
  TrainConfig cfg;
  cfg.variant = variant == "self_normalized" ? Variant::self_normalized
                                             : Variant::unbiased;
  cfg.batch = batch;
  cfg.mc_samples = mc_samples;
  cfg.grad_steps = grad_steps;
  cfg.lr = lr;
  if (proposal == "noise") {
    cfg.proposal.kind = ProposalConfig::Kind::noise;
  } else if (proposal == "model_mix") {
    cfg.proposal.kind = ProposalConfig::Kind::model_mix;
  } else {
    cfg.proposal.kind = ProposalConfig::Kind::mcmc_gwg;
  }
  cfg.proposal.model_weight = model_weight;
  cfg.proposal.gwg_steps = gwg_steps;
  cfg.proposal.refresh_interval = refresh_interval;
  cfg.proposal.refresh_chains = refresh_chains;
  cfg.replay_capacity = replay_capacity;
  cfg.seed = seed;
  cfg.schedule = schedule;
  cfg.hidden = hidden;
  cfg.time_dim = time_dim;
  cfg.gate_hidden = gate_hidden;
  cfg.ema_decay = ema_decay;
  cfg.threads = threads;
  cfg.log_interval = log_interval;
  cfg.eval_interval = eval_interval;
  return cfg;
}

ChainConfig McmcBlockConfig::build(std::uint64_t seed, int threads) const {
  ChainConfig cfg;
  cfg.sampler = sampler == "glauber" ? ChainConfig::Sampler::glauber
                                     : ChainConfig::Sampler::gwg;
  cfg.n_steps = n_steps;
  cfg.n_chains = n_chains;
  cfg.burn_in = burn_in;
  cfg.seed = seed;
  cfg.gwg_temperature = gwg_temperature;
  cfg.threads = threads;
  return cfg;
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  reject_unknown_keys(j, "config",
                      {"model", "schedule", "train", "sampler", "mcmc",
                       "output_dir", "seed"});
  ExperimentConfig cfg;
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("schedule")) cfg.schedule = parse_schedule(j.at("schedule"));
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("sampler")) cfg.sampler = parse_sampler(j.at("sampler"));
  if (j.contains("mcmc")) cfg.mcmc = parse_mcmc(j.at("mcmc"));
  read_key(j, "output_dir", cfg.output_dir);
  read_key(j, "seed", cfg.seed);
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw invalid_input("malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::json resolved_config_json(const ExperimentConfig& cfg) {
  return json{
      {"model",
       {{"model", "ising"},
        {"L", cfg.model.side},
        {"beta", cfg.model.beta},
        {"periodic", cfg.model.periodic}}},
      {"schedule",
       {{"kind", cfg.schedule.kind},
        {"eps_uniform", cfg.schedule.eps_uniform},
        {"a_min", cfg.schedule.a_min},
        {"sigma", cfg.schedule.sigma},
        {"T", cfg.schedule.T}}},
      {"train",
       {{"variant", cfg.train.variant},
        {"batch", cfg.train.batch},
        {"mc_samples", cfg.train.mc_samples},
        {"grad_steps", cfg.train.grad_steps},
        {"lr", cfg.train.lr},
        {"proposal", cfg.train.proposal},
        {"model_weight", cfg.train.model_weight},
        {"gwg_steps", cfg.train.gwg_steps},
        {"refresh_interval", cfg.train.refresh_interval},
        {"refresh_chains", cfg.train.refresh_chains},
        {"replay_capacity", cfg.train.replay_capacity},
        {"hidden", cfg.train.hidden},
        {"time_dim", cfg.train.time_dim},
        {"gate_hidden", cfg.train.gate_hidden},
        {"ema_decay", cfg.train.ema_decay},
        {"log_interval", cfg.train.log_interval},
        {"eval_interval", cfg.train.eval_interval}}},
      {"sampler",
       {{"n_steps", cfg.sampler.n_steps},
        {"n_samples", cfg.sampler.n_samples},
        {"source", cfg.sampler.source}}},
      {"mcmc",
       {{"sampler", cfg.mcmc.sampler},
        {"n_steps", cfg.mcmc.n_steps},
        {"n_chains", cfg.mcmc.n_chains},
        {"burn_in", cfg.mcmc.burn_in},
        {"gwg_temperature", cfg.mcmc.gwg_temperature}}},
      {"seed", cfg.seed},
      {"tool_version", kToolVersion},
  };
}

ExperimentConfig preset_config(const std::string& preset) {
  ExperimentConfig cfg;
  cfg.model.periodic = true;
  if (preset == "l4-high" || preset == "l4-critical" || preset == "l4-low") {
    cfg.model.side = 4;
    cfg.model.beta = preset == "l4-high"       ? 0.28
                     : preset == "l4-critical" ? 0.4407
                                               : 0.6;
    cfg.sampler.n_steps = 24;
    cfg.sampler.n_samples = 10000;
    cfg.mcmc.n_steps = 10000;
    cfg.mcmc.n_chains = 10000;
  } else if (preset == "smoke") {
    // Miniature end-to-end pipeline for determinism/integration checks.
    cfg.model.side = 2;
    cfg.model.beta = 0.4407;
    cfg.sampler.n_steps = 8;
    cfg.sampler.n_samples = 500;
    cfg.mcmc.n_steps = 200;
    cfg.mcmc.n_chains = 500;
    cfg.train.grad_steps = 30;
    cfg.train.mc_samples = 20;
    cfg.train.batch = 8;
    cfg.train.lr = 1e-3;
    cfg.train.log_interval = 10;
    cfg.train.eval_interval = 30;
    cfg.train.gwg_steps = 50;
    cfg.train.refresh_chains = 16;
  } else {
    throw invalid_input("unknown preset '" + preset +
                        "' (expected l4-high, l4-critical, l4-low, smoke)");
  }
  return cfg;
}

void write_samples_csv(const std::filesystem::path& path,
                       std::span<const SequenceState> samples) {
  if (samples.empty()) throw invalid_input("refusing to write an empty sample file");
  std::ofstream out(path);
  if (!out) throw state_error("cannot open for writing: " + path.string());
  const int d = samples.front().dim();
  for (int i = 0; i < d; ++i) {
    out << "token_" << i << (i + 1 < d ? "," : "\n");
  }
  for (const auto& x : samples) {
    for (int i = 0; i < d; ++i) {
      out << static_cast<int>(x.tokens[static_cast<std::size_t>(i)])
          << (i + 1 < d ? "," : "\n");
    }
  }
  if (!out) throw state_error("sample write failed: " + path.string());
}

std::vector<SequenceState> read_samples_csv(const std::filesystem::path& path,
                                            int vocab) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open sample file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("token_0", 0) != 0) {
    throw invalid_input("not a sample CSV (missing token header): " +
                        path.string());
  }
  std::vector<SequenceState> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SequenceState x;
    x.vocab = vocab;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      const int tok = std::stoi(cell);
      if (tok < 0 || tok >= vocab) {
        throw invalid_input("token out of range in " + path.string());
      }
      x.tokens.push_back(static_cast<std::uint8_t>(tok));
    }
    samples.push_back(std::move(x));
  }
  if (samples.empty()) {
    throw invalid_input("sample file has no rows: " + path.string());
  }
  return samples;
}

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw state_error("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace tcsis
