#include "tcsis/mcmc.hpp"

#include <atomic>
#include <cmath>

#include "tcsis/errors.hpp"
#include "tcsis/mathutil.hpp"
#include "tcsis/parallel.hpp"

namespace tcsis {

SequenceState glauber_step(const IsingModel& model, const SequenceState& x,
                           Rng& rng) {
  const int d = x.dim();
  const int site = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(d)));
  // Conditional of the site given the rest.
  const double delta =
      model.flip_log_delta(x, site, 1) - model.flip_log_delta(x, site, 0);
  SequenceState y = x;
  y.tokens[static_cast<std::size_t>(site)] =
      uniform01(rng) < sigmoid(delta) ? 1 : 0;
  return y;
}

namespace {

// Per-site flip gains d_i(x) = log p_bar(flip_i(x)) - log p_bar(x).
void flip_gains(const EnergyModel& model, const SequenceState& x,
                const GwgOptions& options, std::vector<double>& gains) {
  const int d = x.dim();
  gains.resize(static_cast<std::size_t>(d));
  if (options.taylor) {
    const auto* ising = dynamic_cast<const IsingModel*>(&model);
    if (ising == nullptr) {
      throw invalid_input("gwg taylor mode needs an Ising model");
    }
    for (int i = 0; i < d; ++i) {
      const int spin = 2 * static_cast<int>(x.tokens[static_cast<std::size_t>(i)]) - 1;
      // -2 s_i * d/ds_i of the relaxed pair energy
      gains[static_cast<std::size_t>(i)] =
          -2.0 * spin * ising->beta() * ising->neighbor_spin_sum(x, i);
    }
    return;
  }
  for (int i = 0; i < d; ++i) {
    const int other = 1 - static_cast<int>(x.tokens[static_cast<std::size_t>(i)]);
    gains[static_cast<std::size_t>(i)] = model.flip_log_delta(x, i, other);
  }
}

void softmax_inplace(std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

int draw_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

SequenceState gwg_step(const EnergyModel& model, const SequenceState& x,
                       const GwgOptions& options, Rng& rng, bool* accepted) {
  if (x.vocab != 2) throw invalid_input("gwg_step expects binary states");
  const double inv_temp = 1.0 / options.temperature;

  std::vector<double> forward;
  flip_gains(model, x, options, forward);
  std::vector<double> q_forward = forward;
  for (double& g : q_forward) g *= inv_temp;
  softmax_inplace(q_forward);
  const int site = draw_categorical(q_forward, rng);

  SequenceState y = x;
  y.tokens[static_cast<std::size_t>(site)] =
      static_cast<std::uint8_t>(1 - y.tokens[static_cast<std::size_t>(site)]);
  const double log_target_ratio = model.flip_log_delta(
      x, site, static_cast<int>(y.tokens[static_cast<std::size_t>(site)]));

  std::vector<double> reverse;
  flip_gains(model, y, options, reverse);
  std::vector<double> q_reverse = reverse;
  for (double& g : q_reverse) g *= inv_temp;
  softmax_inplace(q_reverse);

  const double log_accept =
      log_target_ratio +
      std::log(q_reverse[static_cast<std::size_t>(site)]) -
      std::log(q_forward[static_cast<std::size_t>(site)]);
  const bool accept = std::log(uniform01(rng)) < log_accept;
  if (accepted != nullptr) *accepted = accept;
  return accept ? y : x;
}

SequenceState gwg_step(const EnergyModel& model, const SequenceState& x,
                       double temperature, Rng& rng, bool* accepted) {
  GwgOptions options;
  options.temperature = temperature;
  return gwg_step(model, x, options, rng, accepted);
}

ChainRun run_chain(const ChainConfig& cfg, const EnergyModel& model) {
  if (cfg.n_steps < 0 || cfg.burn_in < 0) {
    throw invalid_input("run_chain: negative step counts");
  }
  if (cfg.n_chains < 1) throw invalid_input("run_chain: n_chains must be >= 1");
  auto [d, vocab] = model.dims();

  const auto* ising = dynamic_cast<const IsingModel*>(&model);
  if (cfg.sampler == ChainConfig::Sampler::glauber && ising == nullptr) {
    throw invalid_input("glauber sampler needs an Ising model");
  }

  ChainRun run;
  run.samples.assign(static_cast<std::size_t>(cfg.n_chains), SequenceState{});
  std::atomic<long long> accepts{0};
  const long long total_steps = cfg.burn_in + cfg.n_steps;

  parallel_for_blocks(cfg.n_chains, cfg.threads, [&](std::int64_t begin,
                                                     std::int64_t end) {
    GwgOptions gwg_options;
    gwg_options.temperature = cfg.gwg_temperature;
    gwg_options.taylor = cfg.gwg_taylor;
    long long local_accepts = 0;
    for (std::int64_t chain = begin; chain < end; ++chain) {
      Rng rng = derive_rng(cfg.seed, 0x636861696e, static_cast<std::uint64_t>(chain));
      SequenceState x;
      x.vocab = vocab;
      x.tokens.resize(static_cast<std::size_t>(d));
      for (auto& t : x.tokens) {
        t = static_cast<std::uint8_t>(
            uniform_below(rng, static_cast<std::uint64_t>(vocab)));
      }
      for (long long s = 0; s < total_steps; ++s) {
        if (cfg.sampler == ChainConfig::Sampler::glauber) {
          x = glauber_step(*ising, x, rng);
        } else {
          bool accepted = false;
          x = gwg_step(model, x, gwg_options, rng, &accepted);
          local_accepts += accepted;
        }
      }
      run.samples[static_cast<std::size_t>(chain)] = std::move(x);
    }
    accepts += local_accepts;
  });

  if (cfg.sampler == ChainConfig::Sampler::gwg && total_steps > 0) {
    run.gwg_accept_rate =
        static_cast<double>(accepts.load()) /
        (static_cast<double>(total_steps) * static_cast<double>(cfg.n_chains));
  }
  return run;
}

}  // namespace tcsis
