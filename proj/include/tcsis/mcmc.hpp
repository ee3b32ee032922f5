#pragma once

#include <cstdint>
#include <vector>

#include "tcsis/energy.hpp"
#include "tcsis/rng.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

struct ChainConfig {
  enum class Sampler { glauber, gwg };
  Sampler sampler = Sampler::glauber;
  long long n_steps = 10000;
  int n_chains = 1;
  long long burn_in = 0;
  std::uint64_t seed = 0;
  double gwg_temperature = 2.0;
  bool gwg_taylor = false;
  int threads = 1;
};

// Heat-bath update of one uniformly chosen site.
SequenceState glauber_step(const IsingModel& model, const SequenceState& x,
                           Rng& rng);

struct GwgOptions {
  double temperature = 2.0;
  // Compare mode: flip gains from the gradient of the relaxed (+-1) energy
  // instead of exact deltas. For the Ising pair energy the two coincide.
  bool taylor = false;
};

// Locally-informed single-flip Metropolis-Hastings: proposal softmax over
// per-site flip gains, acceptance with the reverse-proposal correction.
SequenceState gwg_step(const EnergyModel& model, const SequenceState& x,
                       double temperature, Rng& rng, bool* accepted = nullptr);
SequenceState gwg_step(const EnergyModel& model, const SequenceState& x,
                       const GwgOptions& options, Rng& rng,
                       bool* accepted = nullptr);

struct ChainRun {
  std::vector<SequenceState> samples;  // final state of each chain
  double gwg_accept_rate = 0.0;
};

// n_chains independent chains from uniform random initial states, each run
// for burn_in + n_steps updates; returns final states.
ChainRun run_chain(const ChainConfig& cfg, const EnergyModel& model);

}  // namespace tcsis
