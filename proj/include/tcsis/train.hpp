#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tcsis/energy.hpp"
#include "tcsis/net.hpp"
#include "tcsis/rng.hpp"
#include "tcsis/schedule.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

enum class Variant { self_normalized, unbiased };

struct ProposalConfig {
  enum class Kind { noise, model_mix, mcmc_gwg };
  Kind kind = Kind::noise;
  double model_weight = 0.9;  // model_mix: fraction drawn from model samples
  int gwg_steps = 1000;       // mcmc_gwg: chain length per refresh
  int refresh_interval = 100; // optimizer steps between buffer refreshes
  int refresh_chains = 64;
  double gwg_temperature = 2.0;
};

struct TrainConfig {
  Variant variant = Variant::self_normalized;
  int batch = 64;
  long long mc_samples = 500;
  long long grad_steps = 0;
  double lr = 1e-3;
  ProposalConfig proposal;
  int replay_capacity = 8192;
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  std::vector<int> hidden = {256, 256};
  int time_dim = 64;
  int gate_hidden = 64;
  double ema_decay = 0.999;
  int threads = 1;
  int log_interval = 250;
  int eval_interval = 2000;
  // Oracle score error is logged when V^d fits under this cap.
  std::uint64_t oracle_eval_cap = 4096;
  int warmup_probe = 256;  // unbiased: proposal draws used to pick E_ref
};

// Ring buffer of proposal states.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(SequenceState x);
  const SequenceState& sample_uniform(Rng& rng) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool contains(const SequenceState& x) const;

 private:
  std::vector<SequenceState> items_;
  std::size_t capacity_;
  std::size_t next_ = 0;
};

struct NoisedBatch {
  std::vector<SequenceState> x_t;
  std::vector<double> t;
  std::vector<std::uint8_t> from_buffer;  // provenance of x0 per element
};

// Draws x0 from the configured proposal (noise, model/noise mixture via the
// replay buffer, or MCMC outputs via the replay buffer; empty buffer falls
// back to noise), t ~ U[0, T], and noises x0 forward to x_t.
NoisedBatch propose_noised_batch(const EnergyModel& model,
                                 const TrainConfig& cfg,
                                 const ReplayBuffer& buffer, Rng& rng);

struct LossResult {
  double loss = 0.0;
  NetGrads grads;
  long long nonfinite_targets = 0;
};

// Score-entropy loss against Monte-Carlo concrete-score targets, summed over
// the 1-Hamming neighborhood and averaged over the batch.
LossResult snis_loss(const Network& net, const NoisedBatch& batch,
                     const EnergyModel& model, const TrainConfig& cfg,
                     Rng& rng);

// Unbiased marginal-density loss; all energies are shifted by net.e_ref.
LossResult unbiased_loss(const Network& net, const NoisedBatch& batch,
                         const EnergyModel& model, const TrainConfig& cfg,
                         Rng& rng);

// Per-term score-entropy divergence z - target*log z evaluated at
// log z = log_output; minimized at log_output = log(target).
inline double score_entropy_term(double log_output, double target) {
  return std::exp(log_output) - target * log_output;
}

struct TrainMetricsRow {
  long long step = 0;
  double loss = 0.0;
  double score_err_oracle = 0.0;  // NaN when not evaluated
  long long nonfinite_targets = 0;
  double wallclock_s = 0.0;
};

struct TrainHooks {
  // Supplies fresh model samples for model_mix proposals (wired externally;
  // training itself never simulates the reverse chain).
  std::function<std::vector<SequenceState>(const Network& net,
                                           const Network& ema)>
      model_sampler;
};

struct TrainResult {
  Network net;
  Network ema;
  std::vector<TrainMetricsRow> log;
  long long nonfinite_targets = 0;
};

TrainResult train(const EnergyModel& model, const TrainConfig& cfg,
                  const TrainHooks& hooks = {},
                  const std::function<void(const TrainMetricsRow&)>& on_row =
                      nullptr);

// Mean |log s_net - log s_exact| over all states, 1-Hamming neighbors, and a
// 10-point time grid; works for both heads (density scores are assembled
// from marginal differences).
double oracle_score_error(const Network& net, const EnergyModel& model,
                          const NoiseSchedule& schedule,
                          std::uint64_t cap = 4096);

}  // namespace tcsis
