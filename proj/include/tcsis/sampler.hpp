#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "tcsis/energy.hpp"
#include "tcsis/net.hpp"
#include "tcsis/oracle.hpp"
#include "tcsis/rng.hpp"
#include "tcsis/schedule.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

// Supplies d x V log-score matrices (0 at self entries) for the reverse
// chain. slot distinguishes parallel chains so that stochastic sources give
// them independent, order-free streams.
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;

  virtual std::pair<int, int> dims() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
  virtual ScoreGrid query(const SequenceState& x, double t,
                          std::uint64_t slot = 0) = 0;

  // Writes one grid per state into out[0..n); default loops over query.
  virtual void query_batch(std::span<const SequenceState> states, double t,
                           std::span<ScoreGrid> out, int threads);
};

// Exact scores from the brute-force oracle; per-time cache over the full
// state space.
class OracleScoreSource final : public ScoreSource {
 public:
  OracleScoreSource(const EnergyModel& model, NoiseSchedule schedule,
                    std::uint64_t cap = kDefaultStateCap);

  std::pair<int, int> dims() const override;
  const NoiseSchedule& schedule() const override { return schedule_; }
  ScoreGrid query(const SequenceState& x, double t,
                  std::uint64_t slot = 0) override;

 private:
  const std::vector<ScoreGrid>& table_for(double t);

  ExactOracle oracle_;
  NoiseSchedule schedule_;
  std::map<double, std::vector<ScoreGrid>> cache_;
};

// Learning-free source: re-estimates the score online by Monte Carlo.
class McScoreSource final : public ScoreSource {
 public:
  McScoreSource(const EnergyModel& model, NoiseSchedule schedule,
                long long n_samples, std::uint64_t seed);

  std::pair<int, int> dims() const override;
  const NoiseSchedule& schedule() const override { return schedule_; }
  ScoreGrid query(const SequenceState& x, double t,
                  std::uint64_t slot = 0) override;

 private:
  const EnergyModel& model_;
  NoiseSchedule schedule_;
  long long n_samples_;
  std::uint64_t seed_;
};

// Score-head network source with batched evaluation; small state spaces are
// cached per time step.
class NeuralScoreSource final : public ScoreSource {
 public:
  NeuralScoreSource(Network net, NoiseSchedule schedule,
                    std::uint64_t cache_cap = 4096);

  std::pair<int, int> dims() const override;
  const NoiseSchedule& schedule() const override { return schedule_; }
  ScoreGrid query(const SequenceState& x, double t,
                  std::uint64_t slot = 0) override;
  void query_batch(std::span<const SequenceState> states, double t,
                   std::span<ScoreGrid> out, int threads) override;

 private:
  const std::vector<ScoreGrid>* cached_table(double t, int threads);

  Network net_;
  NoiseSchedule schedule_;
  std::uint64_t cache_cap_;
  std::uint64_t n_states_ = 0;  // 0 when not enumerable under cache_cap
  std::map<double, std::vector<ScoreGrid>> cache_;
};

// Log unnormalized marginal density evaluator, e.g. a density network or the
// exact oracle marginal.
using DensityFn = std::function<double(const SequenceState&, double)>;

// Score assembly from marginal-density differences over the 1-Hamming
// neighborhood; d*(V-1) + 1 evaluations per state.
ScoreGrid assemble_density_score(const DensityFn& density,
                                 const SequenceState& x, double t);

// Density-head network source; evaluations are batched over the neighborhood
// and small state spaces are cached per time step.
class NeuralDensityScoreSource final : public ScoreSource {
 public:
  NeuralDensityScoreSource(Network net, const EnergyModel& model,
                           NoiseSchedule schedule,
                           std::uint64_t cache_cap = 4096);

  std::pair<int, int> dims() const override;
  const NoiseSchedule& schedule() const override { return schedule_; }
  ScoreGrid query(const SequenceState& x, double t,
                  std::uint64_t slot = 0) override;
  void query_batch(std::span<const SequenceState> states, double t,
                   std::span<ScoreGrid> out, int threads) override;

 private:
  std::vector<double> batched_log_density(
      std::span<const SequenceState> states, double t, int threads);
  const std::vector<double>* cached_density(double t, int threads);

  Network net_;
  const EnergyModel& model_;
  NoiseSchedule schedule_;
  std::uint64_t cache_cap_;
  std::uint64_t n_states_ = 0;
  std::map<double, std::vector<double>> cache_;  // log density per state rank
};

struct SamplerConfig {
  int n_steps = 24;
  long long n_samples = 1;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SampleRun {
  std::vector<SequenceState> samples;
  long long clamp_events = 0;      // renormalized coordinate rows
  long long coordinate_steps = 0;  // total coordinate updates
};

// One Euler step of the reverse chain from time t to t - dt: per coordinate,
// jump probability sigma_t * dt * score, with row renormalization when the
// jump mass exceeds 1.
SequenceState euler_reverse_step(const SequenceState& x, double t, double dt,
                                 ScoreSource& source, Rng& rng,
                                 long long* clamp_events = nullptr);

// Reverse simulation from uniform noise at t = T down to t = 0 on a uniform
// time grid.
SampleRun sample(ScoreSource& source, const SamplerConfig& cfg);

}  // namespace tcsis
