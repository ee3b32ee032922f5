#include "tcsis/sampler.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "tcsis/errors.hpp"
#include "tcsis/kernel.hpp"
#include "tcsis/parallel.hpp"
#include "tcsis/tcs.hpp"

namespace tcsis {

void ScoreSource::query_batch(std::span<const SequenceState> states, double t,
                              std::span<ScoreGrid> out, int threads) {
  parallel_for_blocks(static_cast<std::int64_t>(states.size()), threads,
                      [&](std::int64_t begin, std::int64_t end) {
                        for (std::int64_t i = begin; i < end; ++i) {
                          out[static_cast<std::size_t>(i)] =
                              query(states[static_cast<std::size_t>(i)], t,
                                    static_cast<std::uint64_t>(i));
                        }
                      });
}

// ---------------------------------------------------------------------------
// OracleScoreSource

OracleScoreSource::OracleScoreSource(const EnergyModel& model,
                                     NoiseSchedule schedule, std::uint64_t cap)
    : oracle_(model, cap), schedule_(schedule) {}

std::pair<int, int> OracleScoreSource::dims() const {
  return {oracle_.target().d, oracle_.target().vocab};
}

const std::vector<ScoreGrid>& OracleScoreSource::table_for(double t) {
  auto it = cache_.find(t);
  if (it != cache_.end()) return it->second;
  const double a_bar = schedule_.cumulative(t);
  const auto& states = oracle_.states();
  std::vector<ScoreGrid> table(states.size());
  for (std::size_t r = 0; r < states.size(); ++r) {
    table[r] = oracle_.concrete_score(a_bar, states[r]).log_scores;
  }
  return cache_.emplace(t, std::move(table)).first->second;
}

ScoreGrid OracleScoreSource::query(const SequenceState& x, double t,
                                   std::uint64_t) {
  return table_for(t)[static_cast<std::size_t>(state_rank(x))];
}

// ---------------------------------------------------------------------------
// McScoreSource

McScoreSource::McScoreSource(const EnergyModel& model, NoiseSchedule schedule,
                             long long n_samples, std::uint64_t seed)
    : model_(model), schedule_(schedule), n_samples_(n_samples), seed_(seed) {
  if (n_samples < 1) throw invalid_input("mc score source needs N >= 1");
}

std::pair<int, int> McScoreSource::dims() const { return model_.dims(); }

ScoreGrid McScoreSource::query(const SequenceState& x, double t,
                               std::uint64_t slot) {
  // Stream keyed by (time, slot) so chains stay independent and results do
  // not depend on evaluation order.
  std::uint64_t t_bits;
  static_assert(sizeof(double) == sizeof(std::uint64_t));
  std::memcpy(&t_bits, &t, sizeof(t_bits));
  Rng rng = derive_rng(seed_, t_bits, slot);
  return estimate_concrete_score(model_, x, schedule_.cumulative(t),
                                 n_samples_, rng)
      .log_scores;
}

// ---------------------------------------------------------------------------
// NeuralScoreSource

NeuralScoreSource::NeuralScoreSource(Network net, NoiseSchedule schedule,
                                     std::uint64_t cache_cap)
    : net_(std::move(net)), schedule_(schedule), cache_cap_(cache_cap) {
  if (net_.head != Head::score) {
    throw invalid_input("NeuralScoreSource needs a score-head network");
  }
  std::uint64_t n = 1;
  for (int i = 0; i < net_.d; ++i) {
    n *= static_cast<std::uint64_t>(net_.vocab);
    if (n > cache_cap_) {
      n = 0;
      break;
    }
  }
  n_states_ = n;
}

std::pair<int, int> NeuralScoreSource::dims() const {
  return {net_.d, net_.vocab};
}

const std::vector<ScoreGrid>* NeuralScoreSource::cached_table(double t,
                                                              int threads) {
  if (n_states_ == 0) return nullptr;
  auto it = cache_.find(t);
  if (it != cache_.end()) return &it->second;
  const auto states = enumerate_states(net_.d, net_.vocab, cache_cap_);
  std::vector<ScoreGrid> table(states.size());
  const std::vector<double> times(states.size(), t);
  parallel_for_blocks(
      static_cast<std::int64_t>(states.size()), threads,
      [&](std::int64_t begin, std::int64_t end) {
        const Mat rows = net_forward_score(
            net_,
            std::span<const SequenceState>(states.data() + begin,
                                           static_cast<std::size_t>(end - begin)),
            std::span<const double>(times.data() + begin,
                                    static_cast<std::size_t>(end - begin)));
        for (std::int64_t i = begin; i < end; ++i) {
          ScoreGrid grid(net_.d, net_.vocab);
          for (int j = 0; j < net_.d * net_.vocab; ++j) {
            grid.values[static_cast<std::size_t>(j)] =
                rows(static_cast<int>(i - begin), j);
          }
          table[static_cast<std::size_t>(i)] = std::move(grid);
        }
      });
  return &cache_.emplace(t, std::move(table)).first->second;
}

ScoreGrid NeuralScoreSource::query(const SequenceState& x, double t,
                                   std::uint64_t) {
  if (const auto* table = cached_table(t, 1)) {
    return (*table)[static_cast<std::size_t>(state_rank(x))];
  }
  return score_forward(net_, x, t);
}

void NeuralScoreSource::query_batch(std::span<const SequenceState> states,
                                    double t, std::span<ScoreGrid> out,
                                    int threads) {
  if (const auto* table = cached_table(t, threads)) {
    parallel_for_blocks(static_cast<std::int64_t>(states.size()), threads,
                        [&](std::int64_t begin, std::int64_t end) {
                          for (std::int64_t i = begin; i < end; ++i) {
                            out[static_cast<std::size_t>(i)] =
                                (*table)[static_cast<std::size_t>(state_rank(
                                    states[static_cast<std::size_t>(i)]))];
                          }
                        });
    return;
  }
  const std::vector<double> times(states.size(), t);
  parallel_for_blocks(
      static_cast<std::int64_t>(states.size()), threads,
      [&](std::int64_t begin, std::int64_t end) {
        const Mat rows = net_forward_score(
            net_,
            std::span<const SequenceState>(states.data() + begin,
                                           static_cast<std::size_t>(end - begin)),
            std::span<const double>(times.data() + begin,
                                    static_cast<std::size_t>(end - begin)));
        for (std::int64_t i = begin; i < end; ++i) {
          ScoreGrid grid(net_.d, net_.vocab);
          for (int j = 0; j < net_.d * net_.vocab; ++j) {
            grid.values[static_cast<std::size_t>(j)] =
                rows(static_cast<int>(i - begin), j);
          }
          out[static_cast<std::size_t>(i)] = std::move(grid);
        }
      });
}

// ---------------------------------------------------------------------------
// Density-based sources

ScoreGrid assemble_density_score(const DensityFn& density,
                                 const SequenceState& x, double t) {
  const int d = x.dim();
  const int vocab = x.vocab;
  ScoreGrid grid(d, vocab);
  const double log_p_x = density(x, t);
  if (!std::isfinite(log_p_x)) {
    throw sampling_failure("density source returned a non-finite value");
  }
  SequenceState y = x;
  for (int i = 0; i < d; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < vocab; ++v) {
      if (v == self) continue;
      y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
      const double log_p_y = density(y, t);
      if (!std::isfinite(log_p_y)) {
        throw sampling_failure("density source returned a non-finite value");
      }
      grid.at(i, v) = log_p_y - log_p_x;
    }
    y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(self);
  }
  return grid;
}

NeuralDensityScoreSource::NeuralDensityScoreSource(Network net,
                                                   const EnergyModel& model,
                                                   NoiseSchedule schedule,
                                                   std::uint64_t cache_cap)
    : net_(std::move(net)), model_(model), schedule_(schedule),
      cache_cap_(cache_cap) {
  if (net_.head != Head::density) {
    throw invalid_input("NeuralDensityScoreSource needs a density-head network");
  }
  std::uint64_t n = 1;
  for (int i = 0; i < net_.d; ++i) {
    n *= static_cast<std::uint64_t>(net_.vocab);
    if (n > cache_cap_) {
      n = 0;
      break;
    }
  }
  n_states_ = n;
}

std::pair<int, int> NeuralDensityScoreSource::dims() const {
  return {net_.d, net_.vocab};
}

std::vector<double> NeuralDensityScoreSource::batched_log_density(
    std::span<const SequenceState> states, double t, int threads) {
  std::vector<double> out(states.size());
  const std::vector<double> times(states.size(), t);
  parallel_for_blocks(
      static_cast<std::int64_t>(states.size()), threads,
      [&](std::int64_t begin, std::int64_t end) {
        std::vector<double> log_p_bar(static_cast<std::size_t>(end - begin));
        for (std::int64_t i = begin; i < end; ++i) {
          // The network was trained on shifted energies.
          log_p_bar[static_cast<std::size_t>(i - begin)] =
              model_.log_unnormalized(states[static_cast<std::size_t>(i)]) -
              net_.e_ref;
        }
        const Vec vals = net_forward_density(
            net_,
            std::span<const SequenceState>(states.data() + begin,
                                           static_cast<std::size_t>(end - begin)),
            std::span<const double>(times.data() + begin,
                                    static_cast<std::size_t>(end - begin)),
            log_p_bar);
        for (std::int64_t i = begin; i < end; ++i) {
          out[static_cast<std::size_t>(i)] = vals(static_cast<int>(i - begin));
        }
      });
  return out;
}

const std::vector<double>* NeuralDensityScoreSource::cached_density(
    double t, int threads) {
  if (n_states_ == 0) return nullptr;
  auto it = cache_.find(t);
  if (it != cache_.end()) return &it->second;
  const auto states = enumerate_states(net_.d, net_.vocab, cache_cap_);
  auto table = batched_log_density(states, t, threads);
  return &cache_.emplace(t, std::move(table)).first->second;
}

namespace {

ScoreGrid density_table_score(const std::vector<double>& table,
                              const SequenceState& x) {
  const int d = x.dim();
  const int vocab = x.vocab;
  ScoreGrid grid(d, vocab);
  const double log_p_x = table[static_cast<std::size_t>(state_rank(x))];
  SequenceState y = x;
  for (int i = 0; i < d; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < vocab; ++v) {
      if (v == self) continue;
      y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
      grid.at(i, v) =
          table[static_cast<std::size_t>(state_rank(y))] - log_p_x;
    }
    y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(self);
  }
  return grid;
}

}  // namespace

ScoreGrid NeuralDensityScoreSource::query(const SequenceState& x, double t,
                                          std::uint64_t) {
  if (const auto* table = cached_density(t, 1)) {
    return density_table_score(*table, x);
  }
  return assemble_density_score(
      [this](const SequenceState& s, double time) {
        return density_forward(net_, s, time,
                               model_.log_unnormalized(s) - net_.e_ref);
      },
      x, t);
}

void NeuralDensityScoreSource::query_batch(
    std::span<const SequenceState> states, double t, std::span<ScoreGrid> out,
    int threads) {
  if (const auto* table = cached_density(t, threads)) {
    parallel_for_blocks(static_cast<std::int64_t>(states.size()), threads,
                        [&](std::int64_t begin, std::int64_t end) {
                          for (std::int64_t i = begin; i < end; ++i) {
                            out[static_cast<std::size_t>(i)] =
                                density_table_score(
                                    *table, states[static_cast<std::size_t>(i)]);
                          }
                        });
    return;
  }
  // Expand every state's closed neighborhood into one batched evaluation.
  const int d = dims().first;
  const int vocab = dims().second;
  const int per_state = d * (vocab - 1) + 1;
  std::vector<SequenceState> expanded;
  expanded.reserve(states.size() * static_cast<std::size_t>(per_state));
  for (const auto& x : states) {
    expanded.push_back(x);
    for (int i = 0; i < d; ++i) {
      const int self = x.tokens[static_cast<std::size_t>(i)];
      for (int v = 0; v < vocab; ++v) {
        if (v != self) expanded.push_back(flipped(x, i, v));
      }
    }
  }
  const auto values = batched_log_density(expanded, t, threads);
  parallel_for_blocks(
      static_cast<std::int64_t>(states.size()), threads,
      [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t n = begin; n < end; ++n) {
          const SequenceState& x = states[static_cast<std::size_t>(n)];
          ScoreGrid grid(d, vocab);
          std::size_t cursor =
              static_cast<std::size_t>(n) * static_cast<std::size_t>(per_state);
          const double log_p_x = values[cursor++];
          for (int i = 0; i < d; ++i) {
            const int self = x.tokens[static_cast<std::size_t>(i)];
            for (int v = 0; v < vocab; ++v) {
              if (v != self) grid.at(i, v) = values[cursor++] - log_p_x;
            }
          }
          out[static_cast<std::size_t>(n)] = std::move(grid);
        }
      });
}

// ---------------------------------------------------------------------------
// Euler stepping

namespace {

// Per-coordinate categorical update; returns the new token.
int step_coordinate(int token, int vocab, int site, const ScoreGrid& scores,
                    double rate_dt, Rng& rng, long long* clamp_events) {
  double jump_total = 0.0;
  double jump[64];
  int alt_count = 0;
  for (int v = 0; v < vocab; ++v) {
    if (v == token) continue;
    // exp is capped so a wild score cannot produce inf * 0 in the clamp.
    const double p = rate_dt * std::exp(std::min(scores.at(site, v), 500.0));
    jump[alt_count++] = p;
    jump_total += p;
  }
  if (jump_total > 1.0) {
    if (clamp_events != nullptr) ++(*clamp_events);
    const double norm = 1.0 / jump_total;
    for (int j = 0; j < alt_count; ++j) jump[j] *= norm;
    jump_total = 1.0;
  }
  const double u = uniform01(rng);
  if (u >= jump_total) return token;  // stay
  double acc = 0.0;
  int alt = 0;
  for (int v = 0; v < vocab; ++v) {
    if (v == token) continue;
    acc += jump[alt++];
    if (u < acc) return v;
  }
  return token;
}

}  // namespace

SequenceState euler_reverse_step(const SequenceState& x, double t, double dt,
                                 ScoreSource& source, Rng& rng,
                                 long long* clamp_events) {
  if (!(dt > 0.0) || dt > t) {
    throw invalid_input("euler_reverse_step needs 0 < dt <= t");
  }
  if (x.vocab > 64) throw invalid_input("euler step supports V <= 64");
  const ScoreGrid scores = source.query(x, t);
  const double rate_dt = source.schedule().sigma(t) * dt;
  SequenceState y = x;
  for (int i = 0; i < x.dim(); ++i) {
    y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
        step_coordinate(x.tokens[static_cast<std::size_t>(i)], x.vocab, i,
                        scores, rate_dt, rng, clamp_events));
  }
  return y;
}

SampleRun sample(ScoreSource& source, const SamplerConfig& cfg) {
  if (cfg.n_steps < 1) throw invalid_input("sampler needs n_steps >= 1");
  if (cfg.n_samples < 1) throw invalid_input("sampler needs n_samples >= 1");
  auto [d, vocab] = source.dims();
  if (vocab > 64) throw invalid_input("sampler supports V <= 64");
  const double T = source.schedule().T;
  const double dt = T / static_cast<double>(cfg.n_steps);

  SampleRun run;
  run.samples.assign(static_cast<std::size_t>(cfg.n_samples), SequenceState{});
  std::atomic<long long> clamp_total{0};

  // Chains are processed in fixed-size blocks to bound per-chain rng memory;
  // streams are keyed by chain id, so the block size does not affect results.
  constexpr std::int64_t kBlock = 8192;
  std::vector<Rng> chain_rngs(static_cast<std::size_t>(
      std::min<std::int64_t>(kBlock, cfg.n_samples)));
  std::vector<ScoreGrid> grids(chain_rngs.size());

  for (std::int64_t block_begin = 0; block_begin < cfg.n_samples;
       block_begin += kBlock) {
    const std::int64_t block_n =
        std::min<std::int64_t>(kBlock, cfg.n_samples - block_begin);
    parallel_for_blocks(block_n, cfg.threads, [&](std::int64_t begin,
                                                  std::int64_t end) {
      for (std::int64_t c = begin; c < end; ++c) {
        Rng rng = derive_rng(cfg.seed, 0x636861696eull,
                             static_cast<std::uint64_t>(block_begin + c));
        SequenceState x;
        x.vocab = vocab;
        x.tokens.resize(static_cast<std::size_t>(d));
        for (auto& tok : x.tokens) {
          tok = static_cast<std::uint8_t>(
              uniform_below(rng, static_cast<std::uint64_t>(vocab)));
        }
        run.samples[static_cast<std::size_t>(block_begin + c)] = std::move(x);
        chain_rngs[static_cast<std::size_t>(c)] = rng;
      }
    });

    const std::span<SequenceState> block_states(
        run.samples.data() + block_begin, static_cast<std::size_t>(block_n));
    for (int step = 0; step < cfg.n_steps; ++step) {
      const double t = T * (1.0 - static_cast<double>(step) / cfg.n_steps);
      source.query_batch({block_states.data(), block_states.size()}, t,
                         {grids.data(), static_cast<std::size_t>(block_n)},
                         cfg.threads);
      const double rate_dt = source.schedule().sigma(t) * dt;
      parallel_for_blocks(block_n, cfg.threads, [&](std::int64_t begin,
                                                    std::int64_t end) {
        long long local_clamps = 0;
        for (std::int64_t c = begin; c < end; ++c) {
          SequenceState& x = block_states[static_cast<std::size_t>(c)];
          Rng& rng = chain_rngs[static_cast<std::size_t>(c)];
          const ScoreGrid& scores = grids[static_cast<std::size_t>(c)];
          for (int i = 0; i < d; ++i) {
            x.tokens[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(step_coordinate(
                    x.tokens[static_cast<std::size_t>(i)], vocab, i, scores,
                    rate_dt, rng, &local_clamps));
          }
        }
        clamp_total += local_clamps;
      });
    }
  }
  run.clamp_events = clamp_total.load();
  run.coordinate_steps = static_cast<long long>(cfg.n_steps) *
                         static_cast<long long>(cfg.n_samples) * d;
  return run;
}

}  // namespace tcsis
