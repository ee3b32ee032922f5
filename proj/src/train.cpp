#include "tcsis/train.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "tcsis/errors.hpp"
#include "tcsis/kernel.hpp"
#include "tcsis/mathutil.hpp"
#include "tcsis/mcmc.hpp"
#include "tcsis/oracle.hpp"
#include "tcsis/parallel.hpp"
#include "tcsis/tcs.hpp"

namespace tcsis {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw invalid_input("replay buffer capacity must be > 0");
  items_.reserve(capacity);
}

void ReplayBuffer::push(SequenceState x) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(x));
    return;
  }
  items_[next_] = std::move(x);
  next_ = (next_ + 1) % capacity_;
}

const SequenceState& ReplayBuffer::sample_uniform(Rng& rng) const {
  if (items_.empty()) throw state_error("sampling from an empty replay buffer");
  return items_[uniform_below(rng, items_.size())];
}

bool ReplayBuffer::contains(const SequenceState& x) const {
  for (const auto& item : items_) {
    if (item == x) return true;
  }
  return false;
}

namespace {

SequenceState uniform_state(int d, int vocab, Rng& rng) {
  SequenceState x;
  x.vocab = vocab;
  x.tokens.resize(static_cast<std::size_t>(d));
  for (auto& t : x.tokens) {
    t = static_cast<std::uint8_t>(
        uniform_below(rng, static_cast<std::uint64_t>(vocab)));
  }
  return x;
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch < 1) throw invalid_input("train: batch must be >= 1");
  if (cfg.mc_samples < 1) throw invalid_input("train: mc_samples must be >= 1");
  if (cfg.grad_steps < 0) throw invalid_input("train: grad_steps must be >= 0");
  if (!(cfg.lr > 0.0)) throw invalid_input("train: lr must be > 0");
  if (cfg.proposal.kind == ProposalConfig::Kind::model_mix &&
      !(cfg.proposal.model_weight >= 0.0 && cfg.proposal.model_weight <= 1.0)) {
    throw invalid_input("train: model_weight must be in [0, 1]");
  }
}

}  // namespace

NoisedBatch propose_noised_batch(const EnergyModel& model,
                                 const TrainConfig& cfg,
                                 const ReplayBuffer& buffer, Rng& rng) {
  auto [d, vocab] = model.dims();
  NoisedBatch batch;
  batch.x_t.resize(static_cast<std::size_t>(cfg.batch));
  batch.t.resize(static_cast<std::size_t>(cfg.batch));
  batch.from_buffer.assign(static_cast<std::size_t>(cfg.batch), 0);
  for (int m = 0; m < cfg.batch; ++m) {
    bool from_buffer = false;
    switch (cfg.proposal.kind) {
      case ProposalConfig::Kind::noise:
        break;
      case ProposalConfig::Kind::model_mix:
        from_buffer =
            buffer.size() > 0 && uniform01(rng) < cfg.proposal.model_weight;
        break;
      case ProposalConfig::Kind::mcmc_gwg:
        from_buffer = buffer.size() > 0;
        break;
    }
    SequenceState x0 = from_buffer ? buffer.sample_uniform(rng)
                                   : uniform_state(d, vocab, rng);
    const double t = uniform01(rng) * cfg.schedule.T;
    const double a_bar = cfg.schedule.cumulative(t);
    batch.x_t[static_cast<std::size_t>(m)] = sample_forward(x0, a_bar, rng);
    batch.t[static_cast<std::size_t>(m)] = t;
    batch.from_buffer[static_cast<std::size_t>(m)] = from_buffer ? 1 : 0;
  }
  return batch;
}

LossResult snis_loss(const Network& net, const NoisedBatch& batch,
                     const EnergyModel& model, const TrainConfig& cfg,
                     Rng& rng) {
  const int m_total = static_cast<int>(batch.x_t.size());
  if (m_total == 0) throw invalid_input("snis_loss: empty batch");

  // Fresh MC targets per element, on order-independent derived streams.
  const std::uint64_t base = rng();
  std::vector<ScoreGrid> targets(static_cast<std::size_t>(m_total));
  parallel_for_blocks(m_total, cfg.threads, [&](std::int64_t begin,
                                                std::int64_t end) {
    for (std::int64_t m = begin; m < end; ++m) {
      Rng stream = derive_rng(base, static_cast<std::uint64_t>(m));
      const double a_bar =
          cfg.schedule.cumulative(batch.t[static_cast<std::size_t>(m)]);
      targets[static_cast<std::size_t>(m)] =
          estimate_concrete_score(model, batch.x_t[static_cast<std::size_t>(m)],
                                  a_bar, cfg.mc_samples, stream)
              .log_scores;
    }
  });

  NetTrace trace;
  const Mat out = net_forward_score(net, batch.x_t, batch.t, &trace);

  LossResult result;
  result.grads = make_grads(net);
  Mat grad_out = Mat::Zero(out.rows(), out.cols());
  const double inv_m = 1.0 / static_cast<double>(m_total);
  for (int m = 0; m < m_total; ++m) {
    const SequenceState& x = batch.x_t[static_cast<std::size_t>(m)];
    for (int i = 0; i < net.d; ++i) {
      const int self = x.tokens[static_cast<std::size_t>(i)];
      for (int v = 0; v < net.vocab; ++v) {
        if (v == self) continue;
        const double log_target =
            targets[static_cast<std::size_t>(m)].at(i, v);
        const double s_hat = std::exp(log_target);
        if (!std::isfinite(s_hat)) {
          ++result.nonfinite_targets;
          continue;
        }
        const int flat = i * net.vocab + v;
        const double log_out = out(m, flat);
        result.loss += inv_m * score_entropy_term(log_out, s_hat);
        grad_out(m, flat) = inv_m * (std::exp(log_out) - s_hat);
      }
    }
  }
  net_backward(net, trace, grad_out, result.grads);
  return result;
}

LossResult unbiased_loss(const Network& net, const NoisedBatch& batch,
                         const EnergyModel& model, const TrainConfig& cfg,
                         Rng& rng) {
  const int m_total = static_cast<int>(batch.x_t.size());
  if (m_total == 0) throw invalid_input("unbiased_loss: empty batch");
  const ShiftedEnergy shifted(model, -net.e_ref);

  const std::uint64_t base = rng();
  std::vector<double> log_targets(static_cast<std::size_t>(m_total));
  std::vector<double> log_p_bar(static_cast<std::size_t>(m_total));
  parallel_for_blocks(m_total, cfg.threads, [&](std::int64_t begin,
                                                std::int64_t end) {
    for (std::int64_t m = begin; m < end; ++m) {
      Rng stream = derive_rng(base, static_cast<std::uint64_t>(m));
      const double a_bar =
          cfg.schedule.cumulative(batch.t[static_cast<std::size_t>(m)]);
      log_targets[static_cast<std::size_t>(m)] = estimate_log_unnorm_marginal(
          shifted, batch.x_t[static_cast<std::size_t>(m)], a_bar,
          cfg.mc_samples, stream);
      log_p_bar[static_cast<std::size_t>(m)] =
          shifted.log_unnormalized(batch.x_t[static_cast<std::size_t>(m)]);
    }
  });

  NetTrace trace;
  const Vec out =
      net_forward_density(net, batch.x_t, batch.t, log_p_bar, &trace);

  LossResult result;
  result.grads = make_grads(net);
  Mat grad_out = Mat::Zero(m_total, 1);
  const double inv_m = 1.0 / static_cast<double>(m_total);
  for (int m = 0; m < m_total; ++m) {
    const double p_hat = std::exp(log_targets[static_cast<std::size_t>(m)]);
    if (!std::isfinite(p_hat)) {
      ++result.nonfinite_targets;
      continue;
    }
    const double log_out = out(m);
    const double model_mass = std::exp(log_out);
    if (!std::isfinite(model_mass)) {
      throw training_failure(
          "unbiased loss overflowed; raise the energy reference E_ref");
    }
    result.loss += inv_m * (model_mass - p_hat * log_out);
    grad_out(m, 0) = inv_m * (model_mass - p_hat);
  }
  net_backward(net, trace, grad_out, result.grads);
  return result;
}

namespace {

// Assembled log-score of a density net over the 1-Hamming neighborhood
// (evaluation only; sampling lives elsewhere).
ScoreGrid density_eval_score(const Network& net, const EnergyModel& model,
                             const SequenceState& x, double t) {
  std::vector<SequenceState> pts;
  pts.push_back(x);
  for (int i = 0; i < net.d; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < net.vocab; ++v) {
      if (v != self) pts.push_back(flipped(x, i, v));
    }
  }
  std::vector<double> ts(pts.size(), t);
  std::vector<double> lp(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) {
    lp[j] = model.log_unnormalized(pts[j]) - net.e_ref;
  }
  const Vec vals = net_forward_density(net, pts, ts, lp);
  ScoreGrid grid(net.d, net.vocab);
  std::size_t cursor = 1;
  for (int i = 0; i < net.d; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < net.vocab; ++v) {
      if (v != self) {
        grid.at(i, v) = vals(static_cast<int>(cursor++)) - vals(0);
      }
    }
  }
  return grid;
}

}  // namespace

double oracle_score_error(const Network& net, const EnergyModel& model,
                          const NoiseSchedule& schedule, std::uint64_t cap) {
  const ExactOracle oracle(model, cap);
  const auto& states = oracle.states();
  constexpr int kTimePoints = 10;
  double err_sum = 0.0;
  long long err_count = 0;
  for (int j = 0; j < kTimePoints; ++j) {
    const double t = (j + 0.5) * schedule.T / kTimePoints;
    const double a_bar = schedule.cumulative(t);
    for (const auto& x : states) {
      const ConcreteScoreMatrix exact = oracle.concrete_score(a_bar, x);
      ScoreGrid approx;
      if (net.head == Head::score) {
        approx = score_forward(net, x, t);
      } else {
        approx = density_eval_score(net, model, x, t);
      }
      for (int i = 0; i < exact.log_scores.d; ++i) {
        const int self = x.tokens[static_cast<std::size_t>(i)];
        for (int v = 0; v < exact.log_scores.vocab; ++v) {
          if (v == self) continue;
          err_sum += std::abs(approx.at(i, v) - exact.log_scores.at(i, v));
          ++err_count;
        }
      }
    }
  }
  return err_sum / static_cast<double>(err_count);
}

TrainResult train(const EnergyModel& model, const TrainConfig& cfg,
                  const TrainHooks& hooks,
                  const std::function<void(const TrainMetricsRow&)>& on_row) {
  validate_config(cfg);
  auto [d, vocab] = model.dims();

  Network net =
      cfg.variant == Variant::self_normalized
          ? make_score_network(d, vocab, cfg.hidden, cfg.time_dim, cfg.seed)
          : make_density_network(d, vocab, cfg.hidden, cfg.time_dim,
                                 cfg.gate_hidden, cfg.seed);

  ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));
  std::vector<SequenceState> gwg_chains;

  if (cfg.variant == Variant::unbiased) {
    // Energy reference: the largest log p_bar seen in a proposal probe. Any
    // constant works (scores are shift-invariant); this one keeps exp() of
    // the shifted values near or below 1.
    Rng probe_rng = derive_rng(cfg.seed, 0x65726566);
    double e_ref = kNegInf;
    for (int i = 0; i < cfg.warmup_probe; ++i) {
      e_ref = std::max(
          e_ref, model.log_unnormalized(uniform_state(d, vocab, probe_rng)));
    }
    net.e_ref = std::isfinite(e_ref) ? e_ref : 0.0;
  }

  OptimizerState opt = make_optimizer(net, cfg.lr, cfg.ema_decay);

  // Lazy oracle evaluation context.
  bool oracle_applies = true;
  try {
    checked_state_count(d, vocab, cfg.oracle_eval_cap);
  } catch (const capacity_error&) {
    oracle_applies = false;
  }

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(
      cfg.grad_steps / std::max(cfg.log_interval, 1) + 2));
  const auto t_start = std::chrono::steady_clock::now();

  auto refresh_buffer = [&](long long step) {
    if (cfg.proposal.kind == ProposalConfig::Kind::mcmc_gwg) {
      Rng rng = derive_rng(cfg.seed, 0x677767, static_cast<std::uint64_t>(step));
      if (gwg_chains.empty()) {
        gwg_chains.resize(static_cast<std::size_t>(cfg.proposal.refresh_chains));
        for (auto& c : gwg_chains) c = uniform_state(d, vocab, rng);
      }
      parallel_for_blocks(
          static_cast<std::int64_t>(gwg_chains.size()), cfg.threads,
          [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t c = begin; c < end; ++c) {
              Rng chain_rng = derive_rng(cfg.seed, 0x67776763,
                                         static_cast<std::uint64_t>(step),
                                         static_cast<std::uint64_t>(c));
              auto& x = gwg_chains[static_cast<std::size_t>(c)];
              for (int s = 0; s < cfg.proposal.gwg_steps; ++s) {
                x = gwg_step(model, x, cfg.proposal.gwg_temperature, chain_rng);
              }
            }
          });
      for (auto& c : gwg_chains) buffer.push(c);
    } else if (cfg.proposal.kind == ProposalConfig::Kind::model_mix &&
               hooks.model_sampler) {
      for (auto& x : hooks.model_sampler(net, opt.ema)) {
        buffer.push(std::move(x));
      }
    }
  };

  for (long long step = 0; step < cfg.grad_steps; ++step) {
    if (step % std::max(cfg.proposal.refresh_interval, 1) == 0) {
      refresh_buffer(step);
    }
    Rng prop_rng = derive_rng(cfg.seed, 0x70726f70, static_cast<std::uint64_t>(step));
    const NoisedBatch batch = propose_noised_batch(model, cfg, buffer, prop_rng);
    Rng loss_rng = derive_rng(cfg.seed, 0x6c6f7373, static_cast<std::uint64_t>(step));
    LossResult loss = cfg.variant == Variant::self_normalized
                          ? snis_loss(net, batch, model, cfg, loss_rng)
                          : unbiased_loss(net, batch, model, cfg, loss_rng);
    if (!std::isfinite(loss.loss)) {
      throw training_failure("non-finite loss " + std::to_string(loss.loss) +
                             " at step " + std::to_string(step));
    }
    result.nonfinite_targets += loss.nonfinite_targets;
    adam_step(opt, net, loss.grads);

    const bool last = step + 1 == cfg.grad_steps;
    if (step % std::max(cfg.log_interval, 1) == 0 || last) {
      TrainMetricsRow row;
      row.step = step;
      row.loss = loss.loss;
      row.nonfinite_targets = result.nonfinite_targets;
      row.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        t_start)
              .count();
      row.score_err_oracle = std::numeric_limits<double>::quiet_NaN();
      if (oracle_applies &&
          (step % std::max(cfg.eval_interval, 1) == 0 || last)) {
        row.score_err_oracle =
            oracle_score_error(opt.ema, model, cfg.schedule, cfg.oracle_eval_cap);
      }
      result.log.push_back(row);
      if (on_row) on_row(row);
    }
  }

  result.net = std::move(net);
  result.ema = std::move(opt.ema);
  result.ema.e_ref = result.net.e_ref;
  return result;
}

}  // namespace tcsis
