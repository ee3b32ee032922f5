#include "tcsis/tcs.hpp"

#include <cmath>

#include "tcsis/errors.hpp"
#include "tcsis/kernel.hpp"
#include "tcsis/mathutil.hpp"

namespace tcsis {

namespace {

double marginal_with_kernel(const EnergyModel& model, const SequenceState& x,
                            const SingleTokenKernel& k, long long n_samples,
                            Rng& rng) {
  LogSumExp acc;
  SequenceState draw;
  for (long long i = 0; i < n_samples; ++i) {
    sample_forward_into(x, k, rng, draw);
    acc.add(model.log_unnormalized(draw));
  }
  return acc.value();
}

}  // namespace

double estimate_log_unnorm_marginal(const EnergyModel& model,
                                    const SequenceState& x, double a_bar,
                                    long long n_samples, Rng& rng) {
  if (n_samples < 1) throw invalid_input("n_samples must be >= 1");
  if (!(a_bar >= 0.0)) throw invalid_input("a_bar must be >= 0");
  const SingleTokenKernel k = single_token_kernel(a_bar, x.vocab);
  return marginal_with_kernel(model, x, k, n_samples, rng);
}

McScoreEstimate estimate_concrete_score(const EnergyModel& model,
                                        const SequenceState& x, double a_bar,
                                        long long n_samples, Rng& rng,
                                        const McOptions& options) {
  if (n_samples < 1) throw invalid_input("n_samples must be >= 1");
  auto [d, vocab] = model.dims();
  if (x.dim() != d || x.vocab != vocab) {
    throw invalid_input("estimate_concrete_score: state/model mismatch");
  }
  const SingleTokenKernel k = single_token_kernel(a_bar, x.vocab);

  McScoreEstimate out;
  out.base_state = x;
  out.sample_count = n_samples;
  out.a_bar = a_bar;
  out.log_scores = ScoreGrid(d, vocab);

  // Seeding by (base, slot) rather than sharing the caller's stream keeps the
  // neighbor estimates order-independent; slot 0 for every marginal gives
  // common random numbers.
  const std::uint64_t base = rng();
  auto slot_rng = [&](std::uint64_t slot) {
    return derive_rng(base, options.common_random_numbers ? 0 : slot);
  };

  const std::uint64_t denom_slot =
      static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(vocab) + 1;
  Rng denom_rng = slot_rng(denom_slot);
  const double log_m_x =
      marginal_with_kernel(model, x, k, n_samples, denom_rng);

  SequenceState y = x;
  for (int i = 0; i < d; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < vocab; ++v) {
      if (v == self) continue;
      y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
      Rng neighbor_rng =
          slot_rng(static_cast<std::uint64_t>(i) * vocab + v + 1);
      out.log_scores.at(i, v) =
          marginal_with_kernel(model, y, k, n_samples, neighbor_rng) - log_m_x;
    }
    y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(self);
  }
  return out;
}

std::vector<double> snis_weights(const std::vector<double>& log_boltzmann) {
  if (log_boltzmann.empty()) throw invalid_input("snis_weights: empty input");
  double m = kNegInf;
  for (double v : log_boltzmann) {
    if (std::isnan(v)) throw invalid_input("snis_weights: NaN input");
    if (v > m) m = v;
  }
  if (m == kNegInf) {
    throw degenerate_input("snis_weights: all weights are zero");
  }
  std::vector<double> w(log_boltzmann.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_boltzmann[i] - m);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace tcsis
