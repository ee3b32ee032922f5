#pragma once

#include <vector>

#include "tcsis/energy.hpp"
#include "tcsis/rng.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

struct McOptions {
  // Couple the forward-corruption noise across the neighbor estimates
  // (common random numbers). Off by default.
  bool common_random_numbers = false;
};

struct McScoreEstimate {
  ScoreGrid log_scores;
  SequenceState base_state;
  long long sample_count = 0;
  double a_bar = 0.0;
};

// log sum_{i<N} p_bar(x0_i) with x0_i drawn from the forward kernel at x
// (valid as p_{t|0}(x0|x) by kernel symmetry). Estimates N * p_bar_t(x)
// unbiasedly in linear space.
double estimate_log_unnorm_marginal(const EnergyModel& model,
                                    const SequenceState& x, double a_bar,
                                    long long n_samples, Rng& rng);

// Monte-Carlo concrete score: entry (i, v) is the difference of the marginal
// estimates at flip(x, i, v) and at x. One fresh estimate per marginal; the
// denominator estimate is shared across entries.
McScoreEstimate estimate_concrete_score(const EnergyModel& model,
                                        const SequenceState& x, double a_bar,
                                        long long n_samples, Rng& rng,
                                        const McOptions& options = {});

// Softmax of log Boltzmann factors; the self-normalized importance weights.
std::vector<double> snis_weights(const std::vector<double>& log_boltzmann);

}  // namespace tcsis
