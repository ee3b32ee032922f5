#pragma once

#include <vector>

#include "tcsis/energy.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

// Log score over the 1-Hamming neighborhood of base_state; entry
// (i, base_state.tokens[i]) is exactly 0.
struct ConcreteScoreMatrix {
  ScoreGrid log_scores;
  SequenceState base_state;
  double a_bar = 0.0;
};

struct ExactDistributionTable {
  int d = 0;
  int vocab = 0;
  std::vector<double> log_masses;  // unnormalized, indexed by state rank
  double log_z = 0.0;

  double prob(std::uint64_t rank) const;
};

// Caches the state enumeration and energy table for repeated exact queries.
class ExactOracle {
 public:
  ExactOracle(const EnergyModel& model, std::uint64_t cap = kDefaultStateCap);

  // log sum_x0 p_{t|0}(x0 | x) p_bar(x0); equals log p_bar_t(x) up to log Z.
  double log_marginal(double a_bar, const SequenceState& x) const;

  ConcreteScoreMatrix concrete_score(double a_bar,
                                     const SequenceState& x) const;

  const ExactDistributionTable& target() const { return table_; }

  // Normalized log p_t over all states via the forward push of the target
  // table through the factorized kernel (Chapman-Kolmogorov route, linear
  // space). Independent of log_marginal's conditioning route.
  std::vector<double> pushforward_log_marginals(double a_bar) const;

  const std::vector<SequenceState>& states() const { return states_; }
  const std::vector<double>& log_p_bar() const { return log_p_bar_; }

 private:
  const EnergyModel& model_;
  int d_ = 0;
  int vocab_ = 0;
  std::vector<SequenceState> states_;
  std::vector<double> log_p_bar_;
  ExactDistributionTable table_;
};

double exact_log_marginal(const EnergyModel& model, double a_bar,
                          const SequenceState& x,
                          std::uint64_t cap = kDefaultStateCap);

ConcreteScoreMatrix exact_concrete_score(const EnergyModel& model,
                                         double a_bar, const SequenceState& x,
                                         std::uint64_t cap = kDefaultStateCap);

ExactDistributionTable exact_target_distribution(
    const EnergyModel& model, std::uint64_t cap = kDefaultStateCap);

}  // namespace tcsis
