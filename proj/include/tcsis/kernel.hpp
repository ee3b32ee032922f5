#pragma once

#include <vector>

#include "tcsis/rng.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

// Per-coordinate transition probabilities of the uniform-kernel forward
// chain after accumulated noise a_bar:
//   p_stay  = 1/V + (1 - 1/V) exp(-V a_bar)
//   p_other = (1 - exp(-V a_bar)) / V
struct SingleTokenKernel {
  double p_stay = 1.0;
  double p_other = 0.0;
  double log_p_stay = 0.0;
  double log_p_other = 0.0;
  int vocab = 2;
};

SingleTokenKernel single_token_kernel(double a_bar, int vocab);

// exp(a_bar * Q) with Q = J - V*I, computed by scaling-and-squaring of the
// truncated power series. Validation path only; V <= 64. Row-major V x V.
std::vector<double> matrix_exponential_oracle(double a_bar, int vocab);

// log p_{t|0}(b | a) for the factorized kernel; symmetric in (a, b).
double log_transition_prob(const SequenceState& a, const SequenceState& b,
                           double a_bar);

// One coordinate: keep with p_stay, otherwise uniform over the V-1 others.
inline int corrupt_token(int token, const SingleTokenKernel& k, Rng& rng) {
  if (uniform01(rng) < k.p_stay) return token;
  const int j = static_cast<int>(
      uniform_below(rng, static_cast<std::uint64_t>(k.vocab - 1)));
  return j >= token ? j + 1 : j;
}

// Writes the corrupted copy of x0 into out (hot path; no allocation).
void sample_forward_into(const SequenceState& x0, const SingleTokenKernel& k,
                         Rng& rng, SequenceState& out);

SequenceState sample_forward(const SequenceState& x0, double a_bar, Rng& rng);

}  // namespace tcsis
