#include "tcsis/kernel.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "tcsis/errors.hpp"
#include "tcsis/mathutil.hpp"

namespace tcsis {

SingleTokenKernel single_token_kernel(double a_bar, int vocab) {
  if (!(a_bar >= 0.0)) throw invalid_input("a_bar must be >= 0");
  if (vocab < 2) throw invalid_input("vocab must be >= 2");
  const double v = static_cast<double>(vocab);
  const double decay = -static_cast<double>(vocab) * a_bar;  // -V a_bar
  SingleTokenKernel k;
  k.vocab = vocab;
  // expm1/log1p forms keep small a_bar exact; p_stay is computed directly so
  // that p_stay >= 1/V holds even when the exponential underflows.
  k.p_other = -std::expm1(decay) / v;
  k.p_stay = 1.0 / v + (1.0 - 1.0 / v) * std::exp(decay);
  k.log_p_stay = std::log1p((v - 1.0) * std::exp(decay)) - std::log(v);
  k.log_p_other = a_bar == 0.0
                      ? kNegInf
                      : std::log(-std::expm1(decay)) - std::log(v);
  return k;
}

std::vector<double> matrix_exponential_oracle(double a_bar, int vocab) {
  if (!(a_bar >= 0.0)) throw invalid_input("a_bar must be >= 0");
  if (vocab < 2 || vocab > 64) {
    throw invalid_input("matrix exponential oracle supports 2 <= V <= 64");
  }
  const std::size_t n = static_cast<std::size_t>(vocab);
  const std::size_t nn = n * n;
  // M = a_bar * (J - V I)
  std::vector<double> m(nn, a_bar);
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = a_bar * (1.0 - static_cast<double>(vocab));
  }
  double max_abs = 0.0;
  for (double x : m) max_abs = std::max(max_abs, std::abs(x));
  int squarings = 0;
  double scaled_norm = max_abs * static_cast<double>(vocab);
  while (scaled_norm > 0.5 && squarings < 60) {
    scaled_norm *= 0.5;
    ++squarings;
  }
  const double scale = std::ldexp(1.0, -squarings);
  for (double& x : m) x *= scale;

  auto matmul = [n, nn](const std::vector<double>& a,
                        const std::vector<double>& b) {
    std::vector<double> c(nn, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double aik = a[i * n + k];
        for (std::size_t j = 0; j < n; ++j) {
          c[i * n + j] += aik * b[k * n + j];
        }
      }
    }
    return c;
  };

  // exp(M/2^s) by power series.
  std::vector<double> result(nn, 0.0);
  for (std::size_t i = 0; i < n; ++i) result[i * n + i] = 1.0;
  std::vector<double> term = result;
  for (int order = 1; order <= 30; ++order) {
    term = matmul(term, m);
    const double inv = 1.0 / static_cast<double>(order);
    double term_max = 0.0;
    for (std::size_t i = 0; i < nn; ++i) {
      term[i] *= inv;
      result[i] += term[i];
      term_max = std::max(term_max, std::abs(term[i]));
    }
    if (term_max < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) {
    result = matmul(result, result);
  }
  return result;
}

double log_transition_prob(const SequenceState& a, const SequenceState& b,
                           double a_bar) {
  if (a.dim() != b.dim() || a.vocab != b.vocab) {
    throw invalid_input("log_transition_prob: mismatched states");
  }
  const SingleTokenKernel k = single_token_kernel(a_bar, a.vocab);
  const int ham = hamming_distance(a, b);
  const int same = a.dim() - ham;
  double lp = static_cast<double>(same) * k.log_p_stay;
  if (ham > 0) lp += static_cast<double>(ham) * k.log_p_other;
  return lp;
}

void sample_forward_into(const SequenceState& x0, const SingleTokenKernel& k,
                         Rng& rng, SequenceState& out) {
  out.vocab = x0.vocab;
  out.tokens.resize(x0.tokens.size());
  for (std::size_t i = 0; i < x0.tokens.size(); ++i) {
    out.tokens[i] = static_cast<std::uint8_t>(
        corrupt_token(x0.tokens[i], k, rng));
  }
}

SequenceState sample_forward(const SequenceState& x0, double a_bar, Rng& rng) {
  const SingleTokenKernel k = single_token_kernel(a_bar, x0.vocab);
  SequenceState out;
  sample_forward_into(x0, k, rng, out);
  return out;
}

}  // namespace tcsis
