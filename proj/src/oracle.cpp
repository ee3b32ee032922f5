#include "tcsis/oracle.hpp"

#include <cmath>

#include "tcsis/errors.hpp"
#include "tcsis/kernel.hpp"
#include "tcsis/mathutil.hpp"

namespace tcsis {

double ExactDistributionTable::prob(std::uint64_t rank) const {
  return std::exp(log_masses[static_cast<std::size_t>(rank)] - log_z);
}

ExactOracle::ExactOracle(const EnergyModel& model, std::uint64_t cap)
    : model_(model) {
  auto [d, vocab] = model.dims();
  d_ = d;
  vocab_ = vocab;
  states_ = enumerate_states(d_, vocab_, cap);
  log_p_bar_.reserve(states_.size());
  for (const auto& s : states_) {
    log_p_bar_.push_back(model_.log_unnormalized(s));
  }
  table_.d = d_;
  table_.vocab = vocab_;
  table_.log_masses = log_p_bar_;
  table_.log_z = log_sum_exp(log_p_bar_);
}

double ExactOracle::log_marginal(double a_bar, const SequenceState& x) const {
  if (x.dim() != d_ || x.vocab != vocab_) {
    throw invalid_input("log_marginal: state does not match model dims");
  }
  const SingleTokenKernel k = single_token_kernel(a_bar, vocab_);
  LogSumExp acc;
  for (std::size_t r = 0; r < states_.size(); ++r) {
    const int ham = hamming_distance(states_[r], x);
    double lp = static_cast<double>(d_ - ham) * k.log_p_stay;
    if (ham > 0) lp += static_cast<double>(ham) * k.log_p_other;
    acc.add(lp + log_p_bar_[r]);
  }
  return acc.value();
}

ConcreteScoreMatrix ExactOracle::concrete_score(double a_bar,
                                                const SequenceState& x) const {
  ConcreteScoreMatrix out;
  out.base_state = x;
  out.a_bar = a_bar;
  out.log_scores = ScoreGrid(d_, vocab_);
  const double log_m_x = log_marginal(a_bar, x);
  SequenceState y = x;
  for (int i = 0; i < d_; ++i) {
    const int self = x.tokens[static_cast<std::size_t>(i)];
    for (int v = 0; v < vocab_; ++v) {
      if (v == self) continue;
      y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
      out.log_scores.at(i, v) = log_marginal(a_bar, y) - log_m_x;
    }
    y.tokens[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(self);
  }
  return out;
}

std::vector<double> ExactOracle::pushforward_log_marginals(
    double a_bar) const {
  const SingleTokenKernel k = single_token_kernel(a_bar, vocab_);
  const std::size_t n = states_.size();
  std::vector<double> p(n);
  for (std::size_t r = 0; r < n; ++r) {
    p[r] = std::exp(log_p_bar_[r] - table_.log_z);
  }
  // Contract one coordinate at a time: new[x] = (p_stay - p_other) * p[x]
  // + p_other * (sum over the coordinate's V variants).
  std::vector<double> next(n);
  std::uint64_t stride = 1;
  for (int coord = d_ - 1; coord >= 0; --coord) {
    const std::uint64_t v64 = static_cast<std::uint64_t>(vocab_);
    const std::uint64_t block = stride * v64;
    for (std::uint64_t base = 0; base < n; base += block) {
      for (std::uint64_t off = 0; off < stride; ++off) {
        double group_sum = 0.0;
        for (std::uint64_t v = 0; v < v64; ++v) {
          group_sum += p[base + off + v * stride];
        }
        for (std::uint64_t v = 0; v < v64; ++v) {
          const std::uint64_t idx = base + off + v * stride;
          next[idx] = (k.p_stay - k.p_other) * p[idx] + k.p_other * group_sum;
        }
      }
    }
    p.swap(next);
    stride = block;
  }
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = std::log(p[r]);
  return out;
}

double exact_log_marginal(const EnergyModel& model, double a_bar,
                          const SequenceState& x, std::uint64_t cap) {
  return ExactOracle(model, cap).log_marginal(a_bar, x);
}

ConcreteScoreMatrix exact_concrete_score(const EnergyModel& model,
                                         double a_bar, const SequenceState& x,
                                         std::uint64_t cap) {
  return ExactOracle(model, cap).concrete_score(a_bar, x);
}

ExactDistributionTable exact_target_distribution(const EnergyModel& model,
                                                 std::uint64_t cap) {
  return ExactOracle(model, cap).target();
}

}  // namespace tcsis
