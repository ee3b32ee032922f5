#include "tcsis/energy.hpp"

#include <string>

#include "tcsis/errors.hpp"

namespace tcsis {

IsingModel::IsingModel(int side, double beta, bool periodic)
    : side_(side), beta_(beta), periodic_(periodic) {
  if (side < 2) throw invalid_input("Ising side length must be >= 2");
  if (!(beta > 0.0) && beta != 0.0) {
    throw invalid_input("Ising beta must be finite and >= 0");
  }
  const int L = side_;
  auto site_of = [L](int r, int c) { return r * L + c; };
  for (int r = 0; r < L; ++r) {
    for (int c = 0; c < L; ++c) {
      if (periodic_ || c + 1 < L) {
        bonds_.emplace_back(site_of(r, c), site_of(r, (c + 1) % L));
      }
      if (periodic_ || r + 1 < L) {
        bonds_.emplace_back(site_of(r, c), site_of((r + 1) % L, c));
      }
    }
  }
  const int d = L * L;
  std::vector<std::vector<int>> lists(static_cast<std::size_t>(d));
  for (auto [a, b] : bonds_) {
    lists[static_cast<std::size_t>(a)].push_back(b);
    lists[static_cast<std::size_t>(b)].push_back(a);
  }
  neighbor_begin_.assign(static_cast<std::size_t>(d) + 1, 0);
  for (int i = 0; i < d; ++i) {
    neighbor_begin_[static_cast<std::size_t>(i) + 1] =
        neighbor_begin_[static_cast<std::size_t>(i)] +
        static_cast<int>(lists[static_cast<std::size_t>(i)].size());
    neighbors_.insert(neighbors_.end(), lists[static_cast<std::size_t>(i)].begin(),
                      lists[static_cast<std::size_t>(i)].end());
  }
}

std::pair<int, int> IsingModel::dims() const { return {side_ * side_, 2}; }

void IsingModel::check_state(const SequenceState& x) const {
  if (x.dim() != side_ * side_) {
    throw invalid_input("state dimension " + std::to_string(x.dim()) +
                        " does not match lattice " + std::to_string(side_) +
                        "x" + std::to_string(side_));
  }
  if (x.vocab != 2) throw invalid_input("Ising states are binary (V = 2)");
}

double IsingModel::log_unnormalized(const SequenceState& x) const {
  check_state(x);
  // s_a * s_b = +1 iff tokens agree.
  int sum = 0;
  for (auto [a, b] : bonds_) {
    sum += x.tokens[static_cast<std::size_t>(a)] ==
                   x.tokens[static_cast<std::size_t>(b)]
               ? 1
               : -1;
  }
  return beta_ * static_cast<double>(sum);
}

int IsingModel::neighbor_spin_sum(const SequenceState& x, int site) const {
  int sum = 0;
  for (int k = neighbor_begin_[static_cast<std::size_t>(site)];
       k < neighbor_begin_[static_cast<std::size_t>(site) + 1]; ++k) {
    sum += 2 * static_cast<int>(x.tokens[static_cast<std::size_t>(
               neighbors_[static_cast<std::size_t>(k)])]) -
           1;
  }
  return sum;
}

double IsingModel::flip_log_delta(const SequenceState& x, int site,
                                  int token) const {
  check_state(x);
  if (site < 0 || site >= x.dim()) {
    throw invalid_input("flip site " + std::to_string(site) + " out of range");
  }
  if (token < 0 || token >= x.vocab) {
    throw invalid_input("flip token " + std::to_string(token) +
                        " out of range");
  }
  const int old_token = x.tokens[static_cast<std::size_t>(site)];
  if (token == old_token) return 0.0;
  const int spin_change = 2 * (token - old_token);  // +-2 for binary tokens
  return beta_ * static_cast<double>(spin_change * neighbor_spin_sum(x, site));
}

}  // namespace tcsis
