#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "tcsis/state.hpp"

namespace tcsis {

// Unnormalized target density in log space. Implementations never compute
// the partition function.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  // (d, V)
  virtual std::pair<int, int> dims() const = 0;

  virtual double log_unnormalized(const SequenceState& x) const = 0;

  // log p_bar(x with token `site` set to `token`) - log p_bar(x).
  virtual double flip_log_delta(const SequenceState& x, int site,
                                int token) const = 0;
};

// Lattice Ising model, log p_bar(x) = beta * sum_<ij> s_i s_j with
// s = 2*token - 1. Each undirected bond enters the sum once; on the periodic
// L=2 lattice opposite directions wrap onto the same pair of sites, so that
// pair carries a doubled bond.
class IsingModel final : public EnergyModel {
 public:
  IsingModel(int side, double beta, bool periodic = true);

  std::pair<int, int> dims() const override;
  double log_unnormalized(const SequenceState& x) const override;
  double flip_log_delta(const SequenceState& x, int site,
                        int token) const override;

  int side() const { return side_; }
  double beta() const { return beta_; }
  bool periodic() const { return periodic_; }
  int bond_count() const { return static_cast<int>(bonds_.size()); }

  // Sum of +-1 neighbor spins at a site (multiset of bonds).
  int neighbor_spin_sum(const SequenceState& x, int site) const;

 private:
  void check_state(const SequenceState& x) const;

  int side_;
  double beta_;
  bool periodic_;
  std::vector<std::pair<int, int>> bonds_;
  // CSR neighbor multiset per site, consistent with bonds_.
  std::vector<int> neighbors_;
  std::vector<int> neighbor_begin_;
};

// Adds a constant to log p_bar; concrete scores are invariant to the shift.
class ShiftedEnergy final : public EnergyModel {
 public:
  ShiftedEnergy(const EnergyModel& base, double shift)
      : base_(base), shift_(shift) {}

  std::pair<int, int> dims() const override { return base_.dims(); }
  double log_unnormalized(const SequenceState& x) const override {
    return base_.log_unnormalized(x) + shift_;
  }
  double flip_log_delta(const SequenceState& x, int site,
                        int token) const override {
    return base_.flip_log_delta(x, site, token);
  }

 private:
  const EnergyModel& base_;
  double shift_;
};

}  // namespace tcsis
