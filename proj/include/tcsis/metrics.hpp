#pragma once

#include <span>
#include <vector>

#include "tcsis/oracle.hpp"
#include "tcsis/state.hpp"

namespace tcsis {

// Connected two-point correlation G(r), r = 0 .. floor(L/2), in the +-1 spin
// convention, pooled over sites, both lattice axes, and samples with periodic
// displacement.
struct CorrelationCurve {
  std::vector<double> values;
  long long sample_count = 0;

  int r_max() const { return static_cast<int>(values.size()) - 1; }
};

CorrelationCurve two_point_correlation(std::span<const SequenceState> samples,
                                       int side);

// Exact curve: states weighted by probabilities instead of sampled.
CorrelationCurve two_point_correlation_weighted(
    std::span<const SequenceState> states, std::span<const double> weights,
    int side);

struct MagnetizationHistogram {
  std::vector<double> bin_edges;  // n_bins + 1 edges spanning [-d, d]
  std::vector<long long> counts;
  long long sample_count = 0;
};

// Histogram of M(x) = sum_i s_i; default binning is 2d+1 integer-centered
// bins.
MagnetizationHistogram magnetization_histogram(
    std::span<const SequenceState> samples, int bins = 0);

// max_r |a(r) - b(r)|
double curve_discrepancy(const CorrelationCurve& a, const CorrelationCurve& b);

// (1/2) sum_x |empirical(x) - exact(x)| over the enumerated state space.
double tv_distance(std::span<const SequenceState> samples,
                   const ExactDistributionTable& exact);

}  // namespace tcsis
