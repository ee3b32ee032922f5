#include "tcsis/metrics.hpp"

#include <cmath>
#include <string>

#include "tcsis/errors.hpp"

namespace tcsis {

namespace {

void check_lattice_samples(std::span<const SequenceState> samples, int side) {
  if (samples.empty()) throw invalid_input("empty sample set");
  for (const auto& x : samples) {
    if (x.dim() != side * side || x.vocab != 2) {
      throw invalid_input("samples must be binary with d = " +
                          std::to_string(side * side));
    }
  }
}

// Accumulates pooled spin products for one configuration. For each r, pairs
// (i, i+r) along both axes with periodic displacement.
struct CorrelationAccumulator {
  int side;
  int r_max;
  std::vector<double> prod_sum;  // per r
  double spin_sum = 0.0;
  double weight_sum = 0.0;

  explicit CorrelationAccumulator(int side_)
      : side(side_), r_max(side_ / 2), prod_sum(static_cast<std::size_t>(side_ / 2) + 1, 0.0) {}

  void add(const SequenceState& x, double weight) {
    const int L = side;
    auto spin = [&](int r, int c) {
      return 2.0 * x.tokens[static_cast<std::size_t>(r * L + c)] - 1.0;
    };
    double m = 0.0;
    for (int r = 0; r < L; ++r) {
      for (int c = 0; c < L; ++c) m += spin(r, c);
    }
    spin_sum += weight * m / (L * L);
    for (int r = 0; r <= r_max; ++r) {
      double acc = 0.0;
      for (int row = 0; row < L; ++row) {
        for (int col = 0; col < L; ++col) {
          const double s = spin(row, col);
          acc += s * spin(row, (col + r) % L);        // horizontal
          acc += s * spin((row + r) % L, col);        // vertical
        }
      }
      prod_sum[static_cast<std::size_t>(r)] += weight * acc / (2.0 * L * L);
    }
    weight_sum += weight;
  }

  CorrelationCurve finish(long long sample_count) const {
    CorrelationCurve curve;
    curve.sample_count = sample_count;
    const double mean_spin = spin_sum / weight_sum;
    curve.values.resize(prod_sum.size());
    for (std::size_t r = 0; r < prod_sum.size(); ++r) {
      curve.values[r] = prod_sum[r] / weight_sum - mean_spin * mean_spin;
    }
    return curve;
  }
};

}  // namespace

CorrelationCurve two_point_correlation(std::span<const SequenceState> samples,
                                       int side) {
  check_lattice_samples(samples, side);
  CorrelationAccumulator acc(side);
  for (const auto& x : samples) acc.add(x, 1.0);
  return acc.finish(static_cast<long long>(samples.size()));
}

CorrelationCurve two_point_correlation_weighted(
    std::span<const SequenceState> states, std::span<const double> weights,
    int side) {
  check_lattice_samples(states, side);
  if (states.size() != weights.size()) {
    throw invalid_input("weighted correlation: size mismatch");
  }
  CorrelationAccumulator acc(side);
  for (std::size_t i = 0; i < states.size(); ++i) {
    acc.add(states[i], weights[i]);
  }
  return acc.finish(static_cast<long long>(states.size()));
}

MagnetizationHistogram magnetization_histogram(
    std::span<const SequenceState> samples, int bins) {
  if (samples.empty()) throw invalid_input("empty sample set");
  const int d = samples.front().dim();
  if (bins <= 0) bins = 2 * d + 1;
  MagnetizationHistogram hist;
  hist.sample_count = static_cast<long long>(samples.size());
  hist.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  const double lo = -static_cast<double>(d) - 0.5;
  const double hi = static_cast<double>(d) + 0.5;
  for (int b = 0; b <= bins; ++b) {
    hist.bin_edges[static_cast<std::size_t>(b)] =
        lo + (hi - lo) * b / static_cast<double>(bins);
  }
  hist.counts.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& x : samples) {
    if (x.dim() != d) throw invalid_input("inhomogeneous sample dimensions");
    double m = 0.0;
    for (auto t : x.tokens) m += 2.0 * t - 1.0;
    int b = static_cast<int>((m - lo) / (hi - lo) * bins);
    b = std::min(std::max(b, 0), bins - 1);
    ++hist.counts[static_cast<std::size_t>(b)];
  }
  return hist;
}

double curve_discrepancy(const CorrelationCurve& a,
                         const CorrelationCurve& b) {
  if (a.values.size() != b.values.size()) {
    throw invalid_input("curve_discrepancy: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t r = 0; r < a.values.size(); ++r) {
    worst = std::max(worst, std::abs(a.values[r] - b.values[r]));
  }
  return worst;
}

double tv_distance(std::span<const SequenceState> samples,
                   const ExactDistributionTable& exact) {
  if (samples.empty()) throw invalid_input("empty sample set");
  const std::uint64_t n_states =
      checked_state_count(exact.d, exact.vocab, kDefaultStateCap);
  std::vector<double> empirical(n_states, 0.0);
  const double unit = 1.0 / static_cast<double>(samples.size());
  for (const auto& x : samples) {
    if (x.dim() != exact.d || x.vocab != exact.vocab) {
      throw invalid_input("tv_distance: sample does not match table dims");
    }
    empirical[static_cast<std::size_t>(state_rank(x))] += unit;
  }
  double tv = 0.0;
  for (std::uint64_t r = 0; r < n_states; ++r) {
    tv += std::abs(empirical[static_cast<std::size_t>(r)] - exact.prob(r));
  }
  return 0.5 * tv;
}

}  // namespace tcsis
