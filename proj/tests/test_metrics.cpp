#include <doctest.h>

#include <cmath>

#include "tcsis/energy.hpp"
#include "tcsis/errors.hpp"
#include "tcsis/mcmc.hpp"
#include "tcsis/metrics.hpp"
#include "tcsis/oracle.hpp"
#include "tcsis/rng.hpp"

using namespace tcsis;

namespace {

SequenceState make_state(std::initializer_list<int> tokens) {
  SequenceState x;
  x.vocab = 2;
  for (int t : tokens) x.tokens.push_back(static_cast<std::uint8_t>(t));
  return x;
}

std::vector<SequenceState> uniform_samples(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SequenceState> out(static_cast<std::size_t>(n));
  for (auto& x : out) {
    x.vocab = 2;
    x.tokens.resize(static_cast<std::size_t>(d));
    for (auto& t : x.tokens) t = static_cast<std::uint8_t>(rng() & 1);
  }
  return out;
}

SequenceState draw_exact(const ExactOracle& oracle, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t r = 0; r < oracle.states().size(); ++r) {
    acc += oracle.target().prob(r);
    if (u < acc) return oracle.states()[r];
  }
  return oracle.states().back();
}

}  // namespace

TEST_CASE("two-point correlation") {
  SUBCASE("identical all-up samples have zero variance") {
    std::vector<SequenceState> samples(100, make_state({1, 1, 1, 1}));
    const CorrelationCurve curve = two_point_correlation(samples, 2);
    for (double g : curve.values) CHECK(g == doctest::Approx(0.0));
  }
  SUBCASE("independent spins decorrelate") {
    const auto samples = uniform_samples(16, 100000, 5);
    const CorrelationCurve curve = two_point_correlation(samples, 4);
    for (int r = 1; r <= curve.r_max(); ++r) {
      CHECK(std::abs(curve.values[static_cast<std::size_t>(r)]) < 0.01);
    }
    CHECK(curve.values[0] == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("weighted enumeration matches the direct expectation") {
    IsingModel model(2, 0.4407, true);
    const ExactOracle oracle(model);
    std::vector<double> probs(16);
    for (std::uint64_t r = 0; r < 16; ++r) probs[r] = oracle.target().prob(r);
    const CorrelationCurve curve =
        two_point_correlation_weighted(oracle.states(), probs, 2);

    // Independent route: single fixed site pair, one direction.
    auto spin = [](const SequenceState& x, int site) {
      return 2.0 * x.tokens[static_cast<std::size_t>(site)] - 1.0;
    };
    for (int r = 0; r <= 1; ++r) {
      double e_prod = 0.0, e_a = 0.0, e_b = 0.0;
      for (std::uint64_t s = 0; s < 16; ++s) {
        const SequenceState& x = oracle.states()[s];
        const double p = probs[s];
        e_prod += p * spin(x, 0) * spin(x, r);  // sites 0 and (0, r)
        e_a += p * spin(x, 0);
        e_b += p * spin(x, r);
      }
      CHECK(std::abs(curve.values[static_cast<std::size_t>(r)] -
                     (e_prod - e_a * e_b)) < 1e-12);
    }
  }
  SUBCASE("global inversion leaves the curve unchanged") {
    auto samples = uniform_samples(16, 2000, 9);
    const CorrelationCurve base = two_point_correlation(samples, 4);
    for (auto& x : samples) x = inverted(x);
    const CorrelationCurve mirrored = two_point_correlation(samples, 4);
    for (std::size_t r = 0; r < base.values.size(); ++r) {
      CHECK(std::abs(base.values[r] - mirrored.values[r]) < 1e-12);
    }
  }
  SUBCASE("empty input is invalid") {
    CHECK_THROWS_AS(two_point_correlation({}, 2), invalid_input);
  }
}

TEST_CASE("magnetization histogram") {
  SUBCASE("single all-up sample lands in the top bin") {
    std::vector<SequenceState> samples(
        1, make_state({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}));
    const MagnetizationHistogram hist = magnetization_histogram(samples);
    CHECK(hist.counts.size() == 33);
    CHECK(hist.counts.back() == 1);
    long long total = 0;
    for (long long c : hist.counts) total += c;
    CHECK(total == 1);
  }
  SUBCASE("counts sum to the sample count") {
    const auto samples = uniform_samples(16, 10000, 3);
    const MagnetizationHistogram hist = magnetization_histogram(samples);
    long long total = 0;
    for (long long c : hist.counts) total += c;
    CHECK(total == 10000);
  }
  SUBCASE("oracle samples give a symmetric histogram") {
    IsingModel model(2, 0.4407, true);
    const ExactOracle oracle(model);
    Rng rng(7);
    std::vector<SequenceState> samples;
    for (int i = 0; i < 100000; ++i) samples.push_back(draw_exact(oracle, rng));
    const MagnetizationHistogram hist = magnetization_histogram(samples);
    // Chi-square over mirrored bin pairs.
    double chi2 = 0.0;
    int dof = 0;
    const std::size_t n = hist.counts.size();
    for (std::size_t b = 0; b < n / 2; ++b) {
      const double lo = static_cast<double>(hist.counts[b]);
      const double hi = static_cast<double>(hist.counts[n - 1 - b]);
      if (lo + hi < 10) continue;
      const double expected = 0.5 * (lo + hi);
      chi2 += (lo - expected) * (lo - expected) / expected +
              (hi - expected) * (hi - expected) / expected;
      ++dof;
    }
    CHECK(dof >= 2);
    CHECK(chi2 < 16.3);  // 99.9% quantile at 3 dof
  }
  SUBCASE("global inversion mirrors the counts") {
    auto samples = uniform_samples(9, 500, 21);
    const MagnetizationHistogram base = magnetization_histogram(samples);
    for (auto& x : samples) x = inverted(x);
    const MagnetizationHistogram mirrored = magnetization_histogram(samples);
    const std::size_t n = base.counts.size();
    for (std::size_t b = 0; b < n; ++b) {
      CHECK(base.counts[b] == mirrored.counts[n - 1 - b]);
    }
  }
  SUBCASE("empty input is invalid") {
    CHECK_THROWS_AS(magnetization_histogram({}), invalid_input);
  }
}

TEST_CASE("curve discrepancy") {
  CorrelationCurve a;
  a.values = {1.0, 0.5, 0.2};
  CorrelationCurve b = a;
  CHECK(curve_discrepancy(a, b) == 0.0);
  b.values[1] += 0.1;
  CHECK(curve_discrepancy(a, b) == doctest::Approx(0.1));
  b.values.pop_back();
  CHECK_THROWS_AS(curve_discrepancy(a, b), invalid_input);
}

TEST_CASE("half-vs-half glauber noise floor on the four-lattice") {
  IsingModel model(4, 0.4407, true);
  ChainConfig cfg;
  cfg.sampler = ChainConfig::Sampler::glauber;
  cfg.n_steps = 10000;
  cfg.n_chains = 10000;
  cfg.seed = 4;
  cfg.threads = 2;
  const ChainRun run = run_chain(cfg, model);
  const std::span<const SequenceState> all(run.samples);
  const CorrelationCurve half_a =
      two_point_correlation(all.subspan(0, 5000), 4);
  const CorrelationCurve half_b =
      two_point_correlation(all.subspan(5000, 5000), 4);
  CHECK(curve_discrepancy(half_a, half_b) < 0.03);
}

TEST_CASE("total variation distance") {
  IsingModel critical(2, 0.4407, true);
  const ExactOracle oracle(critical);

  SUBCASE("sampling from the exact table is self-consistent") {
    Rng rng(17);
    std::vector<SequenceState> samples;
    for (int i = 0; i < 1000000; ++i) {
      samples.push_back(draw_exact(oracle, rng));
    }
    CHECK(tv_distance(samples, oracle.target()) <= 0.01);
  }
  SUBCASE("point mass against the uniform table") {
    IsingModel flat(2, 0.0, true);
    const ExactDistributionTable table = exact_target_distribution(flat);
    std::vector<SequenceState> samples(1000, make_state({1, 0, 1, 1}));
    CHECK(tv_distance(samples, table) == doctest::Approx(15.0 / 16.0));
  }
  SUBCASE("matching masses give zero distance") {
    IsingModel flat(2, 0.0, true);
    const ExactDistributionTable table = exact_target_distribution(flat);
    const auto states = enumerate_states(4, 2);
    CHECK(tv_distance(states, table) == doctest::Approx(0.0));
  }
  SUBCASE("dimension mismatch and empties are invalid") {
    CHECK_THROWS_AS(tv_distance({}, oracle.target()), invalid_input);
    std::vector<SequenceState> bad(1, make_state({1, 0}));
    CHECK_THROWS_AS(tv_distance(bad, oracle.target()), invalid_input);
  }
}
