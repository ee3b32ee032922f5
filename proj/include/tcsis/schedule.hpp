#pragma once

namespace tcsis {

// Noise schedule of the forward chain: sigma_t and its cumulative integral
// a_bar(t) = int_0^t sigma_s ds, with a_bar(0) = 0 and a_bar strictly
// increasing on [0, T].
struct NoiseSchedule {
  enum class Kind { constant, geometric };

  Kind kind = Kind::geometric;
  double T = 1.0;
  // constant kind
  double sigma_const = 1.0;
  // geometric kind: a_bar(t) = a_min * (a_max/a_min)^(t/T) - a_min
  double a_min = 1e-3;
  double a_max = 0.0;

  double cumulative(double t) const;
  double sigma(double t) const;

  static NoiseSchedule constant(double sigma, double T = 1.0);
  // a_max is solved so that p_stay(a_bar(T), vocab) - 1/V = eps_uniform.
  static NoiseSchedule geometric(int vocab, double eps_uniform = 1e-3,
                                 double a_min = 1e-3, double T = 1.0);
  // a_bar with p_stay(a_bar, vocab) - 1/V = eps.
  static double a_bar_for_uniform_gap(int vocab, double eps);
};

}  // namespace tcsis
