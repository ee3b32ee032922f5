#include "tcsis/schedule.hpp"

#include <cmath>
#include <string>

#include "tcsis/errors.hpp"

namespace tcsis {

namespace {

void check_time(double t, double T) {
  if (!(t >= 0.0 && t <= T)) {
    throw invalid_input("time " + std::to_string(t) + " outside [0, " +
                        std::to_string(T) + "]");
  }
}

}  // namespace

double NoiseSchedule::cumulative(double t) const {
  check_time(t, T);
  if (kind == Kind::constant) return sigma_const * t;
  return a_min * std::expm1(std::log(a_max / a_min) * (t / T));
}

double NoiseSchedule::sigma(double t) const {
  check_time(t, T);
  if (kind == Kind::constant) return sigma_const;
  const double rate = std::log(a_max / a_min) / T;
  return rate * a_min * std::exp(rate * t);
}

NoiseSchedule NoiseSchedule::constant(double sigma, double T) {
  if (!(sigma > 0.0)) throw invalid_input("constant schedule needs sigma > 0");
  if (!(T > 0.0)) throw invalid_input("schedule needs T > 0");
  NoiseSchedule s;
  s.kind = Kind::constant;
  s.sigma_const = sigma;
  s.T = T;
  return s;
}

NoiseSchedule NoiseSchedule::geometric(int vocab, double eps_uniform,
                                       double a_min, double T) {
  if (vocab < 2) throw invalid_input("geometric schedule needs vocab >= 2");
  if (!(eps_uniform > 0.0 && eps_uniform < 1.0)) {
    throw invalid_input("eps_uniform must be in (0, 1)");
  }
  if (!(a_min > 0.0)) throw invalid_input("a_min must be > 0");
  if (!(T > 0.0)) throw invalid_input("schedule needs T > 0");
  NoiseSchedule s;
  s.kind = Kind::geometric;
  s.a_min = a_min;
  s.a_max = a_min + a_bar_for_uniform_gap(vocab, eps_uniform);
  s.T = T;
  return s;
}

double NoiseSchedule::a_bar_for_uniform_gap(int vocab, double eps) {
  // (1 - 1/V) exp(-V a) = eps
  const double v = static_cast<double>(vocab);
  return std::log((v - 1.0) / (eps * v)) / v;
}

}  // namespace tcsis
