#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace tcsis {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(v_i)) with max subtraction; -inf entries contribute nothing.
inline double log_sum_exp(std::span<const double> values) {
  double m = kNegInf;
  for (double v : values) {
    if (v > m) m = v;
  }
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

// Streaming log-sum-exp accumulator; deterministic for a fixed add order.
class LogSumExp {
 public:
  void add(double v) {
    if (v == kNegInf) return;
    if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }
  double value() const {
    if (max_ == kNegInf) return kNegInf;
    return max_ + std::log(sum_);
  }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  double hi = v[v.size() / 2];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + v.size() / 2 - 1, v.end());
  return 0.5 * (hi + v[v.size() / 2 - 1]);
}

}  // namespace tcsis
