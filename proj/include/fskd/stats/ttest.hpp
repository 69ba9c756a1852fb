#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"

namespace fskd {
namespace stats {

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz.
inline double betacf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  constexpr int kMaxIter = 500;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), absolute error well below 1e-10.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericError("incomplete beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// Two-sided tail probability of a Student-t variable: P(|T| >= |t|) for the
// given degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) throw NumericError("student t: dof must be positive");
  const double t2 = t * t;
  return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2));
}

// Two-sided critical value: the c with P(|T| >= c) = alpha. Tail probability
// is strictly decreasing in c, so bisection suffices.
inline double student_t_critical_value(double alpha, double dof) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw NumericError("student t: alpha must be in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (student_t_two_sided_p(hi, dof) > alpha) {
    hi *= 2.0;
    if (hi > 1e12) throw NumericError("student t: critical value search diverged");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_two_sided_p(mid, dof) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct TTestResult {
  double t_statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  double alpha = 0.01;
  bool reject_null = false;
  double critical_value = 0.0;
};

// Equal-size two-sample t-test:
//   t = (mean_x - mean_y) / sqrt((s_x^2 + s_y^2) / n),  dof = 2n - 2,
// with s_x, s_y the sample standard deviations. Two-sided decision.
inline TTestResult t_test(const std::vector<double>& x, const std::vector<double>& y, double alpha = 0.01) {
  if (x.size() != y.size())
    throw NumericError("t_test: groups must have equal size (" + std::to_string(x.size()) + " vs " +
                       std::to_string(y.size()) + ")");
  const std::size_t n = x.size();
  if (n < 2) throw NumericError("t_test: need at least 2 observations per group");
  double mx = 0.0, my = 0.0;
  for (double v : x) mx += v;
  for (double v : y) my += v;
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double vx = 0.0, vy = 0.0;
  for (double v : x) vx += (v - mx) * (v - mx);
  for (double v : y) vy += (v - my) * (v - my);
  vx /= static_cast<double>(n - 1);
  vy /= static_cast<double>(n - 1);

  TTestResult res;
  res.dof = 2 * n - 2;
  res.alpha = alpha;
  const double pooled = (vx + vy) / static_cast<double>(n);
  if (pooled == 0.0) {
    if (mx != my) throw NumericError("t_test: zero pooled variance with unequal means, statistic undefined");
    res.t_statistic = 0.0;
  } else {
    res.t_statistic = (mx - my) / std::sqrt(pooled);
  }
  res.p_value = student_t_two_sided_p(res.t_statistic, static_cast<double>(res.dof));
  res.critical_value = student_t_critical_value(alpha, static_cast<double>(res.dof));
  res.reject_null = std::fabs(res.t_statistic) > res.critical_value;
  return res;
}

}  // namespace stats
}  // namespace fskd
