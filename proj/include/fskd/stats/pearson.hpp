#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"

namespace fskd {
namespace stats {

// Pearson correlation coefficient over paired observations, clamped to
// [-1, 1] against rounding. Constant inputs have no defined correlation.
inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw NumericError("pearson_r: length mismatch (" + std::to_string(x.size()) + " vs " +
                       std::to_string(y.size()) + ")");
  const std::size_t n = x.size();
  if (n < 2) throw NumericError("pearson_r: need at least 2 observations");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson_r: constant input, zero denominator");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

}  // namespace stats
}  // namespace fskd
