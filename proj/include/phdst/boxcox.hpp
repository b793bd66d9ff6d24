#pragma once

// Box-Cox power transform with per-series shift, plus maximum-likelihood
// lambda estimation over a fixed grid.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "phdst/error.hpp"

namespace phdst::feat {

struct BoxCoxParams {
  double lambda = 1.0;
  double shift = 1.0;      // added before the transform; keeps inputs positive
  bool degenerate = false;  // set when fitted on a constant series

  friend bool operator==(const BoxCoxParams&, const BoxCoxParams&) = default;
};

// ((y+s)^lambda - 1) / lambda, or ln(y+s) at lambda = 0.
inline double boxcox_apply(double y, const BoxCoxParams& p) {
  const double t = y + p.shift;
  if (!(t > 0.0)) throw NumericError("boxcox_apply: y + shift must be positive");
  const double logt = std::log(t);
  if (p.lambda == 0.0) return logt;
  return std::expm1(p.lambda * logt) / p.lambda;
}

// Exact inverse minus the shift; requires 1 + lambda*z > 0 when lambda != 0.
inline double boxcox_invert(double z, const BoxCoxParams& p) {
  if (p.lambda == 0.0) return std::exp(z) - p.shift;
  const double u = std::fma(p.lambda, z, 1.0);
  if (!(u > 0.0)) throw NumericError("boxcox_invert: 1 + lambda*z must be positive");
  return std::exp(std::log(u) / p.lambda) - p.shift;
}

// Non-throwing inverse for batch prediction: out-of-domain values clamp to
// the nearest attainable boundary and set *clamped.
inline double boxcox_invert_clamped(double z, const BoxCoxParams& p, bool* clamped = nullptr) {
  if (p.lambda == 0.0) return std::exp(z) - p.shift;
  double u = std::fma(p.lambda, z, 1.0);
  if (!(u > 0.0)) {
    if (clamped) *clamped = true;
    // lambda > 0: z below the image floor, boundary is y -> -shift.
    // lambda < 0: z at/above the image ceiling, boundary is y -> +inf; cap it.
    if (p.lambda > 0.0) return -p.shift;
    u = 1e-12;
  }
  return std::exp(std::log(u) / p.lambda) - p.shift;
}

// Profile log-likelihood grid search, lambda in {-2.00, -1.99, ..., 2.00}
// by default; callers may narrow the grid. shift = 1 - min(series) when
// min <= 0, else 1.
inline BoxCoxParams fit_boxcox(std::span<const double> series, double lambda_min = -2.0,
                               double lambda_max = 2.0) {
  if (series.empty()) throw ValidationError("fit_boxcox: empty series");
  if (lambda_min > lambda_max) throw ValidationError("fit_boxcox: bad lambda bounds");
  const double mn = *std::min_element(series.begin(), series.end());
  BoxCoxParams p;
  p.shift = mn <= 0.0 ? 1.0 - mn : 1.0;

  const std::size_t n = series.size();
  std::vector<double> logs(n);
  double log_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    logs[i] = std::log(series[i] + p.shift);
    log_sum += logs[i];
  }

  const double mx = *std::max_element(series.begin(), series.end());
  if (mx == mn) {
    p.lambda = 1.0;
    p.degenerate = true;
    return p;
  }

  double best_ll = -std::numeric_limits<double>::infinity();
  double best_lambda = 1.0;
  std::vector<double> z(n);
  const int lo = static_cast<int>(std::lround(lambda_min * 100.0));
  const int hi = static_cast<int>(std::lround(lambda_max * 100.0));
  for (int step = lo; step <= hi; ++step) {
    const double lambda = step / 100.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = lambda == 0.0 ? logs[i] : std::expm1(lambda * logs[i]) / lambda;
      mean += z[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (z[i] - mean) * (z[i] - mean);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) continue;
    const double ll = -0.5 * static_cast<double>(n) * std::log(var) + (lambda - 1.0) * log_sum;
    if (ll > best_ll) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  p.lambda = best_lambda;
  return p;
}

}  // namespace phdst::feat
