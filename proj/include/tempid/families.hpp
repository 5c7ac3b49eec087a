#pragma once

// Closed-form densities of the continuous families and the survival curve.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>

namespace tempid::families {

inline double shifted_exponential_pdf(double t, double rate, double shift) {
  if (!(t > shift)) return 0.0;
  return rate * std::exp(-rate * (t - shift));
}

/// Density of shift + Exp(rate0) + Exp(rate1).
///
/// Normalizing constant is rate0*rate1/(rate1-rate0). Factoring out the
/// slower exponential and using expm1 keeps it finite for large t and
/// accurate as rate1 -> rate0, where it tends to rate^2 s exp(-rate s).
inline double hypoexponential_pdf(double t, double rate0, double rate1, double shift) {
  if (!(t > shift)) return 0.0;
  const double s = t - shift;
  const double lo = std::min(rate0, rate1);
  const double diff = std::max(rate0, rate1) - lo;
  if (diff == 0.0) return lo * lo * s * std::exp(-lo * s);
  return rate0 * rate1 * std::exp(-lo * s) * (-std::expm1(-diff * s)) / diff;
}

inline double gaussian_pdf(double x, double mean, double sigma) {
  const double z = (x - mean) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Piecewise-linear s(r) through (r, s) knots sorted by r, clamped outside.
inline double interpolate_knots(std::span<const std::pair<double, double>> knots, double r) {
  if (knots.empty()) return 1.0;
  if (r <= knots.front().first) return knots.front().second;
  if (r >= knots.back().first) return knots.back().second;
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const auto& [r1, s1] = knots[i];
    if (r <= r1) {
      const auto& [r0, s0] = knots[i - 1];
      const double w = (r - r0) / (r1 - r0);
      return s0 + w * (s1 - s0);
    }
  }
  return knots.back().second;
}

/// exp(-rate * step * (1 - s)).
inline double survival_probability(double infection_rate, double step, double s) {
  return std::exp(-infection_rate * step * (1.0 - s));
}

}  // namespace tempid::families
