#pragma once

// Special functions used by the distribution families: log-gamma, the
// regularized incomplete gamma pair, and the error function family built on
// top of it. No external numerical library is involved.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "qmatch/error.hpp"

namespace qmatch {

namespace detail {

inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoefficients = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

inline constexpr double kEpsilon = std::numeric_limits<double>::epsilon();
inline constexpr double kTiny = 1e-300;
inline constexpr int kMaxIterations = 100000;

// Series for P(a, x), valid and fast for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int i = 0; i < kMaxIterations; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEpsilon) break;
  }
  return sum;
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) break;
  }
  return h;
}

}  // namespace detail

/// Natural log of the gamma function for z > 0 (Lanczos, g = 7, 9 terms).
inline double log_gamma(double z) {
  if (!(z > 0.0)) throw DomainError("log_gamma: argument must be positive");
  if (std::isinf(z)) return z;
  if (z < 0.5) {
    // Shift up so the Lanczos sum is evaluated where it is most accurate.
    return log_gamma(z + 1.0) - std::log(z);
  }
  const double zm1 = z - 1.0;
  double series = detail::kLanczosCoefficients[0];
  for (std::size_t i = 1; i < detail::kLanczosCoefficients.size(); ++i) {
    series += detail::kLanczosCoefficients[i] / (zm1 + static_cast<double>(i));
  }
  const double t = zm1 + detail::kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (zm1 + 0.5) * std::log(t) - t +
         std::log(series);
}

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_p: shape must be positive");
  if (std::isnan(x)) throw InputError("gamma_p: x is NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double log_prefactor = -x + a * std::log(x) - log_gamma(a);
  if (x < a + 1.0) {
    return std::exp(log_prefactor) * detail::gamma_p_series(a, x);
  }
  return 1.0 - std::exp(log_prefactor) * detail::gamma_q_continued_fraction(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly
/// in the upper tail so small values keep full relative precision.
inline double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_q: shape must be positive");
  if (std::isnan(x)) throw InputError("gamma_q: x is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double log_prefactor = -x + a * std::log(x) - log_gamma(a);
  if (x < a + 1.0) {
    return 1.0 - std::exp(log_prefactor) * detail::gamma_p_series(a, x);
  }
  return std::exp(log_prefactor) * detail::gamma_q_continued_fraction(a, x);
}

/// erf(x) = sign(x) P(1/2, x^2).
inline double erf(double x) {
  if (std::isnan(x)) throw InputError("erf: x is NaN");
  const double p = gamma_p(0.5, x * x);
  return x < 0.0 ? -p : p;
}

/// erfc(x), accurate in the right tail.
inline double erfc(double x) {
  if (std::isnan(x)) throw InputError("erfc: x is NaN");
  if (x < 0.0) return 2.0 - gamma_q(0.5, x * x);
  return gamma_q(0.5, x * x);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * erfc(-z * std::numbers::sqrt2 / 2.0); }

/// Standard normal upper tail 1 - Phi(z).
inline double normal_sf(double z) { return 0.5 * erfc(z * std::numbers::sqrt2 / 2.0); }

/// Inverse of the standard normal CDF. Rational initial guess refined by
/// Halley steps against normal_cdf.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                              -2.759285104469687e+02, 1.383577518672690e+02,
                                              -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                              -1.556989798598866e+02, 6.680131188771972e+01,
                                              -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                              -2.400758277161838e+00, -2.549732539343734e+00,
                                              4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (int i = 0; i < 4; ++i) {
    // Work in whichever tail keeps the residual well conditioned.
    const double e = x <= 0.0 ? normal_cdf(x) - p : (1.0 - p) - normal_sf(x);
    const double u = e * std::exp(log_sqrt_2pi + 0.5 * x * x);
    const double step = u / (1.0 + 0.5 * x * u);
    x -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace qmatch
