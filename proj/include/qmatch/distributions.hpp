#pragma once

// Parametric families with log-density, CDF, survival, inverse CDF and
// sampling.
//
// Parameterizations (natural / constrained space):
//   normal       (location, scale)
//   lognormal    (log-location, log-scale)
//   weibull      (shape, scale)        F(x) = 1 - exp(-(x/scale)^shape)
//   gamma        (shape, scale)        mean = shape * scale
//   inv_gamma    (shape, scale)        f(x) ~ x^(-shape-1) exp(-scale/x)
//   frechet      (shape, scale)        F(x) = exp(-(x/scale)^-shape)
//   chi_square   (degrees of freedom)
//   exponential  (rate)
//   cauchy       (location, scale)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qmatch/error.hpp"
#include "qmatch/random.hpp"
#include "qmatch/special_functions.hpp"

namespace qmatch {

enum class Family {
  normal,
  lognormal,
  weibull,
  gamma,
  inv_gamma,
  frechet,
  chi_square,
  exponential,
  cauchy,
};

enum class Constraint { real, positive };

inline constexpr std::size_t kMaxArity = 2;

struct FamilySpec {
  Family family;
  std::string_view name;
  std::size_t arity;
  std::array<Constraint, kMaxArity> constraints;
  std::array<std::string_view, kMaxArity> parameter_names;
  // Support is (0, inf) rather than the whole real line.
  bool positive_support;
};

inline constexpr std::array<FamilySpec, 9> kFamilySpecs = {{
    {Family::normal, "normal", 2, {Constraint::real, Constraint::positive}, {"location", "scale"}, false},
    {Family::lognormal, "lognormal", 2, {Constraint::real, Constraint::positive}, {"log_location", "log_scale"}, true},
    {Family::weibull, "weibull", 2, {Constraint::positive, Constraint::positive}, {"shape", "scale"}, true},
    {Family::gamma, "gamma", 2, {Constraint::positive, Constraint::positive}, {"shape", "scale"}, true},
    {Family::inv_gamma, "inv_gamma", 2, {Constraint::positive, Constraint::positive}, {"shape", "scale"}, true},
    {Family::frechet, "frechet", 2, {Constraint::positive, Constraint::positive}, {"shape", "scale"}, true},
    {Family::chi_square, "chi_square", 1, {Constraint::positive, Constraint::positive}, {"dof", ""}, true},
    {Family::exponential, "exponential", 1, {Constraint::positive, Constraint::positive}, {"rate", ""}, true},
    {Family::cauchy, "cauchy", 2, {Constraint::real, Constraint::positive}, {"location", "scale"}, false},
}};

inline const FamilySpec& family_spec(Family family) {
  return kFamilySpecs[static_cast<std::size_t>(family)];
}

inline std::string_view family_name(Family family) { return family_spec(family).name; }

inline std::optional<Family> parse_family(std::string_view name) {
  for (const auto& spec : kFamilySpecs) {
    if (spec.name == name) return spec.family;
  }
  return std::nullopt;
}

// True when theta is a valid parameter vector for family.
inline bool in_domain(Family family, std::span<const double> theta) {
  const auto& spec = family_spec(family);
  if (theta.size() != spec.arity) return false;
  for (std::size_t i = 0; i < spec.arity; ++i) {
    if (!std::isfinite(theta[i])) return false;
    if (spec.constraints[i] == Constraint::positive && !(theta[i] > 0.0)) return false;
  }
  return true;
}

// The seven families compared on the income data.
inline constexpr std::array<Family, 7> kComparisonFamilies = {
    Family::weibull, Family::lognormal,  Family::gamma,      Family::inv_gamma,
    Family::frechet, Family::chi_square, Family::exponential};

namespace detail {

// Solves lower(y) = p_lower (or upper(y) = p_upper, whichever tail is better
// conditioned) for an increasing CDF on (0, inf) by safeguarded Newton.
inline double invert_positive_cdf(const std::function<double(double)>& lower,
                                  const std::function<double(double)>& upper,
                                  const std::function<double(double)>& density, double p_lower,
                                  double p_upper, double guess) {
  const bool use_lower = p_lower <= 0.5;
  // g is increasing in y with a root at the requested quantile.
  auto g = [&](double y) { return use_lower ? lower(y) - p_lower : p_upper - upper(y); };

  double lo = guess > 0.0 && std::isfinite(guess) ? guess : 1.0;
  double hi = lo;
  for (int i = 0; i < 2100 && g(lo) > 0.0; ++i) lo *= 0.5;
  for (int i = 0; i < 2100 && g(hi) < 0.0; ++i) hi *= 2.0;
  if (g(lo) > 0.0 || g(hi) < 0.0) throw DomainError("quantile: failed to bracket root");

  double y = std::clamp(guess, lo, hi);
  if (!(y > lo && y < hi)) y = 0.5 * (lo + hi);
  for (int i = 0; i < 400; ++i) {
    const double gy = g(y);
    if (gy == 0.0) return y;
    if (gy < 0.0) {
      lo = y;
    } else {
      hi = y;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    const double dy = density(y);
    double next = dy > 0.0 && std::isfinite(dy) ? y - gy / dy : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) {
      // Geometric bisection when the bracket spans many orders of magnitude.
      next = lo > 0.0 && hi / lo > 4.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    }
    y = next;
  }
  return y;
}

// Quantile of the unit-scale gamma(shape) given both tail probabilities.
inline double unit_gamma_quantile(double shape, double p_lower, double p_upper) {
  const double log_gamma_shape = log_gamma(shape);
  auto lower = [shape](double y) { return gamma_p(shape, y); };
  auto upper = [shape](double y) { return gamma_q(shape, y); };
  auto density = [shape, log_gamma_shape](double y) {
    return std::exp((shape - 1.0) * std::log(y) - y - log_gamma_shape);
  };
  double guess = shape;
  if (p_lower < 0.5) {
    // Small-y asymptote P(a, y) ~ y^a / Gamma(a + 1).
    const double tail = std::exp((std::log(p_lower) + log_gamma(shape + 1.0)) / shape);
    if (tail < shape) guess = tail;
  }
  return invert_positive_cdf(lower, upper, density, p_lower, p_upper, guess);
}

}  // namespace detail

// A family together with a parameter vector in its constrained space.
// Immutable after construction.
class Dist {
 public:
  Dist(Family family, std::span<const double> theta) : family_(family) {
    const auto& spec = family_spec(family);
    if (theta.size() != spec.arity) {
      throw InputError(std::string(spec.name) + ": expected " + std::to_string(spec.arity) +
                       " parameter(s), got " + std::to_string(theta.size()));
    }
    for (std::size_t i = 0; i < spec.arity; ++i) {
      const double value = theta[i];
      if (!std::isfinite(value)) {
        throw DomainError(std::string(spec.name) + ": parameter " +
                          std::string(spec.parameter_names[i]) + " is not finite");
      }
      if (spec.constraints[i] == Constraint::positive && !(value > 0.0)) {
        throw DomainError(std::string(spec.name) + ": parameter " +
                          std::string(spec.parameter_names[i]) + " must be positive");
      }
      theta_[i] = value;
    }
  }

  Dist(Family family, std::initializer_list<double> theta)
      : Dist(family, std::span<const double>(theta.begin(), theta.size())) {}

  Family family() const { return family_; }
  const FamilySpec& spec() const { return family_spec(family_); }
  std::span<const double> theta() const { return {theta_.data(), spec().arity}; }

  double log_pdf(double x) const {
    require_finite(x, "log_pdf");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    const double a = theta_[0];
    const double b = theta_[1];
    if (spec().positive_support && x < 0.0) return kNegInf;
    switch (family_) {
      case Family::normal: {
        const double z = (x - a) / b;
        return -0.5 * z * z - std::log(b) - half_log_2pi;
      }
      case Family::lognormal: {
        if (x == 0.0) return kNegInf;
        const double z = (std::log(x) - a) / b;
        return -0.5 * z * z - std::log(x * b) - half_log_2pi;
      }
      case Family::weibull: {
        if (x == 0.0) return power_at_zero(a - 1.0, std::log(a) - std::log(b));
        const double r = x / b;
        return std::log(a) - std::log(b) + (a - 1.0) * std::log(r) - std::pow(r, a);
      }
      case Family::gamma:
        return gamma_log_pdf(x, a, b);
      case Family::inv_gamma:
        if (x == 0.0) return kNegInf;
        return a * std::log(b) - log_gamma(a) - (a + 1.0) * std::log(x) - b / x;
      case Family::frechet: {
        if (x == 0.0) return kNegInf;
        const double r = x / b;
        return std::log(a) - std::log(b) - (1.0 + a) * std::log(r) - std::pow(r, -a);
      }
      case Family::chi_square:
        return gamma_log_pdf(x, 0.5 * a, 2.0);
      case Family::exponential:
        return std::log(a) - a * x;
      case Family::cauchy: {
        const double z = (x - a) / b;
        return -std::log(std::numbers::pi * b) - std::log1p(z * z);
      }
    }
    return kNegInf;
  }

  double pdf(double x) const { return std::exp(log_pdf(x)); }

  double cdf(double x) const {
    require_finite(x, "cdf");
    const double a = theta_[0];
    const double b = theta_[1];
    if (spec().positive_support && x <= 0.0) return 0.0;
    switch (family_) {
      case Family::normal:
        return normal_cdf((x - a) / b);
      case Family::lognormal:
        return normal_cdf((std::log(x) - a) / b);
      case Family::weibull:
        return -std::expm1(-std::pow(x / b, a));
      case Family::gamma:
        return gamma_p(a, x / b);
      case Family::inv_gamma:
        return gamma_q(a, b / x);
      case Family::frechet:
        return std::exp(-std::pow(x / b, -a));
      case Family::chi_square:
        return gamma_p(0.5 * a, 0.5 * x);
      case Family::exponential:
        return -std::expm1(-a * x);
      case Family::cauchy:
        return std::atan2(1.0, -(x - a) / b) / std::numbers::pi;
    }
    return 0.0;
  }

  // Survival function 1 - cdf(x), evaluated without cancellation in the
  // upper tail.
  double sf(double x) const {
    require_finite(x, "sf");
    const double a = theta_[0];
    const double b = theta_[1];
    if (spec().positive_support && x <= 0.0) return 1.0;
    switch (family_) {
      case Family::normal:
        return normal_sf((x - a) / b);
      case Family::lognormal:
        return normal_sf((std::log(x) - a) / b);
      case Family::weibull:
        return std::exp(-std::pow(x / b, a));
      case Family::gamma:
        return gamma_q(a, x / b);
      case Family::inv_gamma:
        return gamma_p(a, b / x);
      case Family::frechet:
        return -std::expm1(-std::pow(x / b, -a));
      case Family::chi_square:
        return gamma_q(0.5 * a, 0.5 * x);
      case Family::exponential:
        return std::exp(-a * x);
      case Family::cauchy:
        return std::atan2(1.0, (x - a) / b) / std::numbers::pi;
    }
    return 1.0;
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0, 1)");
    const double a = theta_[0];
    const double b = theta_[1];
    switch (family_) {
      case Family::normal:
        return a + b * normal_quantile(p);
      case Family::lognormal:
        return std::exp(a + b * normal_quantile(p));
      case Family::weibull:
        return b * std::pow(-std::log1p(-p), 1.0 / a);
      case Family::gamma:
        return b * detail::unit_gamma_quantile(a, p, 1.0 - p);
      case Family::inv_gamma:
        return b / detail::unit_gamma_quantile(a, 1.0 - p, p);
      case Family::frechet:
        return b * std::pow(-std::log(p), -1.0 / a);
      case Family::chi_square:
        return 2.0 * detail::unit_gamma_quantile(0.5 * a, p, 1.0 - p);
      case Family::exponential:
        return -std::log1p(-p) / a;
      case Family::cauchy:
        return a + b * std::tan(std::numbers::pi * (p - 0.5));
    }
    return 0.0;
  }

  double sample(Rng& rng) const {
    switch (family_) {
      case Family::normal:
        return theta_[0] + theta_[1] * rng.normal();
      case Family::lognormal:
        return std::exp(theta_[0] + theta_[1] * rng.normal());
      default:
        return quantile(rng.uniform());
    }
  }

  std::vector<double> sample(Rng& rng, std::size_t n) const {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
    return out;
  }

 private:
  static void require_finite(double x, const char* op) {
    if (!std::isfinite(x)) throw InputError(std::string(op) + ": x must be finite");
  }

  // log of c * x^exponent at x = 0.
  static double power_at_zero(double exponent, double log_c) {
    if (exponent == 0.0) return log_c;
    return exponent > 0.0 ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
  }

  static double gamma_log_pdf(double x, double shape, double scale) {
    const double log_norm = -log_gamma(shape) - shape * std::log(scale);
    if (x == 0.0) return power_at_zero(shape - 1.0, log_norm);
    return (shape - 1.0) * std::log(x) - x / scale + log_norm;
  }

  Family family_;
  std::array<double, kMaxArity> theta_{};
};

}  // namespace qmatch
