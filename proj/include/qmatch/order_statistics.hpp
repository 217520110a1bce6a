#pragma once

// Order-statistics likelihood kernels, all in the log domain.
//
// For M observed quantile values x_1 < ... < x_M at levels q_1 < ... < q_M of
// a hidden sample of size N, the orders k_m = q_m N may be non-integer; the
// factorials of the normalization constant become gamma functions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qmatch/distributions.hpp"
#include "qmatch/error.hpp"
#include "qmatch/special_functions.hpp"

namespace qmatch {

inline constexpr double kCdfFloor = 1e-300;

// Real-valued orders k_m = q_m N, strictly increasing in (0, N].
struct OrderVector {
  std::vector<double> k;

  std::size_t size() const { return k.size(); }
};

inline void validate_orders(double n, const OrderVector& orders) {
  if (!(n >= 1.0)) throw DomainError("order statistics: n must be >= 1");
  if (orders.k.empty()) throw DomainError("order statistics: empty order vector");
  if (!(orders.k.front() > 0.0)) throw DomainError("order statistics: k_1 must be positive");
  if (orders.k.back() > n) throw DomainError("order statistics: k_M exceeds n");
  for (std::size_t m = 1; m < orders.k.size(); ++m) {
    if (!(orders.k[m] - orders.k[m - 1] > 0.0)) {
      throw DomainError("order statistics: orders " + std::to_string(m) + " and " +
                        std::to_string(m + 1) +
                        " are not strictly increasing (quantiles too close for N)");
    }
  }
}

// The observed dataset: quantile levels q, empirical values x, the sample
// size N behind them and an optional divisor the values were normalized by.
class QuantileObservation {
 public:
  QuantileObservation(std::vector<double> q, std::vector<double> x, std::uint64_t n_total,
                      double scale_divisor = 1.0)
      : q_(std::move(q)), x_(std::move(x)), n_total_(n_total), scale_divisor_(scale_divisor) {
    if (q_.empty()) throw InputError("observation: at least one quantile is required");
    if (q_.size() != x_.size()) throw InputError("observation: q and x differ in length");
    if (n_total_ < 1) throw InputError("observation: N must be >= 1");
    if (!(scale_divisor_ > 0.0) || !std::isfinite(scale_divisor_)) {
      throw InputError("observation: scale divisor must be positive");
    }
    for (std::size_t m = 0; m < q_.size(); ++m) {
      if (!(q_[m] > 0.0 && q_[m] < 1.0)) {
        throw InputError("observation: q[" + std::to_string(m) + "] outside (0, 1)");
      }
      if (!std::isfinite(x_[m])) {
        throw InputError("observation: x[" + std::to_string(m) + "] is not finite");
      }
      if (m > 0 && !(q_[m] > q_[m - 1])) {
        throw InputError("observation: q must be strictly increasing");
      }
      if (m > 0 && !(x_[m] > x_[m - 1])) {
        throw InputError("observation: x must be strictly increasing (ties have zero density)");
      }
    }
  }

  std::span<const double> q() const { return q_; }
  std::span<const double> x() const { return x_; }
  std::uint64_t n_total() const { return n_total_; }
  double scale_divisor() const { return scale_divisor_; }
  std::size_t size() const { return q_.size(); }

  OrderVector orders() const {
    OrderVector out;
    out.k.reserve(q_.size());
    const double n = static_cast<double>(n_total_);
    for (double q : q_) out.k.push_back(q * n);
    return out;
  }

  // Same levels and N with every x multiplied by factor, divisor scaled to
  // match. Used to move between raw and normalized units.
  QuantileObservation rescaled(double factor) const {
    std::vector<double> x = x_;
    for (double& v : x) v *= factor;
    return {q_, std::move(x), n_total_, scale_divisor_ / factor};
  }

  friend bool operator==(const QuantileObservation&, const QuantileObservation&) = default;

 private:
  std::vector<double> q_;
  std::vector<double> x_;
  std::uint64_t n_total_;
  double scale_divisor_;
};

/// P(U_(k) <= x) for the k-th of n uniform order statistics: the probability
/// of at least k successes in n Bernoulli(x) trials. Integer k only.
inline double uniform_os_cdf(std::uint64_t n, std::uint64_t k, double x) {
  if (n < 1 || k < 1 || k > n) throw DomainError("uniform_os_cdf: need 1 <= k <= n");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("uniform_os_cdf: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double nd = static_cast<double>(n);
  const double log_x = std::log(x);
  const double log_1mx = std::log1p(-x);
  const double log_n_fact = log_gamma(nd + 1.0);
  // Sum binomial terms from the smallest index upward so tiny terms are added
  // before large ones.
  std::vector<double> terms;
  terms.reserve(n - k + 1);
  for (std::uint64_t i = k; i <= n; ++i) {
    const double id = static_cast<double>(i);
    terms.push_back(std::exp(log_n_fact - log_gamma(id + 1.0) - log_gamma(nd - id + 1.0) +
                             id * log_x + (nd - id) * log_1mx));
  }
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  double compensation = 0.0;
  for (double t : terms) {
    const double y = t - compensation;
    const double s = sum + y;
    compensation = (s - sum) - y;
    sum = s;
  }
  return std::min(sum, 1.0);
}

/// log Beta(x | k, n - k + 1), the density of the k-th of n uniform order
/// statistics. k may be non-integer. Returns -inf outside (0, 1).
inline double uniform_os_logpdf(double n, double k, double x) {
  if (!(k > 0.0 && k <= n)) throw DomainError("uniform_os_logpdf: need 0 < k <= n");
  if (!(x > 0.0 && x < 1.0)) return -std::numeric_limits<double>::infinity();
  const double alpha = k;
  const double beta = n - k + 1.0;
  return log_gamma(n + 1.0) - log_gamma(alpha) - log_gamma(beta) + (alpha - 1.0) * std::log(x) +
         (beta - 1.0) * std::log1p(-x);
}

/// log of n! / (Gamma(k_1) Gamma(n - k_M + 1) prod_m Gamma(k_m - k_{m-1})).
inline double log_norm_const(double n, const OrderVector& orders) {
  validate_orders(n, orders);
  const auto& k = orders.k;
  double c = log_gamma(n + 1.0) - log_gamma(k.front()) - log_gamma(n - k.back() + 1.0);
  for (std::size_t m = 1; m < k.size(); ++m) c -= log_gamma(k[m] - k[m - 1]);
  return c;
}

namespace detail {

// exponent * log(base) with the conventions of a density: 0 * log 0 = 0,
// positive power of zero is zero density, negative power of zero diverges.
inline double log_power(double exponent, double base) {
  if (base > 0.0) return exponent * std::log(base);
  if (exponent == 0.0) return 0.0;
  if (exponent > 0.0) return -std::numeric_limits<double>::infinity();
  throw DomainError("order statistics: density diverges at a boundary (negative exponent of 0)");
}

// Joint uniform order-statistics density given u_1, the gaps u_m - u_{m-1}
// and the upper mass 1 - u_M.
inline double joint_kernel(double n, const OrderVector& orders, double first,
                           std::span<const double> gaps, double upper) {
  const auto& k = orders.k;
  double value = log_norm_const(n, orders);
  value += log_power(k.front() - 1.0, first);
  value += log_power(n - k.back(), upper);
  for (std::size_t m = 1; m < k.size(); ++m) {
    value += log_power(k[m] - k[m - 1] - 1.0, gaps[m - 1]);
  }
  return value;
}

}  // namespace detail

/// Joint log-density of M uniform order statistics with orders k at u.
/// Non-increasing u or u outside [0, 1] has zero density (-inf).
inline double joint_uniform_os_logpdf(double n, const OrderVector& orders,
                                      std::span<const double> u) {
  if (u.size() != orders.size()) throw InputError("joint_uniform_os_logpdf: size mismatch");
  validate_orders(n, orders);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(u.front() >= 0.0) || !(u.back() <= 1.0)) return kNegInf;
  std::vector<double> gaps(u.size() > 0 ? u.size() - 1 : 0);
  for (std::size_t m = 1; m < u.size(); ++m) {
    if (!(u[m] > u[m - 1])) return kNegInf;
    gaps[m - 1] = u[m] - u[m - 1];
  }
  return detail::joint_kernel(n, orders, u.front(), gaps, 1.0 - u.back());
}

/// Density of the k-th order statistic of n draws from d, evaluated at x:
/// the uniform order-statistic density at F(x) times the Jacobian f(x).
inline double os_logpdf(const Dist& d, double n, double k, double x) {
  if (!(k > 0.0 && k <= n)) throw DomainError("os_logpdf: need 0 < k <= n");
  const double log_f = d.log_pdf(x);
  if (log_f == -std::numeric_limits<double>::infinity()) return log_f;
  const double lower = std::max(d.cdf(x), kCdfFloor);
  const double upper = std::max(d.sf(x), kCdfFloor);
  return detail::joint_kernel(n, OrderVector{{k}}, lower, {}, upper) + log_f;
}

struct LogLikelihood {
  double value;
  // CDF values of neighbouring observations coincided in floating point,
  // i.e. the parameters place the data hopelessly far in a tail.
  bool cdf_tied;
};

/// Joint order-statistics log-likelihood of obs under d, with diagnostics.
inline LogLikelihood joint_os_loglik_detail(const Dist& d, const QuantileObservation& obs) {
  const auto x = obs.x();
  const std::size_t m_count = x.size();
  const double n = static_cast<double>(obs.n_total());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  double log_f_sum = 0.0;
  std::vector<double> lower(m_count);
  std::vector<double> upper(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double log_f = d.log_pdf(x[m]);
    if (log_f == kNegInf) return {kNegInf, false};
    log_f_sum += log_f;
    lower[m] = d.cdf(x[m]);
    upper[m] = d.sf(x[m]);
  }

  std::vector<double> gaps(m_count - 1);
  for (std::size_t m = 1; m < m_count; ++m) {
    // Take the difference in whichever tail carries more precision.
    const double gap =
        lower[m] <= 0.5 ? lower[m] - lower[m - 1] : upper[m - 1] - upper[m];
    if (!(gap > 0.0)) return {kNegInf, true};
    gaps[m - 1] = gap;
  }
  const double first = std::max(lower.front(), kCdfFloor);
  const double last = std::max(upper.back(), kCdfFloor);
  const double value = detail::joint_kernel(n, obs.orders(), first, gaps, last) + log_f_sum;
  return {value, false};
}

/// Joint order-statistics log-likelihood of obs under d.
inline double joint_os_loglik(const Dist& d, const QuantileObservation& obs) {
  return joint_os_loglik_detail(d, obs).value;
}

/// Sum of log N(q_m | F(x_m), sigma_noise^2): the CDF-regression likelihood.
inline double gaussian_noise_loglik(const Dist& d, const QuantileObservation& obs,
                                    double sigma_noise) {
  if (!(sigma_noise > 0.0) || !std::isfinite(sigma_noise)) {
    throw DomainError("gaussian_noise_loglik: sigma_noise must be positive");
  }
  const auto q = obs.q();
  const auto x = obs.x();
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma_noise);
  double total = 0.0;
  for (std::size_t m = 0; m < q.size(); ++m) {
    const double r = (q[m] - d.cdf(x[m])) / sigma_noise;
    total += log_norm - 0.5 * r * r;
  }
  return total;
}

inline constexpr double kDefaultPenaltySigma = 0.05;

struct PenaltyCurves {
  std::vector<double> x;
  std::vector<double> os;  // order-statistics likelihood, peak 1
  std::vector<double> gn;  // gaussian-noise likelihood, peak 1
};

/// Both single-quantile likelihoods as functions of the reported value x at
/// a fixed level q, each scaled so its maximum over the grid is 1.
inline PenaltyCurves penalty_curves(const Dist& d, double q, double n,
                                    std::span<const double> x_grid,
                                    double sigma_noise = kDefaultPenaltySigma) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("penalty_curves: q must lie in (0, 1)");
  if (!(sigma_noise > 0.0)) throw DomainError("penalty_curves: sigma_noise must be positive");
  PenaltyCurves out;
  out.x.assign(x_grid.begin(), x_grid.end());
  out.os.reserve(x_grid.size());
  out.gn.reserve(x_grid.size());
  const double k = q * n;
  for (double x : x_grid) {
    const double lower = std::max(d.cdf(x), kCdfFloor);
    const double upper = std::max(d.sf(x), kCdfFloor);
    out.os.push_back((k - 1.0) * std::log(lower) + (n - k) * std::log(upper) + d.log_pdf(x));
    const double r = d.cdf(x) - q;
    out.gn.push_back(-r * r / (2.0 * sigma_noise * sigma_noise));
  }
  auto normalize = [](std::vector<double>& log_values) {
    if (log_values.empty()) return;
    const double peak = *std::max_element(log_values.begin(), log_values.end());
    for (double& v : log_values) v = std::exp(v - peak);
  };
  normalize(out.os);
  normalize(out.gn);
  return out;
}

}  // namespace qmatch
