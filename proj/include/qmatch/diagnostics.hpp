#pragma once

// MCMC convergence diagnostics: split R-hat and effective sample size.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "qmatch/error.hpp"
#include "qmatch/inference.hpp"

namespace qmatch {

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Between- and within-chain variance for equal-length chains.
struct VarianceComponents {
  double within;
  double between;
  std::size_t length;
};

inline VarianceComponents variance_components(const std::vector<std::vector<double>>& chains) {
  const std::size_t n = chains.front().size();
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    within += sample_variance(c);
  }
  within /= static_cast<double>(chains.size());
  const double between = chains.size() > 1 ? static_cast<double>(n) * sample_variance(means) : 0.0;
  return {within, between, n};
}

}  // namespace detail

/// Split R-hat (classic, non-rank-normalized). Requires at least two chains of
/// at least four draws each; returns nullopt otherwise.
inline std::optional<double> split_r_hat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) return std::nullopt;
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  if (half < 2) return std::nullopt;
  std::vector<std::vector<double>> split;
  for (const auto& c : chains) {
    split.emplace_back(c.begin(), c.begin() + half);
    split.emplace_back(c.begin() + (n - half), c.begin() + n);
  }
  const auto v = detail::variance_components(split);
  if (v.within == 0.0) return v.between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double len = static_cast<double>(v.length);
  const double var_plus = (len - 1.0) / len * v.within + v.between / len;
  return std::sqrt(var_plus / v.within);
}

/// Effective sample size over all chains, using the combined autocorrelation
/// estimate truncated by Geyer's initial positive sequence.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw InputError("effective_sample_size: no chains");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw InputError("effective_sample_size: need at least 4 draws per chain");
  const double nd = static_cast<double>(n);
  const double chain_count = static_cast<double>(chains.size());

  std::vector<double> means;
  for (const auto& c : chains) means.push_back(detail::mean_of(std::span(c).first(n)));
  auto autocovariance = [&](std::size_t c, std::size_t lag) {
    const auto& x = chains[c];
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - means[c]) * (x[i + lag] - means[c]);
    return s / nd;
  };
  auto mean_autocovariance = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) s += autocovariance(c, lag);
    return s / chain_count;
  };

  const double mean_var = mean_autocovariance(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (chains.size() > 1) var_plus += detail::sample_variance(means);
  if (!(var_plus > 0.0)) return chain_count * nd;

  auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_autocovariance(lag)) / var_plus; };

  // Sum consecutive pairs while positive; enforce monotone pair sums.
  double tau = -1.0;
  double previous_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, previous_pair);
    previous_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(chain_count * nd + 10.0));
  return chain_count * nd / tau;
}

struct ParameterDiagnostics {
  std::optional<double> r_hat;  // unavailable for a single chain
  double ess = 0.0;
};

inline std::vector<ParameterDiagnostics> diagnostics(const PosteriorDraws& pd) {
  if (pd.size() == 0) throw InputError("diagnostics: no draws");
  std::vector<ParameterDiagnostics> out;
  for (std::size_t p = 0; p < pd.n_params; ++p) {
    const auto chains = pd.chains_of(p);
    out.push_back({split_r_hat(chains), effective_sample_size(chains)});
  }
  return out;
}

}  // namespace qmatch
