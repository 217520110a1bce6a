#pragma once

// Ground-truth generators: synthetic quantile observations built by sorting
// explicit samples, ensembles of empirical CDFs, and brute-force draws of a
// single order statistic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qmatch/distributions.hpp"
#include "qmatch/error.hpp"
#include "qmatch/order_statistics.hpp"
#include "qmatch/random.hpp"

namespace qmatch {

struct SimConfig {
  Dist dist;
  std::uint64_t n = 1;
  std::vector<double> q;
  std::size_t reps = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw InputError("simulation: N must be >= 1");
    if (reps < 1) throw InputError("simulation: reps must be >= 1");
    for (std::size_t m = 0; m < q.size(); ++m) {
      if (!(q[m] > 0.0 && q[m] < 1.0)) throw InputError("simulation: q must lie in (0, 1)");
      if (m > 0 && !(q[m] > q[m - 1])) throw InputError("simulation: q must be increasing");
    }
  }
};

/// Value at real-valued 1-based rank r of an ascending sample, interpolating
/// linearly between the neighbouring order statistics.
inline double value_at_rank(std::span<const double> sorted, double rank) {
  const double n = static_cast<double>(sorted.size());
  if (!(rank >= 1.0 && rank <= n)) {
    throw DomainError("rank " + std::to_string(rank) + " outside the realized order statistics [1, " +
                      std::to_string(sorted.size()) + "]");
  }
  const double lo = std::floor(rank);
  const auto i = static_cast<std::size_t>(lo) - 1;
  if (rank == lo) return sorted[i];
  return sorted[i] + (rank - lo) * (sorted[i + 1] - sorted[i]);
}

namespace detail {

inline std::vector<double> sorted_sample(const Dist& d, Rng& rng, std::size_t n) {
  auto sample = d.sample(rng, n);
  std::sort(sample.begin(), sample.end());
  return sample;
}

inline QuantileObservation observe_quantiles(std::span<const double> sorted,
                                             const std::vector<double>& q) {
  std::vector<double> x;
  x.reserve(q.size());
  const double n = static_cast<double>(sorted.size());
  for (double level : q) x.push_back(value_at_rank(sorted, level * n));
  return {q, std::move(x), sorted.size()};
}

}  // namespace detail

/// Draws N samples, sorts them and reads off x_m at rank q_m N.
inline QuantileObservation simulate_quantile_data(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.q.empty()) throw InputError("simulation: at least one quantile level is required");
  Rng rng = Rng::stream(cfg.seed, 0);
  const auto sorted = detail::sorted_sample(cfg.dist, rng, cfg.n);
  return detail::observe_quantiles(sorted, cfg.q);
}

/// cfg.reps independent observations, replicate r on stream (seed, r).
inline std::vector<QuantileObservation> simulate_replicates(const SimConfig& cfg) {
  cfg.validate();
  std::vector<QuantileObservation> out;
  out.reserve(cfg.reps);
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    Rng rng = Rng::stream(cfg.seed, r);
    const auto sorted = detail::sorted_sample(cfg.dist, rng, cfg.n);
    out.push_back(detail::observe_quantiles(sorted, cfg.q));
  }
  return out;
}

struct CdfEnsemble {
  std::size_t reps = 0;
  std::size_t n = 0;
  std::vector<double> values;  // reps x n, each row ascending
  std::vector<double> levels;  // m / N for m = 1..N

  std::span<const double> row(std::size_t r) const { return {values.data() + r * n, n}; }
};

/// reps independent sorted samples of size N with their rank levels m/N.
inline CdfEnsemble empirical_cdf_ensemble(const SimConfig& cfg) {
  cfg.validate();
  CdfEnsemble out;
  out.reps = cfg.reps;
  out.n = cfg.n;
  out.values.reserve(cfg.reps * cfg.n);
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    Rng rng = Rng::stream(cfg.seed, r);
    const auto sorted = detail::sorted_sample(cfg.dist, rng, cfg.n);
    out.values.insert(out.values.end(), sorted.begin(), sorted.end());
  }
  for (std::size_t m = 1; m <= cfg.n; ++m) {
    out.levels.push_back(static_cast<double>(m) / static_cast<double>(cfg.n));
  }
  return out;
}

/// reps brute-force draws of the k-th smallest of n samples from d.
inline std::vector<double> os_marginal_oracle(const Dist& d, std::size_t n, std::size_t k,
                                              std::size_t reps, std::uint64_t seed) {
  if (k < 1 || k > n) throw DomainError("os_marginal_oracle: need 1 <= k <= n");
  std::vector<double> out;
  out.reserve(reps);
  std::vector<double> sample;
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng = Rng::stream(seed, r);
    sample = d.sample(rng, n);
    std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     sample.end());
    out.push_back(sample[k - 1]);
  }
  return out;
}

/// reps brute-force draws of the order statistics at 1-based orders ks
/// (ascending), row-major reps x ks.size().
inline std::vector<double> os_joint_oracle(const Dist& d, std::size_t n,
                                           std::span<const std::size_t> ks, std::size_t reps,
                                           std::uint64_t seed) {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || ks[i] > n || (i > 0 && ks[i] <= ks[i - 1])) {
      throw DomainError("os_joint_oracle: orders must be increasing within [1, n]");
    }
  }
  std::vector<double> out;
  out.reserve(reps * ks.size());
  for (std::size_t r = 0; r < reps; ++r) {
    Rng rng = Rng::stream(seed, r);
    const auto sorted = detail::sorted_sample(d, rng, n);
    for (std::size_t k : ks) out.push_back(sorted[k - 1]);
  }
  return out;
}

}  // namespace qmatch
