#pragma once

// Bayesian model over a quantile observation: priors, the unconstrained
// reparameterization, the posterior log-density, an adaptive random-walk
// Metropolis sampler, and simplex-based point estimates (MAP and the
// least-squares CDF fit).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qmatch/distributions.hpp"
#include "qmatch/error.hpp"
#include "qmatch/nelder_mead.hpp"
#include "qmatch/order_statistics.hpp"
#include "qmatch/random.hpp"

namespace qmatch {

struct NormalPrior {
  double mean = 0.0;
  double sd = 100.0;
};

// Independent Gaussian priors on the constrained parameters.
struct PriorSpec {
  std::vector<NormalPrior> parameters;

  static PriorSpec broad(std::size_t arity) { return {std::vector<NormalPrior>(arity)}; }

  // sd = +inf contributes nothing to the posterior.
  static PriorSpec flat(std::size_t arity) {
    return {std::vector<NormalPrior>(arity, {0.0, std::numeric_limits<double>::infinity()})};
  }

  double log_density(std::span<const double> theta) const {
    double total = 0.0;
    for (std::size_t i = 0; i < parameters.size(); ++i) {
      const auto& p = parameters[i];
      if (std::isinf(p.sd)) continue;
      const double z = (theta[i] - p.mean) / p.sd;
      total += -0.5 * z * z - std::log(p.sd) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return total;
  }
};

enum class LikelihoodKind { order_statistics, gaussian_noise };

inline std::string_view likelihood_name(LikelihoodKind kind) {
  return kind == LikelihoodKind::order_statistics ? "order_statistics" : "gaussian_noise";
}

inline constexpr double kDefaultSigmaNoise = 0.05;

struct ModelSpec {
  Family family;
  PriorSpec prior;
  QuantileObservation obs;
  LikelihoodKind likelihood = LikelihoodKind::order_statistics;
  double sigma_noise = kDefaultSigmaNoise;

  static ModelSpec make(Family family, QuantileObservation obs,
                        LikelihoodKind likelihood = LikelihoodKind::order_statistics,
                        double sigma_noise = kDefaultSigmaNoise) {
    return {family, PriorSpec::broad(family_spec(family).arity), std::move(obs), likelihood,
            sigma_noise};
  }

  std::size_t arity() const { return family_spec(family).arity; }

  void validate() const {
    if (prior.parameters.size() != arity()) {
      throw InputError("model: prior has " + std::to_string(prior.parameters.size()) +
                       " entries, family " + std::string(family_name(family)) + " needs " +
                       std::to_string(arity()));
    }
    for (const auto& p : prior.parameters) {
      if (!(p.sd > 0.0)) throw InputError("model: prior sd must be positive");
    }
    if (!(sigma_noise > 0.0)) throw InputError("model: sigma_noise must be positive");
  }
};

struct ConstrainedParameters {
  std::vector<double> theta;
  double log_jacobian = 0.0;
};

/// log for positive parameters, identity for real ones.
inline std::vector<double> to_unconstrained(Family family, std::span<const double> theta) {
  const auto& spec = family_spec(family);
  if (theta.size() != spec.arity) throw InputError("to_unconstrained: wrong parameter count");
  std::vector<double> eta(spec.arity);
  for (std::size_t i = 0; i < spec.arity; ++i) {
    if (spec.constraints[i] == Constraint::positive) {
      if (!(theta[i] > 0.0)) {
        throw DomainError("to_unconstrained: " + std::string(spec.parameter_names[i]) +
                          " must be positive");
      }
      eta[i] = std::log(theta[i]);
    } else {
      eta[i] = theta[i];
    }
  }
  return eta;
}

inline ConstrainedParameters to_constrained(Family family, std::span<const double> eta) {
  const auto& spec = family_spec(family);
  if (eta.size() != spec.arity) throw InputError("to_constrained: wrong parameter count");
  ConstrainedParameters out;
  out.theta.resize(spec.arity);
  for (std::size_t i = 0; i < spec.arity; ++i) {
    if (spec.constraints[i] == Constraint::positive) {
      out.theta[i] = std::exp(eta[i]);
      out.log_jacobian += eta[i];
    } else {
      out.theta[i] = eta[i];
    }
  }
  return out;
}

/// Log-likelihood of the model's observation at constrained theta; -inf for
/// parameters outside the family's domain.
inline double log_likelihood(const ModelSpec& model, std::span<const double> theta) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!in_domain(model.family, theta)) return kNegInf;
  const Dist d(model.family, theta);
  const double value = model.likelihood == LikelihoodKind::order_statistics
                           ? joint_os_loglik(d, model.obs)
                           : gaussian_noise_loglik(d, model.obs, model.sigma_noise);
  return std::isnan(value) ? kNegInf : value;
}

/// Unnormalized posterior density of constrained theta (no Jacobian); its
/// maximizer is the MAP estimate.
inline double log_posterior_density(const ModelSpec& model, std::span<const double> theta) {
  const double ll = log_likelihood(model, theta);
  if (ll == -std::numeric_limits<double>::infinity()) return ll;
  return ll + model.prior.log_density(theta);
}

/// Sampler target: posterior log-density of eta = to_unconstrained(theta),
/// including the log-Jacobian of the bijection. Never throws on zero-density
/// regions; returns -inf instead.
inline double log_posterior(const ModelSpec& model, std::span<const double> eta) {
  if (eta.size() != model.arity()) throw InputError("log_posterior: wrong parameter count");
  for (double e : eta) {
    if (!std::isfinite(e)) return -std::numeric_limits<double>::infinity();
  }
  const auto constrained = to_constrained(model.family, eta);
  const double density = log_posterior_density(model, constrained.theta);
  if (!std::isfinite(density)) return -std::numeric_limits<double>::infinity();
  return density + constrained.log_jacobian;
}

enum class ProposalAdaptation { diagonal, dense };

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup = 1000;
  std::size_t samples_per_chain = 1000;
  std::uint64_t seed = 0;
  double target_acceptance = 0.3;
  double initial_step_scale = 0.1;
  ProposalAdaptation adaptation = ProposalAdaptation::dense;

  void validate() const {
    if (chains < 1 || warmup < 1 || samples_per_chain < 1) {
      throw InputError("sampler: chains, warmup and samples_per_chain must be >= 1");
    }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
      throw InputError("sampler: target_acceptance must lie in (0, 1)");
    }
    if (!(initial_step_scale > 0.0)) throw InputError("sampler: initial_step_scale must be > 0");
  }
};

struct ChainInfo {
  double acceptance_rate = 0.0;
  double step_size = 0.0;
  friend bool operator==(const ChainInfo&, const ChainInfo&) = default;
};

// Retained draws in constrained space, row-major D x P.
struct PosteriorDraws {
  Family family = Family::normal;
  std::size_t n_params = 0;
  std::vector<double> values;
  std::vector<std::size_t> chain_id;
  std::vector<double> log_likelihood;
  std::uint64_t seed = 0;
  std::size_t warmup = 0;
  std::vector<ChainInfo> chains;

  std::size_t size() const { return chain_id.size(); }
  std::size_t chain_count() const { return chains.size(); }

  std::span<const double> draw(std::size_t i) const {
    return {values.data() + i * n_params, n_params};
  }

  std::vector<double> column(std::size_t p) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = values[i * n_params + p];
    return out;
  }

  Dist dist(std::size_t i) const { return Dist(family, draw(i)); }

  double acceptance_rate() const {
    if (chains.empty()) return 0.0;
    double total = 0.0;
    for (const auto& c : chains) total += c.acceptance_rate;
    return total / static_cast<double>(chains.size());
  }

  // Draws for one parameter split by chain, in chain order.
  std::vector<std::vector<double>> chains_of(std::size_t p) const {
    std::vector<std::vector<double>> out(chain_count());
    for (std::size_t i = 0; i < size(); ++i) out[chain_id[i]].push_back(values[i * n_params + p]);
    return out;
  }

  friend bool operator==(const PosteriorDraws&, const PosteriorDraws&) = default;
};

class InitializationError : public DomainError {
 public:
  using DomainError::DomainError;
};

namespace detail {

inline std::string format_vector(std::span<const double> v) {
  std::ostringstream out;
  out.precision(17);
  out << '(';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << ')';
  return out.str();
}

inline std::vector<double> initial_point(const ModelSpec& model, Rng& rng) {
  std::vector<double> eta(model.arity());
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (double& e : eta) e = rng.normal();
    if (std::isfinite(log_posterior(model, eta))) return eta;
  }
  throw InitializationError("sampler: no finite starting point after 100 attempts, last eta " +
                            format_vector(eta));
}

// Lower-triangular Cholesky factor of a small symmetric matrix (row-major).
// Returns nullopt if the matrix is not positive definite.
inline std::optional<std::vector<double>> cholesky(std::vector<double> a, std::size_t dim) {
  for (std::size_t j = 0; j < dim; ++j) {
    double d = a[j * dim + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * dim + k] * a[j * dim + k];
    if (!(d > 0.0)) return std::nullopt;
    a[j * dim + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < dim; ++i) {
      double s = a[i * dim + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * dim + k] * a[j * dim + k];
      a[i * dim + j] = s / a[j * dim + j];
    }
    for (std::size_t k = j + 1; k < dim; ++k) a[j * dim + k] = 0.0;
  }
  return a;
}

// Running mean and covariance (Welford).
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t dim) : dim_(dim), mean_(dim), m2_(dim * dim) {}

  void add(std::span<const double> x) {
    ++count_;
    std::vector<double> delta(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      delta[i] = x[i] - mean_[i];
      mean_[i] += delta[i] / static_cast<double>(count_);
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) m2_[i * dim_ + j] += delta[i] * (x[j] - mean_[j]);
    }
  }

  std::size_t count() const { return count_; }

  std::vector<double> covariance() const {
    std::vector<double> c(m2_);
    for (double& v : c) v /= static_cast<double>(count_ - 1);
    return c;
  }

 private:
  std::size_t dim_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct ChainResult {
  std::vector<double> values;
  std::vector<double> log_likelihood;
  ChainInfo info;
};

inline ChainResult run_chain(const ModelSpec& model, const SamplerConfig& cfg,
                             std::size_t chain) {
  const std::size_t dim = model.arity();
  Rng rng = Rng::stream(cfg.seed, chain);
  std::vector<double> eta = initial_point(model, rng);
  double current = log_posterior(model, eta);

  // Proposal: eta + step * L z with L lower triangular, identity at first.
  std::vector<double> factor(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) factor[i * dim + i] = 1.0;
  double log_step = std::log(cfg.initial_step_scale);

  // Covariance is re-estimated at the end of each window from the draws
  // inside it; the step size adapts continuously.
  const std::size_t window_start = cfg.warmup / 5;
  std::vector<std::size_t> window_ends = {cfg.warmup * 2 / 5, cfg.warmup * 3 / 5,
                                          cfg.warmup * 4 / 5};
  CovarianceAccumulator window(dim);
  std::size_t adapt_counter = 0;
  std::size_t warmup_accepted = 0;

  std::vector<double> proposal(dim);
  std::vector<double> z(dim);
  ChainResult result;
  result.values.reserve(cfg.samples_per_chain * dim);
  result.log_likelihood.reserve(cfg.samples_per_chain);
  std::size_t accepted = 0;

  const std::size_t total = cfg.warmup + cfg.samples_per_chain;
  for (std::size_t iter = 0; iter < total; ++iter) {
    const bool warming = iter < cfg.warmup;
    const double step = std::exp(log_step);
    for (double& v : z) v = rng.normal();
    for (std::size_t i = 0; i < dim; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= i; ++j) s += factor[i * dim + j] * z[j];
      proposal[i] = eta[i] + step * s;
    }
    const double candidate = log_posterior(model, proposal);
    const double log_ratio = candidate - current;
    const double accept_prob =
        std::isfinite(candidate) ? (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio)) : 0.0;
    const bool accept = rng.uniform() < accept_prob;
    if (accept) {
      eta = proposal;
      current = candidate;
    }

    if (warming) {
      if (accept) ++warmup_accepted;
      ++adapt_counter;
      log_step += (accept_prob - cfg.target_acceptance) /
                  std::pow(static_cast<double>(adapt_counter), 0.6);
      if (iter >= window_start) window.add(eta);
      const auto end = std::find(window_ends.begin(), window_ends.end(), iter + 1);
      if (end != window_ends.end() && window.count() > 2 * dim + 2) {
        auto cov = window.covariance();
        // Shrink toward a small diagonal so a short window cannot produce a
        // degenerate proposal.
        for (std::size_t i = 0; i < dim; ++i) {
          for (std::size_t j = 0; j < dim; ++j) {
            if (cfg.adaptation == ProposalAdaptation::diagonal && i != j) cov[i * dim + j] = 0.0;
          }
          cov[i * dim + i] += 1e-10;
        }
        if (auto chol = cholesky(cov, dim)) {
          factor = *chol;
          // Optimal random-walk scale for a Gaussian target is about 2.4/sqrt(d).
          log_step = std::log(2.4 / std::sqrt(static_cast<double>(dim)));
          adapt_counter = 0;
        }
        window = CovarianceAccumulator(dim);
      }
    } else {
      if (accept) ++accepted;
      const auto constrained = to_constrained(model.family, eta);
      result.values.insert(result.values.end(), constrained.theta.begin(),
                           constrained.theta.end());
      const Dist d(model.family, constrained.theta);
      result.log_likelihood.push_back(joint_os_loglik(d, model.obs));
    }
  }

  if (static_cast<double>(warmup_accepted) < 1e-3 * static_cast<double>(cfg.warmup)) {
    throw InitializationError("sampler: chain " + std::to_string(chain) +
                              " rejected every warmup proposal near eta " + format_vector(eta));
  }
  result.info.acceptance_rate =
      static_cast<double>(accepted) / static_cast<double>(cfg.samples_per_chain);
  result.info.step_size = std::exp(log_step);
  return result;
}

}  // namespace detail

/// Adaptive random-walk Metropolis in unconstrained space. Chains run in
/// parallel, each on its own RNG stream; output is merged in chain order, so
/// results are identical for identical inputs.
inline PosteriorDraws sample_posterior(const ModelSpec& model, const SamplerConfig& cfg) {
  model.validate();
  cfg.validate();
  std::vector<std::future<detail::ChainResult>> futures;
  futures.reserve(cfg.chains);
  for (std::size_t c = 0; c < cfg.chains; ++c) {
    futures.push_back(std::async(std::launch::async,
                                 [&model, &cfg, c] { return detail::run_chain(model, cfg, c); }));
  }

  PosteriorDraws out;
  out.family = model.family;
  out.n_params = model.arity();
  out.seed = cfg.seed;
  out.warmup = cfg.warmup;
  for (std::size_t c = 0; c < cfg.chains; ++c) {
    auto chain = futures[c].get();
    out.values.insert(out.values.end(), chain.values.begin(), chain.values.end());
    out.log_likelihood.insert(out.log_likelihood.end(), chain.log_likelihood.begin(),
                              chain.log_likelihood.end());
    out.chain_id.insert(out.chain_id.end(), cfg.samples_per_chain, c);
    out.chains.push_back(chain.info);
  }
  return out;
}

struct PointEstimate {
  std::vector<double> theta;
  double objective = 0.0;
};

namespace detail {

inline PointEstimate best_of_restarts(Family family,
                                      const std::function<double(std::span<const double>)>& loss,
                                      std::size_t restarts, std::uint64_t seed) {
  if (restarts < 1) throw InputError("optimizer: restarts must be >= 1");
  const std::size_t dim = family_spec(family).arity;
  Rng rng(seed);
  std::optional<NelderMeadResult> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<double> start(dim);
    for (double& e : start) e = rng.normal();
    if (!std::isfinite(loss(start))) continue;
    auto result = nelder_mead(loss, start);
    if (!best || result.value < best->value) best = std::move(result);
  }
  if (!best || !std::isfinite(best->value)) {
    throw DomainError("optimizer: objective is not finite at any initialization");
  }
  return {to_constrained(family, best->x).theta, best->value};
}

}  // namespace detail

/// Posterior mode in constrained space, searched over unconstrained
/// coordinates by Nelder-Mead from `restarts` random N(0, 1) starts.
/// objective holds the log posterior density at the mode.
inline PointEstimate map_estimate(const ModelSpec& model, std::size_t restarts,
                                  std::uint64_t seed = 0) {
  model.validate();
  auto loss = [&model](std::span<const double> eta) {
    const auto theta = to_constrained(model.family, eta).theta;
    const double v = log_posterior_density(model, theta);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  auto result = detail::best_of_restarts(model.family, loss, restarts, seed);
  result.objective = -result.objective;
  return result;
}

/// Least-squares CDF regression: minimizes sum (q_m - F(x_m))^2.
/// objective holds the residual sum of squares.
inline PointEstimate mse_fit(Family family, const QuantileObservation& obs, std::size_t restarts,
                             std::uint64_t seed = 0) {
  auto loss = [family, &obs](std::span<const double> eta) {
    const auto theta = to_constrained(family, eta).theta;
    // Positive parameters can underflow to zero for extreme eta.
    if (!in_domain(family, theta)) return std::numeric_limits<double>::infinity();
    const Dist d(family, theta);
    double sse = 0.0;
    for (std::size_t m = 0; m < obs.size(); ++m) {
      const double r = obs.q()[m] - d.cdf(obs.x()[m]);
      sse += r * r;
    }
    return sse;
  };
  return detail::best_of_restarts(family, loss, restarts, seed);
}

}  // namespace qmatch
