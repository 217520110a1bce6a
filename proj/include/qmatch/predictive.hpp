#pragma once

// Posterior-predictive queries, model scores and comparison, and the
// summaries that make up a fit report.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmatch/diagnostics.hpp"
#include "qmatch/distributions.hpp"
#include "qmatch/error.hpp"
#include "qmatch/inference.hpp"
#include "qmatch/order_statistics.hpp"
#include "qmatch/random.hpp"

namespace qmatch {

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and nonempty.
inline double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double empirical_quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, p);
}

struct Interval {
  double mean = 0.0;
  double lower = 0.0;  // 5% draw quantile
  double upper = 0.0;  // 95% draw quantile
};

inline Interval summarize_interval(std::vector<double> values) {
  if (values.empty()) throw InputError("summarize_interval: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  std::sort(values.begin(), values.end());
  return {sum / static_cast<double>(values.size()), sorted_quantile(values, 0.05),
          sorted_quantile(values, 0.95)};
}

struct PredictiveCurve {
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Posterior-predictive CDF: the average of F_theta(x) over draws, with
/// pointwise 5%/95% draw bands.
inline PredictiveCurve predictive_cdf(const PosteriorDraws& pd, std::span<const double> x_grid) {
  if (pd.size() == 0) throw InputError("predictive_cdf: no draws");
  std::vector<Dist> dists;
  dists.reserve(pd.size());
  for (std::size_t i = 0; i < pd.size(); ++i) dists.push_back(pd.dist(i));

  PredictiveCurve curve;
  curve.x.assign(x_grid.begin(), x_grid.end());
  std::vector<double> values(dists.size());
  for (double x : x_grid) {
    for (std::size_t i = 0; i < dists.size(); ++i) values[i] = dists[i].cdf(x);
    const auto s = summarize_interval(values);
    curve.mean.push_back(s.mean);
    curve.lower.push_back(s.lower);
    curve.upper.push_back(s.upper);
  }
  return curve;
}

/// Per-draw p-quantile summarized over draws, multiplied by divisor to undo a
/// normalization of the fitted data.
inline Interval predictive_quantile(const PosteriorDraws& pd, double p, double divisor = 1.0) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("predictive_quantile: p must lie in (0, 1)");
  if (pd.size() == 0) throw InputError("predictive_quantile: no draws");
  std::vector<double> values(pd.size());
  for (std::size_t i = 0; i < pd.size(); ++i) values[i] = pd.dist(i).quantile(p) * divisor;
  return summarize_interval(std::move(values));
}

/// n_per_draw samples from each draw's distribution, concatenated in draw order.
inline std::vector<double> predictive_sample(const PosteriorDraws& pd, Rng& rng,
                                             std::size_t n_per_draw) {
  if (pd.size() == 0) throw InputError("predictive_sample: no draws");
  std::vector<double> out;
  out.reserve(pd.size() * n_per_draw);
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const Dist d = pd.dist(i);
    for (std::size_t j = 0; j < n_per_draw; ++j) out.push_back(d.sample(rng));
  }
  return out;
}

struct ModelScore {
  double mean = 0.0;
  double to_q05 = 0.0;  // mean - 5% quantile
  double to_q95 = 0.0;  // 95% quantile - mean
};

/// Mean of the per-draw log-likelihood with distances to its 5%/95% quantiles.
inline ModelScore score_model(const PosteriorDraws& pd) {
  if (pd.log_likelihood.empty()) throw InputError("score_model: no log-likelihood values");
  const auto s = summarize_interval(pd.log_likelihood);
  return {s.mean, s.mean - s.lower, s.upper - s.mean};
}

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  std::optional<double> r_hat;
  double ess = 0.0;
};

struct PredictiveQuantile {
  double p = 0.0;
  Interval value;
};

struct FitReport {
  Family family = Family::normal;
  LikelihoodKind likelihood = LikelihoodKind::order_statistics;
  double sigma_noise = kDefaultSigmaNoise;
  std::vector<double> q;
  std::vector<double> x;
  std::uint64_t n_total = 0;
  double scale_divisor = 1.0;
  SamplerConfig sampler;
  double acceptance_rate = 0.0;
  std::vector<ParameterSummary> parameters;
  ModelScore score;
  std::vector<PredictiveQuantile> predictive;
  std::optional<PosteriorDraws> draws;

  QuantileObservation observation() const { return {q, x, n_total, scale_divisor}; }

  bool converged(double r_hat_threshold = 1.05) const {
    for (const auto& p : parameters) {
      if (p.r_hat && !(*p.r_hat < r_hat_threshold)) return false;
    }
    return true;
  }
};

/// Builds a report from a model and its posterior draws. Predictive quantiles
/// are de-normalized by the observation's scale divisor.
inline FitReport summarize_fit(const ModelSpec& model, const SamplerConfig& cfg,
                               const PosteriorDraws& pd, std::span<const double> predictive_ps = {},
                               bool keep_draws = true) {
  FitReport report;
  report.family = model.family;
  report.likelihood = model.likelihood;
  report.sigma_noise = model.sigma_noise;
  report.q.assign(model.obs.q().begin(), model.obs.q().end());
  report.x.assign(model.obs.x().begin(), model.obs.x().end());
  report.n_total = model.obs.n_total();
  report.scale_divisor = model.obs.scale_divisor();
  report.sampler = cfg;
  report.acceptance_rate = pd.acceptance_rate();

  const auto diag = diagnostics(pd);
  const auto& spec = family_spec(model.family);
  for (std::size_t p = 0; p < pd.n_params; ++p) {
    auto column = pd.column(p);
    ParameterSummary s;
    s.name = std::string(spec.parameter_names[p]);
    double sum = 0.0;
    for (double v : column) sum += v;
    s.mean = sum / static_cast<double>(column.size());
    double ss = 0.0;
    for (double v : column) ss += (v - s.mean) * (v - s.mean);
    s.sd = column.size() > 1 ? std::sqrt(ss / static_cast<double>(column.size() - 1)) : 0.0;
    std::sort(column.begin(), column.end());
    s.q05 = sorted_quantile(column, 0.05);
    s.q50 = sorted_quantile(column, 0.50);
    s.q95 = sorted_quantile(column, 0.95);
    s.r_hat = diag[p].r_hat;
    s.ess = diag[p].ess;
    report.parameters.push_back(std::move(s));
  }
  report.score = score_model(pd);
  for (double p : predictive_ps) {
    report.predictive.push_back({p, predictive_quantile(pd, p, model.obs.scale_divisor())});
  }
  if (keep_draws) report.draws = pd;
  return report;
}

struct RankedModel {
  std::size_t index = 0;  // position in the input list
  Family family = Family::normal;
  double score = 0.0;
  bool best = false;
};

/// Ranks reports by mean log-likelihood, highest first; ties broken by family
/// name. All reports must describe the same observation.
inline std::vector<RankedModel> compare_models(std::span<const FitReport> reports) {
  if (reports.empty()) throw InputError("compare_models: no reports");
  const auto& first = reports.front();
  std::vector<RankedModel> ranking;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (r.q != first.q || r.x != first.x || r.n_total != first.n_total ||
        r.scale_divisor != first.scale_divisor) {
      throw InputError("compare_models: reports were fitted to different observations");
    }
    ranking.push_back({i, r.family, r.score.mean, false});
  }
  std::stable_sort(ranking.begin(), ranking.end(), [](const RankedModel& a, const RankedModel& b) {
    if (a.score != b.score) return a.score > b.score;
    return family_name(a.family) < family_name(b.family);
  });
  ranking.front().best = true;
  return ranking;
}

/// Gaussian kernel density estimate with Silverman's bandwidth
/// 1.06 * sd * n^(-1/5), evaluated on grid.
inline std::vector<double> kde_curve(std::span<const double> samples, std::span<const double> grid) {
  if (samples.size() < 2) throw InputError("kde_curve: need at least two samples");
  double sum = 0.0;
  for (double v : samples) sum += v;
  const double n = static_cast<double>(samples.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw InputError("kde_curve: samples have zero variance");
  const double h = 1.06 * sd * std::pow(n, -0.2);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out;
  out.reserve(grid.size());
  for (double g : grid) {
    double s = 0.0;
    for (double v : samples) {
      const double z = (g - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    out.push_back(s * norm);
  }
  return out;
}

}  // namespace qmatch
