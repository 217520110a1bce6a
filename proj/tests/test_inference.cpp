#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "qmatch/inference.hpp"
#include "qmatch/predictive.hpp"
#include "qmatch/simulation.hpp"
#include "support/oracles.hpp"

using namespace qmatch;
using qmatch::oracle::kSeeds;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

QuantileObservation el_data() {
  return {{0.25, 0.5, 0.75}, {4930.0 / 7500, 1.0, 11000.0 / 7500}, 12918, 7500};
}

// x at the exact quantiles of d.
QuantileObservation exact_quantiles(const Dist& d, std::vector<double> q, std::uint64_t n) {
  std::vector<double> x;
  for (double p : q) x.push_back(d.quantile(p));
  return {std::move(q), std::move(x), n};
}

std::vector<double> equidistant(double a, double b, int m) {
  std::vector<double> q;
  for (int i = 0; i < m; ++i) q.push_back(a + (b - a) * i / (m - 1));
  return q;
}

double sd_of(const std::vector<double>& v) { return oracle::mean_sd(v).second; }

SamplerConfig config(std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// Transforms -----------------------------------------------------------------

TEST(Transforms, Examples) {
  const std::vector<double> eta{3.0, std::log(1.5)};
  const auto c = to_constrained(Family::normal, eta);
  EXPECT_DOUBLE_EQ(c.theta[0], 3.0);
  EXPECT_NEAR(c.theta[1], 1.5, 1e-15);
  EXPECT_NEAR(c.log_jacobian, std::log(1.5), 1e-15);
  EXPECT_EQ(to_unconstrained(Family::normal, std::vector<double>{3.0, 1.5})[1], std::log(1.5));

  const auto e = to_constrained(Family::exponential, std::vector<double>{0.0});
  EXPECT_EQ(e.theta[0], 1.0);
  EXPECT_EQ(e.log_jacobian, 0.0);
}

TEST(Transforms, Errors) {
  EXPECT_THROW(to_unconstrained(Family::gamma, std::vector<double>{-1.0, 1.0}), DomainError);
  EXPECT_THROW(to_unconstrained(Family::gamma, std::vector<double>{1.0}), InputError);
  EXPECT_THROW(to_constrained(Family::gamma, std::vector<double>{1.0}), InputError);
}

class TransformProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(TransformProperty, RoundTripIsIdentity) {
  Rng rng(GetParam());
  for (const auto& spec : kFamilySpecs) {
    for (int i = 0; i < 100; ++i) {
      std::vector<double> eta(spec.arity);
      for (double& e : eta) e = 3.0 * rng.normal();
      const auto back = to_unconstrained(spec.family, to_constrained(spec.family, eta).theta);
      for (std::size_t p = 0; p < eta.size(); ++p) {
        EXPECT_NEAR(back[p], eta[p], 1e-12) << spec.name;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, TransformProperty, ::testing::ValuesIn(kSeeds));

// Posterior density ----------------------------------------------------------

TEST(LogPosterior, IsLikelihoodPlusPriorPlusJacobian) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  const std::vector<double> eta{1.1, -1.0};
  const std::vector<double> theta{std::exp(1.1), std::exp(-1.0)};
  double prior = 0.0;
  for (double t : theta) {
    prior += -0.5 * (t / 100) * (t / 100) - std::log(100 * std::sqrt(2 * std::numbers::pi));
  }
  const double expected = joint_os_loglik(Dist(Family::gamma, theta), el_data()) + prior + 1.1 - 1.0;
  EXPECT_NEAR(log_posterior(model, eta), expected, 1e-9);
}

TEST(LogPosterior, GaussianNoiseLikelihoodIsSelectable) {
  const auto model = ModelSpec::make(Family::gamma, el_data(), LikelihoodKind::gaussian_noise, 0.1);
  const std::vector<double> theta{3.0, 0.35};
  EXPECT_NEAR(log_likelihood(model, theta),
              gaussian_noise_loglik(Dist(Family::gamma, theta), el_data(), 0.1), 1e-12);
}

TEST(LogPosterior, NeverThrowsOnZeroDensity) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  EXPECT_EQ(log_posterior(model, std::vector<double>{800.0, 0.0}), kNegInf);
  EXPECT_EQ(log_posterior(model, std::vector<double>{-800.0, 0.0}), kNegInf);
  EXPECT_EQ(log_posterior(model, std::vector<double>{std::nan(""), 0.0}), kNegInf);
  EXPECT_EQ(log_likelihood(model, std::vector<double>{-1.0, 1.0}), kNegInf);
  const QuantileObservation negative({0.2, 0.8}, {-2.0, -1.0}, 50);
  EXPECT_EQ(log_posterior(ModelSpec::make(Family::gamma, negative), std::vector<double>{0.0, 0.0}),
            kNegInf);
  EXPECT_THROW(log_posterior(model, std::vector<double>{0.0}), InputError);
}

TEST(LogPosterior, FiniteOnRandomEtaCloudForElGamma) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> eta{rng.normal(), rng.normal()};
    EXPECT_TRUE(std::isfinite(log_posterior(model, eta))) << eta[0] << " " << eta[1];
  }
}

TEST(LogPosterior, SingleMedianObservationDrivesLocation) {
  // One median at x = 4: the mode of the location follows the data, not the
  // prior mean 0.
  const QuantileObservation obs({0.5}, {4.0}, 101);
  const auto map = map_estimate(ModelSpec::make(Family::normal, obs), 10, 3);
  EXPECT_NEAR(map.theta[0], 4.0, 0.05);
}

TEST(LogPosterior, TranslatingDataTranslatesMode) {
  const Dist truth(Family::normal, {1.0, 2.0});
  const auto obs = exact_quantiles(truth, {0.1, 0.3, 0.5, 0.7, 0.9}, 500);
  std::vector<double> shifted(obs.x().begin(), obs.x().end());
  for (double& x : shifted) x += 5.0;
  const QuantileObservation moved({obs.q().begin(), obs.q().end()}, shifted, 500);
  auto model = ModelSpec::make(Family::normal, obs);
  auto moved_model = ModelSpec::make(Family::normal, moved);
  model.prior = moved_model.prior = PriorSpec::flat(2);
  const auto a = map_estimate(model, 5, 1);
  const auto b = map_estimate(moved_model, 5, 1);
  EXPECT_NEAR(b.theta[0] - a.theta[0], 5.0, 1e-5);
  EXPECT_NEAR(b.theta[1], a.theta[1], 1e-5);
}

TEST(ModelSpec, ValidatesPriorDimensionsAndNoise) {
  auto model = ModelSpec::make(Family::gamma, el_data());
  model.prior = PriorSpec::broad(1);
  EXPECT_THROW(model.validate(), InputError);
  auto noisy = ModelSpec::make(Family::gamma, el_data(), LikelihoodKind::gaussian_noise, 0.0);
  EXPECT_THROW(noisy.validate(), InputError);
  EXPECT_EQ(ModelSpec::make(Family::gamma, el_data()).prior.parameters[0].sd, 100.0);
}

// Sampler --------------------------------------------------------------------

TEST(Sampler, ConfigValidation) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  auto cfg = config(1);
  cfg.chains = 0;
  EXPECT_THROW(sample_posterior(model, cfg), InputError);
  cfg = config(1);
  cfg.samples_per_chain = 0;
  EXPECT_THROW(sample_posterior(model, cfg), InputError);
  cfg = config(1);
  cfg.target_acceptance = 1.0;
  EXPECT_THROW(sample_posterior(model, cfg), InputError);
}

TEST(Sampler, InitializationFailureIsReported) {
  const QuantileObservation negative({0.2, 0.8}, {-2.0, -1.0}, 50);
  auto cfg = config(1);
  cfg.warmup = 10;
  cfg.samples_per_chain = 10;
  EXPECT_THROW(sample_posterior(ModelSpec::make(Family::gamma, negative), cfg),
               InitializationError);
}

TEST(Sampler, DrawLayoutAndMetadata) {
  auto cfg = config(5);
  cfg.chains = 3;
  cfg.warmup = 200;
  cfg.samples_per_chain = 150;
  const auto model = ModelSpec::make(Family::gamma, el_data());
  const auto pd = sample_posterior(model, cfg);
  ASSERT_EQ(pd.size(), 450u);
  EXPECT_EQ(pd.values.size(), 900u);
  EXPECT_EQ(pd.chain_count(), 3u);
  EXPECT_EQ(pd.seed, 5u);
  EXPECT_EQ(pd.warmup, 200u);
  for (std::size_t i = 0; i < pd.size(); ++i) {
    EXPECT_EQ(pd.chain_id[i], i / 150);
    EXPECT_TRUE(in_domain(Family::gamma, pd.draw(i)));
    EXPECT_EQ(pd.log_likelihood[i], joint_os_loglik(pd.dist(i), el_data()));
  }
  EXPECT_GT(pd.acceptance_rate(), 0.1);
  EXPECT_LT(pd.acceptance_rate(), 0.6);
}

TEST(Sampler, GaussianNoiseFitStoresOrderStatisticsLoglik) {
  const auto model = ModelSpec::make(Family::gamma, el_data(), LikelihoodKind::gaussian_noise);
  auto cfg = config(2);
  cfg.warmup = 300;
  cfg.samples_per_chain = 100;
  const auto pd = sample_posterior(model, cfg);
  for (std::size_t i = 0; i < pd.size(); ++i) {
    EXPECT_EQ(pd.log_likelihood[i], joint_os_loglik(pd.dist(i), el_data()));
  }
}

class SamplerProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SamplerProperty, SeedDeterminism) {
  const auto model = ModelSpec::make(Family::weibull, el_data());
  auto cfg = config(GetParam());
  cfg.warmup = 300;
  cfg.samples_per_chain = 300;
  const auto a = sample_posterior(model, cfg);
  const auto b = sample_posterior(model, cfg);
  EXPECT_TRUE(a == b);
  cfg.seed += 1;
  EXPECT_FALSE(a == sample_posterior(model, cfg));
}

// Posterior of an exponential rate from one observed quantile, compared with
// the density normalized by quadrature.
TEST_P(SamplerProperty, DetailedBalanceAgainstNormalizedPosterior) {
  const QuantileObservation obs({0.3}, {0.5}, 40);
  const auto model = ModelSpec::make(Family::exponential, obs);
  auto cfg = config(GetParam());
  cfg.warmup = 2000;
  cfg.samples_per_chain = 10000;
  const auto draws = sample_posterior(model, cfg).column(0);

  auto density = [&](double rate) {
    return rate <= 0 ? 0.0
                     : std::exp(log_posterior_density(model, std::vector<double>{rate}) - 2.0);
  };
  const double hi = 5.0;
  const double z = oracle::piecewise_simpson(density, 1e-9, hi, 50);
  auto cdf = [&](double r) {
    return r <= 0 ? 0.0 : oracle::adaptive_simpson(density, 1e-9, std::min(r, hi), 1e-9) / z;
  };
  // Thin to roughly independent draws; the KS bound assumes independence.
  std::vector<double> thinned;
  for (std::size_t i = 0; i < draws.size(); i += 4) thinned.push_back(draws[i]);
  EXPECT_LT(oracle::ks_statistic(thinned, cdf), 0.02);
}

TEST_P(SamplerProperty, GaussianNoiseUnderstatesLocationUncertainty) {
  const auto obs = simulate_quantile_data(
      {Dist(Family::normal, {3.0, 1.5}), 200, equidistant(0.05, 0.95, 10), 1, GetParam()});
  const auto os = sample_posterior(ModelSpec::make(Family::normal, obs), config(GetParam()));
  const auto gn = sample_posterior(
      ModelSpec::make(Family::normal, obs, LikelihoodKind::gaussian_noise), config(GetParam()));
  EXPECT_LT(sd_of(gn.column(0)), sd_of(os.column(0)));
}

TEST_P(SamplerProperty, PosteriorContractsWithSampleSize) {
  const Dist truth(Family::normal, {3.0, 1.5});
  const auto q = equidistant(0.05, 0.95, 10);
  double previous = std::numeric_limits<double>::infinity();
  for (std::uint64_t n : {50, 200, 1000}) {
    const auto pd =
        sample_posterior(ModelSpec::make(Family::normal, exact_quantiles(truth, q, n)),
                         config(GetParam()));
    const double sd = sd_of(pd.column(0));
    EXPECT_LT(sd, previous) << "N=" << n;
    previous = sd;
  }
}

TEST_P(SamplerProperty, DoublingNNeverWidensPosterior) {
  // Expected ratio is 1/sqrt(2); 1.05 leaves room for Monte Carlo error.
  const Dist truth(Family::gamma, {3.0, 0.4});
  const std::vector<double> q{0.1, 0.25, 0.5, 0.75, 0.9};
  for (std::uint64_t n : {100, 400}) {
    const auto a =
        sample_posterior(ModelSpec::make(Family::gamma, exact_quantiles(truth, q, n)),
                         config(GetParam()));
    const auto b =
        sample_posterior(ModelSpec::make(Family::gamma, exact_quantiles(truth, q, 2 * n)),
                         config(GetParam()));
    for (std::size_t p = 0; p < 2; ++p) {
      EXPECT_LT(sd_of(b.column(p)), 1.05 * sd_of(a.column(p))) << "N=" << n << " p=" << p;
    }
  }
}

TEST_P(SamplerProperty, ScaleEquivariance) {
  const double a = 10.0;
  const auto obs = simulate_quantile_data(
      {Dist(Family::normal, {2.0, 1.0}), 300, {0.1, 0.3, 0.5, 0.7, 0.9}, 1, GetParam()});
  auto model = ModelSpec::make(Family::normal, obs);
  auto scaled = ModelSpec::make(Family::normal, obs.rescaled(a));
  for (auto& p : scaled.prior.parameters) {
    p.mean *= a;
    p.sd *= a;
  }
  auto cfg = config(GetParam());
  cfg.samples_per_chain = 2000;
  auto s1 = sample_posterior(model, cfg).column(1);
  cfg.seed += 1000;
  auto s2 = sample_posterior(scaled, cfg).column(1);
  for (double p : {0.05, 0.5, 0.95}) {
    EXPECT_NEAR(empirical_quantile(s2, p) / (a * empirical_quantile(s1, p)), 1.0, 0.05) << p;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SamplerProperty, ::testing::ValuesIn(kSeeds));

TEST(Sampler, DoublingNAcrossFiveSeeds) {
  const Dist truth(Family::normal, {3.0, 1.5});
  const auto q = equidistant(0.05, 0.95, 10);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = sample_posterior(
        ModelSpec::make(Family::normal, exact_quantiles(truth, q, 200)), config(seed));
    const auto b = sample_posterior(
        ModelSpec::make(Family::normal, exact_quantiles(truth, q, 400)), config(seed));
    for (std::size_t p = 0; p < 2; ++p) {
      EXPECT_LT(sd_of(b.column(p)), 1.05 * sd_of(a.column(p))) << seed << " " << p;
    }
  }
}

// MAP and MSE ----------------------------------------------------------------

TEST(MapEstimate, ConsistentForLargeN) {
  const Dist truth(Family::normal, {3.0, 1.5});
  const auto obs = exact_quantiles(truth, equidistant(0.05, 0.95, 10), 100000);
  const auto map = map_estimate(ModelSpec::make(Family::normal, obs), 5, 11);
  EXPECT_NEAR(map.theta[0], 3.0, 0.01);
  EXPECT_NEAR(map.theta[1], 1.5, 0.01);
}

TEST(MapEstimate, DominatesEveryDraw) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  const auto map = map_estimate(model, 5, 2);
  EXPECT_NEAR(map.objective, log_posterior_density(model, map.theta), 1e-12);
  const auto pd = sample_posterior(model, config(4));
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const auto d = pd.draw(i);
    EXPECT_GE(map.objective + 1e-6, log_posterior_density(model, d));
  }
}

TEST(MapEstimate, RestartCountDoesNotMatterWhenUnimodal) {
  const auto model = ModelSpec::make(Family::gamma, el_data());
  const auto one = map_estimate(model, 1, 9);
  const auto ten = map_estimate(model, 10, 9);
  for (std::size_t p = 0; p < 2; ++p) EXPECT_NEAR(one.theta[p], ten.theta[p], 1e-4);
}

TEST(MapEstimate, Errors) {
  const QuantileObservation negative({0.2, 0.8}, {-2.0, -1.0}, 50);
  EXPECT_THROW(map_estimate(ModelSpec::make(Family::gamma, negative), 3), DomainError);
  EXPECT_THROW(map_estimate(ModelSpec::make(Family::gamma, el_data()), 0), InputError);
  EXPECT_THROW(mse_fit(Family::gamma, el_data(), 0), InputError);
}

TEST(MseFit, ZeroResidualAtExactQuantiles) {
  for (Family f : {Family::normal, Family::gamma, Family::weibull, Family::lognormal}) {
    const std::vector<double> theta = f == Family::normal ? std::vector<double>{3.0, 1.5}
                                                          : std::vector<double>{2.2, 0.8};
    const auto obs = exact_quantiles(Dist(f, theta), {0.1, 0.3, 0.5, 0.7, 0.9}, 100);
    const auto fit = mse_fit(f, obs, 5, 1);
    EXPECT_LT(fit.objective, 1e-15) << family_name(f);
    for (std::size_t p = 0; p < 2; ++p) EXPECT_NEAR(fit.theta[p], theta[p], 1e-4) << family_name(f);
  }
}

TEST(MseFit, EqualsGaussianNoiseMapUnderFlatPrior) {
  const auto obs = simulate_quantile_data(
      {Dist(Family::normal, {3.0, 1.5}), 200, equidistant(0.05, 0.95, 10), 1, 5});
  const auto mse = mse_fit(Family::normal, obs, 5, 1);
  for (double sigma : {0.01, 0.05, 0.3}) {
    auto model = ModelSpec::make(Family::normal, obs, LikelihoodKind::gaussian_noise, sigma);
    model.prior = PriorSpec::flat(2);
    const auto map = map_estimate(model, 5, 1);
    for (std::size_t p = 0; p < 2; ++p) EXPECT_NEAR(map.theta[p], mse.theta[p], 1e-4) << sigma;
  }
}

TEST(MseFit, CauchyDataInflateOrderStatisticsScale) {
  for (auto seed : kSeeds) {
    const auto obs = simulate_quantile_data(
        {Dist(Family::cauchy, {3.0, 1.5}), 200, equidistant(0.05, 0.95, 20), 1, seed});
    const auto mse = mse_fit(Family::normal, obs, 5, seed);
    const auto os = map_estimate(ModelSpec::make(Family::normal, obs), 5, seed);
    EXPECT_GT(os.theta[1], mse.theta[1]) << seed;
    // The least-squares fit tracks the central quantiles.
    const Dist fitted(Family::normal, mse.theta);
    for (std::size_t m = 7; m <= 12; ++m) {
      EXPECT_NEAR(fitted.cdf(obs.x()[m]), obs.q()[m], 0.1) << seed << " m=" << m;
    }
  }
}
