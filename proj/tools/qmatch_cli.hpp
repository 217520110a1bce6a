#pragma once

// qmatch command-line front end. run_cli is kept in a header so the test
// suite can drive it in-process.
//
// Exit codes: 0 success, 1 input error, 2 completed with warnings
// (non-converged chains or failed fits in a comparison).

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "qmatch/qmatch.hpp"

namespace qmatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitWarning = 2;

/// Splits "a,b,c" into trimmed fields.
inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(text);
  while (std::getline(in, field, ',')) {
    const auto t = detail::trim(field);
    if (t.empty()) throw InputError("empty entry in list '" + text + "'");
    out.emplace_back(t);
  }
  if (out.empty()) throw InputError("empty list");
  return out;
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& f : split_list(text)) {
    const auto v = detail::parse_double(f);
    if (!v) throw InputError(what + ": '" + f + "' is not a finite number");
    out.push_back(*v);
  }
  return out;
}

/// "a:b:M" gives M equidistant values from a to b inclusive; anything else is
/// read as a comma-separated list.
inline std::vector<double> parse_range(const std::string& text, const std::string& what) {
  if (text.find(':') == std::string::npos) return parse_numbers(text, what);
  const auto first = text.find(':');
  const auto second = text.find(':', first + 1);
  if (second == std::string::npos || text.find(':', second + 1) != std::string::npos) {
    throw InputError(what + ": expected a:b:M, got '" + text + "'");
  }
  const auto a = detail::parse_double(text.substr(0, first));
  const auto b = detail::parse_double(text.substr(first + 1, second - first - 1));
  const auto m = detail::parse_count(text.substr(second + 1));
  if (!a || !b || !m) throw InputError(what + ": expected a:b:M, got '" + text + "'");
  if (*m < 1) throw InputError(what + ": M must be at least 1");
  if (*m == 1) {
    if (*a != *b) throw InputError(what + ": a single point needs a == b");
    return {*a};
  }
  if (!(*b > *a)) throw InputError(what + ": range end must exceed its start");
  std::vector<double> out;
  for (std::uint64_t i = 0; i < *m; ++i) {
    out.push_back(*a + (*b - *a) * static_cast<double>(i) / static_cast<double>(*m - 1));
  }
  out.back() = *b;
  return out;
}

inline Family parse_family_or_throw(const std::string& name) {
  if (const auto f = parse_family(name)) return *f;
  std::string choices;
  for (const auto& spec : kFamilySpecs) {
    if (!choices.empty()) choices += ", ";
    choices += spec.name;
  }
  throw InputError("unknown family '" + name + "' (choose from: " + choices + ")");
}

inline LikelihoodKind parse_likelihood(const std::string& name) {
  if (name == "os" || name == "order_statistics") return LikelihoodKind::order_statistics;
  if (name == "gn" || name == "gaussian_noise") return LikelihoodKind::gaussian_noise;
  throw InputError("unknown likelihood '" + name + "' (choose from: os, gn)");
}

/// --seed if given, else QMATCH_SEED, else 0.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("QMATCH_SEED"); env && *env) {
    const auto v = detail::parse_count(env);
    if (!v) throw InputError(std::string("QMATCH_SEED is not an unsigned integer: '") + env + "'");
    return *v;
  }
  return 0;
}

/// Writes to a sibling temp file and renames it over path; "-" or empty means
/// the given stream.
inline void write_output(const std::string& path, const std::string& text, std::ostream& stdout_) {
  if (path.empty() || path == "-") {
    stdout_ << text;
    return;
  }
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(path + ": cannot open for writing");
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw InputError(path + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InputError(path + ": cannot replace file: " + ec.message());
  }
}

struct SamplerFlags {
  std::size_t chains = 4;
  std::size_t samples = 1000;
  std::size_t warmup = 1000;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("--chains", chains, "number of chains")->capture_default_str();
    app->add_option("--samples", samples, "post-warmup draws per chain")->capture_default_str();
    app->add_option("--warmup", warmup, "warmup iterations per chain")->capture_default_str();
    app->add_option("--seed", seed, "random seed (default: $QMATCH_SEED, else 0)");
  }

  SamplerConfig config() const {
    SamplerConfig cfg;
    cfg.chains = chains;
    cfg.samples_per_chain = samples;
    cfg.warmup = warmup;
    cfg.seed = resolve_seed(seed);
    cfg.validate();
    return cfg;
  }
};

struct DataFlags {
  std::string path;
  std::optional<std::uint64_t> n;
  std::optional<double> divisor;

  void add_to(CLI::App* app) {
    app->add_option("data", path, "CSV dataset with header q,x")->required();
    app->add_option("--n", n, "sample size N (overrides the meta line)");
    app->add_option("--scale-divisor", divisor, "divide x by this before fitting");
  }

  QuantileObservation load() const { return read_dataset(path).observation(n, divisor); }
};

// fit ------------------------------------------------------------------------

struct FitFlags {
  DataFlags data;
  SamplerFlags sampler;
  std::string family;
  std::string likelihood = "os";
  double sigma_noise = kDefaultSigmaNoise;
  std::string ps = "0.99";
  bool no_draws = false;
  std::string out;
};

inline int cmd_fit(const FitFlags& f, std::ostream& out, std::ostream& err) {
  const auto family = parse_family_or_throw(f.family);
  const auto kind = parse_likelihood(f.likelihood);
  const auto ps = parse_numbers(f.ps, "--p");
  for (double p : ps) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("--p values must lie in (0, 1)");
  }
  const auto cfg = f.sampler.config();
  const auto model = ModelSpec::make(family, f.data.load(), kind, f.sigma_noise);
  model.validate();
  const auto pd = sample_posterior(model, cfg);
  const auto report = summarize_fit(model, cfg, pd, ps, !f.no_draws);
  write_output(f.out, serialize_report(report), out);
  if (!report.converged()) {
    err << "warning: R-hat >= 1.05 for at least one parameter\n";
    return kExitWarning;
  }
  return kExitOk;
}

// compare --------------------------------------------------------------------

struct CompareFlags {
  DataFlags data;
  SamplerFlags sampler;
  std::string families = "all";
  std::string likelihood = "os";
  double sigma_noise = kDefaultSigmaNoise;
  std::string ps = "0.99";
  std::string out;
};

inline std::vector<Family> parse_family_list(const std::string& text) {
  if (text == "all") return {kComparisonFamilies.begin(), kComparisonFamilies.end()};
  std::vector<Family> out;
  for (const auto& name : split_list(text)) {
    const auto f = parse_family_or_throw(name);
    if (std::find(out.begin(), out.end(), f) != out.end()) {
      throw InputError("family '" + name + "' listed twice");
    }
    out.push_back(f);
  }
  return out;
}

inline int cmd_compare(const CompareFlags& f, std::ostream& out, std::ostream& err) {
  const auto families = parse_family_list(f.families);
  const auto kind = parse_likelihood(f.likelihood);
  const auto ps = parse_numbers(f.ps, "--p");
  for (double p : ps) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("--p values must lie in (0, 1)");
  }
  const auto cfg = f.sampler.config();
  const auto obs = f.data.load();

  std::vector<FitReport> fits;
  Json failures = Json::array();
  for (Family family : families) {
    try {
      const auto model = ModelSpec::make(family, obs, kind, f.sigma_noise);
      model.validate();
      fits.push_back(summarize_fit(model, cfg, sample_posterior(model, cfg), ps, false));
    } catch (const DomainError& e) {
      failures.push_back({{"family", family_name(family)}, {"error", e.what()}});
      err << "warning: " << family_name(family) << " fit failed: " << e.what() << '\n';
    }
  }

  Json j;
  j["schema"] = kCompareReportSchema;
  j["likelihood"] = likelihood_name(kind);
  j["seed"] = cfg.seed;
  j["observation"] = {{"n_total", obs.n_total()},
                      {"scale_divisor", obs.scale_divisor()},
                      {"q", std::vector<double>(obs.q().begin(), obs.q().end())},
                      {"x", std::vector<double>(obs.x().begin(), obs.x().end())}};
  Json ranking = Json::array();
  bool all_converged = true;
  if (!fits.empty()) {
    std::size_t rank = 1;
    for (const auto& r : compare_models(fits)) {
      const auto& fit = fits[r.index];
      all_converged = all_converged && fit.converged();
      ranking.push_back({{"rank", rank++},
                         {"family", family_name(r.family)},
                         {"score", detail::number_or_null(fit.score.mean)},
                         {"to_q05", detail::number_or_null(fit.score.to_q05)},
                         {"to_q95", detail::number_or_null(fit.score.to_q95)},
                         {"best", r.best},
                         {"converged", fit.converged()}});
    }
  }
  j["ranking"] = std::move(ranking);
  j["failures"] = std::move(failures);
  Json reports = Json::array();
  for (const auto& fit : fits) reports.push_back(to_json(fit));
  j["fits"] = std::move(reports);
  write_output(f.out, to_json_text(j), out);

  if (fits.empty()) {
    err << "warning: every fit failed\n";
    return kExitWarning;
  }
  if (!j["failures"].empty()) return kExitWarning;
  if (!all_converged) {
    err << "warning: R-hat >= 1.05 in at least one fit\n";
    return kExitWarning;
  }
  return kExitOk;
}

// predict --------------------------------------------------------------------

struct PredictFlags {
  std::string report;
  std::string ps = "0.99";
  std::optional<double> divisor;
  std::string out;
};

inline FitReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_report(text.str());
}

inline int cmd_predict(const PredictFlags& f, std::ostream& out, std::ostream&) {
  const auto ps = parse_numbers(f.ps, "--p");
  for (double p : ps) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("--p values must lie in (0, 1)");
  }
  const auto report = load_report(f.report);
  if (!report.draws) throw InputError(f.report + ": report has no embedded draws");
  const double divisor = f.divisor.value_or(report.scale_divisor);
  if (!(divisor > 0.0)) throw InputError("--divisor must be positive");
  std::string text = "p,mean,lower,upper\n";
  for (double p : ps) {
    const auto v = predictive_quantile(*report.draws, p, divisor);
    text += format_double(p) + ',' + format_double(v.mean) + ',' + format_double(v.lower) + ',' +
            format_double(v.upper) + '\n';
  }
  write_output(f.out, text, out);
  return kExitOk;
}

// simulate -------------------------------------------------------------------

struct SimulateFlags {
  std::string dist;
  std::string params;
  std::uint64_t n = 0;
  std::string quantiles = "0.05:0.95:20";
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline Dist parse_dist(const std::string& family, const std::string& params) {
  const auto f = parse_family_or_throw(family);
  const auto theta = parse_numbers(params, "--params");
  try {
    return Dist(f, theta);
  } catch (const DomainError& e) {
    throw InputError(e.what());
  }
}

inline int cmd_simulate(const SimulateFlags& f, std::ostream& out, std::ostream&) {
  SimConfig cfg{parse_dist(f.dist, f.params), f.n, parse_range(f.quantiles, "--quantiles"), 1,
                resolve_seed(f.seed)};
  const auto obs = simulate_quantile_data(cfg);
  DatasetFile data;
  data.q.assign(obs.q().begin(), obs.q().end());
  data.x.assign(obs.x().begin(), obs.x().end());
  data.n_total = obs.n_total();
  std::ostringstream text;
  write_dataset(text, data);
  write_output(f.out, text.str(), out);
  return kExitOk;
}

// curves ---------------------------------------------------------------------

struct CurvesFlags {
  std::string mode;
  std::string dist = "normal";
  std::string params = "0,1";
  std::uint64_t n = 1000;
  std::string qs = "0.1,0.01,0.001";
  double sigma_noise = kDefaultPenaltySigma;
  std::string grid;
  std::uint64_t points = 401;
  std::vector<std::string> reports;
  std::size_t reps = 100;
  std::optional<std::uint64_t> seed;
  std::string out;
};

inline std::vector<double> linear_grid(double a, double b, std::uint64_t points) {
  return parse_range(format_double(a) + ':' + format_double(b) + ':' + std::to_string(points),
                     "--grid");
}

inline std::string penalty_csv(const CurvesFlags& f) {
  const Dist d = parse_dist(f.dist, f.params);
  const auto qs = parse_numbers(f.qs, "--q");
  std::vector<double> grid;
  if (!f.grid.empty()) {
    grid = parse_range(f.grid, "--grid");
  } else {
    grid = linear_grid(d.quantile(1e-6), d.quantile(1.0 - 1e-6), f.points);
  }
  std::string text = "q,x,cdf,os,gn\n";
  for (double q : qs) {
    const auto c = penalty_curves(d, q, static_cast<double>(f.n), grid, f.sigma_noise);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      text += format_double(q) + ',' + format_double(grid[i]) + ',' + format_double(d.cdf(grid[i])) +
              ',' + format_double(c.os[i]) + ',' + format_double(c.gn[i]) + '\n';
    }
  }
  return text;
}

// x is reported in raw units: the grid is divided by each report's scale
// divisor before evaluating the fitted CDF.
inline std::string predictive_csv(const CurvesFlags& f) {
  if (f.reports.empty()) throw InputError("--mode predictive needs at least one --report");
  std::vector<FitReport> reports;
  for (const auto& path : f.reports) {
    reports.push_back(load_report(path));
    if (!reports.back().draws) throw InputError(path + ": report has no embedded draws");
  }
  std::string text = "report,family,x,mean,lower,upper\n";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    std::vector<double> grid;
    if (!f.grid.empty()) {
      grid = parse_range(f.grid, "--grid");
    } else {
      const double lo = rep.x.front() * rep.scale_divisor;
      const double hi = rep.x.back() * rep.scale_divisor;
      const double pad = hi - lo;
      grid = linear_grid(std::max(lo - 2.0 * pad, 0.0), hi + 2.0 * pad, f.points);
    }
    std::vector<double> scaled(grid);
    for (double& v : scaled) v /= rep.scale_divisor;
    const auto curve = predictive_cdf(*rep.draws, scaled);
    const auto label = std::filesystem::path(f.reports[r]).stem().string();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      text += label + ',' + std::string(family_name(rep.family)) + ',' + format_double(grid[i]) +
              ',' + format_double(curve.mean[i]) + ',' + format_double(curve.lower[i]) + ',' +
              format_double(curve.upper[i]) + '\n';
    }
  }
  return text;
}

inline std::string ensemble_csv(const CurvesFlags& f) {
  SimConfig cfg{parse_dist(f.dist, f.params), f.n, {}, f.reps, resolve_seed(f.seed)};
  const auto e = empirical_cdf_ensemble(cfg);
  std::string text = "rep,rank,level,x\n";
  for (std::size_t r = 0; r < e.reps; ++r) {
    const auto row = e.row(r);
    for (std::size_t m = 0; m < e.n; ++m) {
      text += std::to_string(r) + ',' + std::to_string(m + 1) + ',' + format_double(e.levels[m]) +
              ',' + format_double(row[m]) + '\n';
    }
  }
  return text;
}

inline int cmd_curves(const CurvesFlags& f, const CLI::App& app, std::ostream& out, std::ostream&) {
  // Flags each mode accepts besides --mode and --out.
  static const std::vector<std::pair<std::string, std::set<std::string>>> allowed = {
      {"penalty", {"--dist", "--params", "--n", "--q", "--sigma-noise", "--grid", "--points"}},
      {"predictive", {"--report", "--grid", "--points"}},
      {"ensemble", {"--dist", "--params", "--n", "--reps", "--seed"}}};
  const auto mode = std::find_if(allowed.begin(), allowed.end(),
                                 [&](const auto& m) { return m.first == f.mode; });
  if (mode == allowed.end()) {
    throw InputError("unknown mode '" + f.mode + "' (choose from: penalty, predictive, ensemble)");
  }
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_name();
    if (opt->count() == 0 || name == "--mode" || name == "--out" || name == "--help") continue;
    if (mode->second.count(name) == 0) {
      throw InputError(name + " cannot be combined with --mode " + f.mode);
    }
  }
  if (!f.grid.empty() && app.get_option("--points")->count() > 0) {
    throw InputError("--grid and --points are mutually exclusive");
  }
  if (f.points < 2) throw InputError("--points must be at least 2");

  std::string text;
  if (f.mode == "penalty") {
    text = penalty_csv(f);
  } else if (f.mode == "predictive") {
    text = predictive_csv(f);
  } else {
    text = ensemble_csv(f);
  }
  write_output(f.out, text, out);
  return kExitOk;
}

// entry point ----------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian quantile matching: fit distributions to reported quantiles", "qmatch"};
  app.require_subcommand(1);

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit one family and write a JSON report");
  fit.data.add_to(fit_cmd);
  fit.sampler.add_to(fit_cmd);
  fit_cmd->add_option("--family", fit.family, "distribution family")->required();
  fit_cmd->add_option("--likelihood", fit.likelihood, "os (order statistics) or gn (gaussian noise)")
      ->capture_default_str();
  fit_cmd->add_option("--sigma-noise", fit.sigma_noise, "noise sd of the gn likelihood")
      ->capture_default_str();
  fit_cmd->add_option("--p", fit.ps, "predictive quantile levels, comma separated")
      ->capture_default_str();
  fit_cmd->add_flag("--no-draws", fit.no_draws, "omit posterior draws from the report");
  fit_cmd->add_option("--out", fit.out, "output path (default stdout)");

  CompareFlags compare;
  auto* compare_cmd = app.add_subcommand("compare", "fit several families and rank them");
  compare.data.add_to(compare_cmd);
  compare.sampler.add_to(compare_cmd);
  compare_cmd->add_option("--families", compare.families, "comma list or 'all'")
      ->capture_default_str();
  compare_cmd->add_option("--likelihood", compare.likelihood, "os or gn")->capture_default_str();
  compare_cmd->add_option("--sigma-noise", compare.sigma_noise, "noise sd of the gn likelihood")
      ->capture_default_str();
  compare_cmd->add_option("--p", compare.ps, "predictive quantile levels")->capture_default_str();
  compare_cmd->add_option("--out", compare.out, "output path (default stdout)");

  PredictFlags predict;
  auto* predict_cmd = app.add_subcommand("predict", "posterior-predictive quantiles from a report");
  predict_cmd->add_option("report", predict.report, "fit report with embedded draws")->required();
  predict_cmd->add_option("--p", predict.ps, "quantile levels, comma separated")
      ->capture_default_str();
  predict_cmd->add_option("--divisor", predict.divisor,
                          "multiply quantiles by this (default: the report's scale divisor)");
  predict_cmd->add_option("--out", predict.out, "output CSV (default stdout)");

  SimulateFlags simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "write a synthetic quantile dataset");
  simulate_cmd->add_option("--dist", simulate.dist, "distribution family")->required();
  simulate_cmd->add_option("--params", simulate.params, "parameters, comma separated")->required();
  simulate_cmd->add_option("--n", simulate.n, "sample size N")->required();
  simulate_cmd->add_option("--quantiles", simulate.quantiles, "a:b:M or comma list")
      ->capture_default_str();
  simulate_cmd->add_option("--seed", simulate.seed, "random seed (default: $QMATCH_SEED, else 0)");
  simulate_cmd->add_option("--out", simulate.out, "output CSV (default stdout)");

  CurvesFlags curves;
  auto* curves_cmd = app.add_subcommand("curves", "plot-ready curve data");
  curves_cmd->add_option("--mode", curves.mode, "penalty, predictive or ensemble")->required();
  curves_cmd->add_option("--dist", curves.dist, "distribution family")->capture_default_str();
  curves_cmd->add_option("--params", curves.params, "parameters")->capture_default_str();
  curves_cmd->add_option("--n", curves.n, "sample size N")->capture_default_str();
  curves_cmd->add_option("--q", curves.qs, "quantile levels (penalty)")->capture_default_str();
  curves_cmd->add_option("--sigma-noise", curves.sigma_noise, "gn noise sd (penalty)")
      ->capture_default_str();
  curves_cmd->add_option("--grid", curves.grid, "x grid as a:b:M or comma list");
  curves_cmd->add_option("--points", curves.points, "grid size when --grid is absent")
      ->capture_default_str();
  curves_cmd->add_option("--report", curves.reports, "fit report (predictive, repeatable)");
  curves_cmd->add_option("--reps", curves.reps, "replicates (ensemble)")->capture_default_str();
  curves_cmd->add_option("--seed", curves.seed, "random seed (ensemble)");
  curves_cmd->add_option("--out", curves.out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit, out, err);
    if (*compare_cmd) return cmd_compare(compare, out, err);
    if (*predict_cmd) return cmd_predict(predict, out, err);
    if (*simulate_cmd) return cmd_simulate(simulate, out, err);
    return cmd_curves(curves, *curves_cmd, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace qmatch::cli
