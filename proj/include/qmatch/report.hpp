#pragma once

// JSON serialization of fit reports. Keys keep insertion order and every
// floating-point value is written with 17 significant digits, so a report
// survives parse/serialize unchanged. Non-finite values are written as null.
//
// Schema (qmatch.fit_report/1):
//   model        {family, likelihood, sigma_noise}
//   observation  {n_total, scale_divisor, q[], x[]}      x in fitting units
//   sampler      {chains, warmup, samples_per_chain, seed, target_acceptance,
//                 initial_step_scale, adaptation, acceptance_rate}
//   parameters   [{name, mean, sd, q05, q50, q95, r_hat, ess}]
//   score        {mean, to_q05, to_q95}
//   predictive   [{p, mean, lower, upper}]               raw units
//   converged    bool (every R-hat < 1.05)
//   draws        {values[[...]], chain_id[], log_likelihood[],
//                 chains[{acceptance_rate, step_size}]}  optional

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qmatch/error.hpp"
#include "qmatch/predictive.hpp"

namespace qmatch {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kFitReportSchema = "qmatch.fit_report/1";
inline constexpr std::string_view kCompareReportSchema = "qmatch.compare_report/1";

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_or(const Json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}

inline void write_json(std::ostream& out, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out << ",\n";
        first = false;
        out << pad << Json(key).dump() << ": ";
        write_json(out, value, indent, depth + 1);
      }
      out << '\n' << close_pad << '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool scalars = true;
      for (const auto& v : j) scalars = scalars && !v.is_structured();
      out << '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out << (scalars ? ", " : ",");
        first = false;
        if (!scalars) out << '\n' << pad;
        write_json(out, v, indent, depth + 1);
      }
      if (!scalars) out << '\n' << close_pad;
      out << ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out << "null";
        return;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
      return;
    }
    default:
      out << j.dump();
  }
}

}  // namespace detail

/// Pretty-printed JSON with 17-significant-digit floats and a trailing newline.
inline std::string to_json_text(const Json& j) {
  std::ostringstream out;
  detail::write_json(out, j, 2, 0);
  out << '\n';
  return out.str();
}

inline Json observation_to_json(const FitReport& r) {
  Json obs;
  obs["n_total"] = r.n_total;
  obs["scale_divisor"] = r.scale_divisor;
  obs["q"] = r.q;
  obs["x"] = r.x;
  return obs;
}

inline Json to_json(const FitReport& r) {
  Json j;
  j["schema"] = kFitReportSchema;
  j["model"] = {{"family", family_name(r.family)},
                {"likelihood", likelihood_name(r.likelihood)},
                {"sigma_noise", r.sigma_noise}};
  j["observation"] = observation_to_json(r);
  j["sampler"] = {
      {"chains", r.sampler.chains},
      {"warmup", r.sampler.warmup},
      {"samples_per_chain", r.sampler.samples_per_chain},
      {"seed", r.sampler.seed},
      {"target_acceptance", r.sampler.target_acceptance},
      {"initial_step_scale", r.sampler.initial_step_scale},
      {"adaptation", r.sampler.adaptation == ProposalAdaptation::dense ? "dense" : "diagonal"},
      {"acceptance_rate", r.acceptance_rate}};
  Json params = Json::array();
  for (const auto& p : r.parameters) {
    params.push_back({{"name", p.name},
                      {"mean", p.mean},
                      {"sd", p.sd},
                      {"q05", p.q05},
                      {"q50", p.q50},
                      {"q95", p.q95},
                      {"r_hat", p.r_hat ? detail::number_or_null(*p.r_hat) : Json(nullptr)},
                      {"ess", p.ess}});
  }
  j["parameters"] = std::move(params);
  j["score"] = {{"mean", detail::number_or_null(r.score.mean)},
                {"to_q05", detail::number_or_null(r.score.to_q05)},
                {"to_q95", detail::number_or_null(r.score.to_q95)}};
  Json predictive = Json::array();
  for (const auto& p : r.predictive) {
    predictive.push_back(
        {{"p", p.p}, {"mean", p.value.mean}, {"lower", p.value.lower}, {"upper", p.value.upper}});
  }
  j["predictive"] = std::move(predictive);
  j["converged"] = r.converged();
  if (r.draws) {
    const auto& d = *r.draws;
    Json values = Json::array();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto row = d.draw(i);
      values.push_back(Json(std::vector<double>(row.begin(), row.end())));
    }
    Json loglik = Json::array();
    for (double v : d.log_likelihood) loglik.push_back(detail::number_or_null(v));
    Json chains = Json::array();
    for (const auto& c : d.chains) {
      chains.push_back({{"acceptance_rate", c.acceptance_rate}, {"step_size", c.step_size}});
    }
    j["draws"] = {{"values", std::move(values)},
                  {"chain_id", d.chain_id},
                  {"log_likelihood", std::move(loglik)},
                  {"chains", std::move(chains)}};
  }
  return j;
}

inline FitReport fit_report_from_json(const Json& j) {
  try {
    if (j.at("schema").get<std::string>() != kFitReportSchema) {
      throw InputError("report: unsupported schema '" + j.at("schema").get<std::string>() + "'");
    }
    FitReport r;
    const auto& model = j.at("model");
    const auto family = parse_family(model.at("family").get<std::string>());
    if (!family) throw InputError("report: unknown family");
    r.family = *family;
    const auto likelihood = model.at("likelihood").get<std::string>();
    if (likelihood == "order_statistics") {
      r.likelihood = LikelihoodKind::order_statistics;
    } else if (likelihood == "gaussian_noise") {
      r.likelihood = LikelihoodKind::gaussian_noise;
    } else {
      throw InputError("report: unknown likelihood '" + likelihood + "'");
    }
    r.sigma_noise = model.at("sigma_noise").get<double>();

    const auto& obs = j.at("observation");
    r.n_total = obs.at("n_total").get<std::uint64_t>();
    r.scale_divisor = obs.at("scale_divisor").get<double>();
    r.q = obs.at("q").get<std::vector<double>>();
    r.x = obs.at("x").get<std::vector<double>>();

    const auto& s = j.at("sampler");
    r.sampler.chains = s.at("chains").get<std::size_t>();
    r.sampler.warmup = s.at("warmup").get<std::size_t>();
    r.sampler.samples_per_chain = s.at("samples_per_chain").get<std::size_t>();
    r.sampler.seed = s.at("seed").get<std::uint64_t>();
    r.sampler.target_acceptance = s.at("target_acceptance").get<double>();
    r.sampler.initial_step_scale = s.at("initial_step_scale").get<double>();
    r.sampler.adaptation = s.at("adaptation").get<std::string>() == "diagonal"
                               ? ProposalAdaptation::diagonal
                               : ProposalAdaptation::dense;
    r.acceptance_rate = s.at("acceptance_rate").get<double>();

    for (const auto& p : j.at("parameters")) {
      ParameterSummary ps;
      ps.name = p.at("name").get<std::string>();
      ps.mean = p.at("mean").get<double>();
      ps.sd = p.at("sd").get<double>();
      ps.q05 = p.at("q05").get<double>();
      ps.q50 = p.at("q50").get<double>();
      ps.q95 = p.at("q95").get<double>();
      if (!p.at("r_hat").is_null()) ps.r_hat = p.at("r_hat").get<double>();
      ps.ess = p.at("ess").get<double>();
      r.parameters.push_back(std::move(ps));
    }
    const auto& score = j.at("score");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    r.score = {detail::number_or(score.at("mean"), kNegInf),
               detail::number_or(score.at("to_q05"), 0.0),
               detail::number_or(score.at("to_q95"), 0.0)};
    for (const auto& p : j.at("predictive")) {
      r.predictive.push_back({p.at("p").get<double>(),
                              {p.at("mean").get<double>(), p.at("lower").get<double>(),
                               p.at("upper").get<double>()}});
    }
    if (j.contains("draws")) {
      const auto& d = j.at("draws");
      PosteriorDraws pd;
      pd.family = r.family;
      pd.n_params = family_spec(r.family).arity;
      pd.seed = r.sampler.seed;
      pd.warmup = r.sampler.warmup;
      for (const auto& row : d.at("values")) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() != pd.n_params) throw InputError("report: draw has wrong parameter count");
        pd.values.insert(pd.values.end(), v.begin(), v.end());
      }
      pd.chain_id = d.at("chain_id").get<std::vector<std::size_t>>();
      for (const auto& v : d.at("log_likelihood")) pd.log_likelihood.push_back(
          detail::number_or(v, kNegInf));
      for (const auto& c : d.at("chains")) {
        pd.chains.push_back({c.at("acceptance_rate").get<double>(), c.at("step_size").get<double>()});
      }
      if (pd.chain_id.size() * pd.n_params != pd.values.size() ||
          pd.log_likelihood.size() != pd.chain_id.size()) {
        throw InputError("report: draws arrays have inconsistent lengths");
      }
      r.draws = std::move(pd);
    }
    return r;
  } catch (const Json::exception& e) {
    throw InputError(std::string("report: malformed JSON report: ") + e.what());
  }
}

inline std::string serialize_report(const FitReport& r) { return to_json_text(to_json(r)); }

inline FitReport parse_report(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw InputError(std::string("report: invalid JSON: ") + e.what());
  }
  return fit_report_from_json(j);
}

}  // namespace qmatch
