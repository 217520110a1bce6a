#pragma once

// CSV quantile datasets.
//
//   # meta: N=12918 scale_divisor=7500
//   q,x
//   0.25,4930
//   0.5,7500
//   0.75,11000
//
// x holds raw values. When a scale divisor is present the observation used for
// fitting is x / scale_divisor, and the divisor is carried along so
// predictions can be reported in raw units again.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qmatch/error.hpp"
#include "qmatch/order_statistics.hpp"

namespace qmatch {

struct DatasetFile {
  std::vector<double> q;
  std::vector<double> x;
  std::optional<std::uint64_t> n_total;
  std::optional<double> scale_divisor;

  // Observation in fitting units. Flag values override the meta line.
  QuantileObservation observation(std::optional<std::uint64_t> n_override = std::nullopt,
                                  std::optional<double> divisor_override = std::nullopt) const {
    const auto n = n_override ? n_override : n_total;
    if (!n) throw InputError("dataset: sample size N missing (add '# meta: N=...' or pass --n)");
    const double divisor = divisor_override.value_or(scale_divisor.value_or(1.0));
    if (!(divisor > 0.0) || !std::isfinite(divisor)) {
      throw InputError("dataset: scale divisor must be positive");
    }
    std::vector<double> scaled = x;
    for (double& v : scaled) v /= divisor;
    return {q, std::move(scaled), *n, divisor};
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<std::uint64_t> parse_count(std::string_view s) {
  s = trim(s);
  std::uint64_t value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parses dataset text. `source` prefixes error messages (usually the path).
inline DatasetFile parse_dataset(std::istream& in, const std::string& source = "<input>") {
  DatasetFile out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto fail = [&](const std::string& msg) -> InputError {
    return InputError(source + ":" + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      auto body = detail::trim(text.substr(1));
      if (body.rfind("meta:", 0) != 0) continue;
      std::istringstream fields{std::string(body.substr(5))};
      std::string field;
      while (fields >> field) {
        if (!field.empty() && field.back() == ',') field.pop_back();
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw fail("malformed meta field '" + field + "'");
        const auto key = std::string_view(field).substr(0, eq);
        const auto value = std::string_view(field).substr(eq + 1);
        if (key == "N") {
          const auto n = detail::parse_count(value);
          if (!n || *n < 1) throw fail("meta N must be a positive integer");
          out.n_total = n;
        } else if (key == "scale_divisor") {
          const auto d = detail::parse_double(value);
          if (!d || !(*d > 0.0)) throw fail("meta scale_divisor must be a positive number");
          out.scale_divisor = d;
        } else {
          throw fail("unknown meta key '" + std::string(key) + "'");
        }
      }
      continue;
    }
    if (!header_seen) {
      std::string header(text);
      header.erase(std::remove(header.begin(), header.end(), ' '), header.end());
      if (header != "q,x") throw fail("expected header 'q,x', got '" + std::string(text) + "'");
      header_seen = true;
      continue;
    }
    const auto comma = text.find(',');
    if (comma == std::string_view::npos || text.find(',', comma + 1) != std::string_view::npos) {
      throw fail("expected two comma-separated columns");
    }
    const auto q = detail::parse_double(text.substr(0, comma));
    const auto x = detail::parse_double(text.substr(comma + 1));
    if (!q) throw fail("q is not a number");
    if (!x) throw fail("x is not a finite number");
    if (!(*q > 0.0 && *q < 1.0)) throw fail("q must lie strictly between 0 and 1");
    if (!out.q.empty() && !(*q > out.q.back())) throw fail("q must be strictly increasing");
    if (!out.x.empty() && !(*x > out.x.back())) throw fail("x must be strictly increasing");
    out.q.push_back(*q);
    out.x.push_back(*x);
  }
  if (!header_seen) throw InputError(source + ": missing 'q,x' header");
  if (out.q.empty()) throw InputError(source + ": no data rows");
  return out;
}

inline DatasetFile read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  return parse_dataset(in, path);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dataset(std::ostream& out, const DatasetFile& data) {
  out << "# meta:";
  if (data.n_total) out << " N=" << *data.n_total;
  if (data.scale_divisor) out << " scale_divisor=" << format_double(*data.scale_divisor);
  out << "\nq,x\n";
  for (std::size_t m = 0; m < data.q.size(); ++m) {
    out << format_double(data.q[m]) << ',' << format_double(data.x[m]) << '\n';
  }
}

}  // namespace qmatch
