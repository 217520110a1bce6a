#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace qmatch {

struct NelderMeadOptions {
  double initial_step = 0.5;
  // Converged once every vertex lies within this distance of the best one.
  double diameter_tolerance = 1e-8;
  std::size_t max_evaluations = 20000;
  // Re-seed a fresh simplex at the optimum this many times to escape a
  // prematurely collapsed simplex.
  std::size_t restarts = 2;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  bool converged = false;
};

// Minimizes objective from start. Non-finite objective values are treated as
// +infinity so the simplex retreats from invalid regions.
inline NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                                    std::span<const double> start,
                                    const NelderMeadOptions& options = {}) {
  const std::size_t dim = start.size();
  NelderMeadResult result;
  auto eval = [&](const std::vector<double>& p) {
    ++result.evaluations;
    const double v = objective(p);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<double> best(start.begin(), start.end());
  double best_value = eval(best);

  for (std::size_t round = 0; round <= options.restarts; ++round) {
    std::vector<std::vector<double>> simplex(dim + 1, best);
    std::vector<double> values(dim + 1, best_value);
    for (std::size_t i = 0; i < dim; ++i) {
      simplex[i + 1][i] += options.initial_step;
      values[i + 1] = eval(simplex[i + 1]);
    }

    std::vector<std::size_t> order(dim + 1);
    std::vector<double> centroid(dim);
    auto point_along = [&](const std::vector<double>& from, double t) {
      // centroid + t * (centroid - from)
      std::vector<double> p(dim);
      for (std::size_t j = 0; j < dim; ++j) p[j] = centroid[j] + t * (centroid[j] - from[j]);
      return p;
    };

    bool converged = false;
    while (result.evaluations < options.max_evaluations) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      const std::size_t lo = order.front();
      const std::size_t hi = order.back();
      const std::size_t second = order[dim > 0 ? dim - 1 : 0];

      double diameter = 0.0;
      for (std::size_t i = 0; i <= dim; ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double d = simplex[i][j] - simplex[lo][j];
          d2 += d * d;
        }
        diameter = std::max(diameter, std::sqrt(d2));
      }
      if (diameter < options.diameter_tolerance && std::isfinite(values[lo])) {
        converged = true;
        break;
      }

      std::fill(centroid.begin(), centroid.end(), 0.0);
      for (std::size_t i = 0; i <= dim; ++i) {
        if (i == hi) continue;
        for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[i][j] / dim;
      }

      const auto reflected = point_along(simplex[hi], 1.0);
      const double f_reflected = eval(reflected);
      if (f_reflected < values[lo]) {
        const auto expanded = point_along(simplex[hi], 2.0);
        const double f_expanded = eval(expanded);
        if (f_expanded < f_reflected) {
          simplex[hi] = expanded;
          values[hi] = f_expanded;
        } else {
          simplex[hi] = reflected;
          values[hi] = f_reflected;
        }
      } else if (f_reflected < values[second]) {
        simplex[hi] = reflected;
        values[hi] = f_reflected;
      } else {
        const bool outside = f_reflected < values[hi];
        const auto contracted = point_along(simplex[hi], outside ? 0.5 : -0.5);
        const double f_contracted = eval(contracted);
        if (f_contracted < (outside ? f_reflected : values[hi])) {
          simplex[hi] = contracted;
          values[hi] = f_contracted;
        } else {
          for (std::size_t i = 0; i <= dim; ++i) {
            if (i == lo) continue;
            for (std::size_t j = 0; j < dim; ++j) {
              simplex[i][j] = simplex[lo][j] + 0.5 * (simplex[i][j] - simplex[lo][j]);
            }
            values[i] = eval(simplex[i]);
          }
        }
      }
    }

    const auto lo_it = std::min_element(values.begin(), values.end());
    const std::size_t lo = static_cast<std::size_t>(lo_it - values.begin());
    if (*lo_it <= best_value) {
      best = simplex[lo];
      best_value = *lo_it;
    }
    result.converged = converged;
    if (!converged) break;
  }

  result.x = std::move(best);
  result.value = best_value;
  return result;
}

}  // namespace qmatch
