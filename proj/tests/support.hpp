#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "co2hm/geomodel.hpp"

namespace co2hm::testing {

inline GridSpec small_grid(int nx = 4, int ny = 4, int nz = 2) {
  GridSpec g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.dx = g.dy = 200.0;
  g.dz = 10.0;
  return g;
}

inline Geomodel homogeneous_model(const GridSpec& g, Metaparameters meta = {}) {
  const std::vector<double> y(static_cast<std::size_t>(g.aquifer_cells()), 0.0);
  return assemble_geomodel(meta, y, g);
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Asymptotic KS critical value at the 1% level.
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace co2hm::testing
