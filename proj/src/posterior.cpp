#include "co2hm/posterior.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "co2hm/common.hpp"
#include "co2hm/forward.hpp"

namespace co2hm {

KMeansResult kmeans_medoids(const Eigen::MatrixXd& X, int k, std::uint64_t seed, int max_iter) {
  const int n = static_cast<int>(X.rows());
  if (k < 1) throw DomainError("k must be at least 1");
  if (k > n) throw DomainError("k exceeds the number of samples");
  if (!X.allFinite()) throw DomainError("non-finite clustering features");

  Rng rng(seed);
  Eigen::MatrixXd C(k, X.cols());
  {
    std::uniform_int_distribution<int> first(0, n - 1);
    C.row(0) = X.row(first(rng));
    Eigen::VectorXd d2 = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      int pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          r -= d2[i];
          if (r < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = c;  // all points coincide with chosen centres
      }
      C.row(c) = X.row(pick);
      d2 = d2.cwiseMin((X.rowwise() - C.row(c)).rowwise().squaredNorm());
    }
  }

  KMeansResult out;
  out.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (X.row(i) - C.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (out.assignment[static_cast<std::size_t>(i)] != best) {
        out.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    out.iterations = it + 1;
    if (!changed && it > 0) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, X.cols());
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sum.row(out.assignment[static_cast<std::size_t>(i)]) += X.row(i);
      ++count[static_cast<std::size_t>(out.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) {
        C.row(c) = sum.row(c) / count[static_cast<std::size_t>(c)];
        continue;
      }
      // empty cluster: move it to the point farthest from its centre
      int far = 0;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = (X.row(i) - C.row(out.assignment[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      C.row(c) = X.row(far);
      out.assignment[static_cast<std::size_t>(far)] = c;
    }
  }

  out.medoids.assign(static_cast<std::size_t>(k), -1);
  for (int c = 0; c < k; ++c) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (out.assignment[static_cast<std::size_t>(i)] == c) members.push_back(i);
    double best = std::numeric_limits<double>::infinity();
    for (int a : members) {
      double s = 0.0;
      for (int b : members) s += (X.row(a) - X.row(b)).norm();
      if (s < best) {
        best = s;
        out.medoids[static_cast<std::size_t>(c)] = a;
      }
    }
  }
  return out;
}

Histogram histogram_summary(const std::vector<double>& samples, int bins, double lower, double upper,
                            std::optional<double> truth) {
  if (bins < 1) throw DomainError("bins must be at least 1");
  if (!(upper > lower)) throw DomainError("histogram range is empty");
  Histogram h;
  h.truth = truth;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lower + (upper - lower) * b / bins;
  h.edges.back() = upper;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double x : samples) {
    if (!(x >= lower && x <= upper)) {
      ++h.outside;
      continue;
    }
    int b = static_cast<int>(std::floor((x - lower) / (upper - lower) * bins));
    b = std::min(b, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

BandSeries band_series(const Eigen::MatrixXd& ensemble, const std::vector<double>& times_yr) {
  if (ensemble.rows() == 0) throw DomainError("band series needs a nonempty ensemble");
  if (static_cast<std::size_t>(ensemble.cols()) != times_yr.size())
    throw DimensionError("ensemble columns do not match the time axis");
  const Eigen::MatrixXd q = ensemble_percentiles(ensemble, {0.1, 0.5, 0.9});
  return {times_yr, q.row(0).transpose(), q.row(1).transpose(), q.row(2).transpose()};
}

}  // namespace co2hm
