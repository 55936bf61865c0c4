#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace co2hm {

struct KMeansResult {
  std::vector<int> medoids;     // sample index per cluster
  std::vector<int> assignment;  // cluster per sample
  int iterations = 0;
};

/// k-means (k-means++ seeding, at most max_iter Lloyd steps) on the rows of
/// features, then per cluster the member with the smallest summed Euclidean
/// distance to the other members.
KMeansResult kmeans_medoids(const Eigen::MatrixXd& features, int k = 5, std::uint64_t seed = 7,
                            int max_iter = 100);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<long> counts;
  long outside = 0;           // samples beyond the range
  std::optional<double> truth;
  double lower() const { return edges.front(); }
  double upper() const { return edges.back(); }
};

/// Counts over uniform bins spanning [lower, upper]; the last bin is closed.
Histogram histogram_summary(const std::vector<double>& samples, int bins, double lower, double upper,
                            std::optional<double> truth = std::nullopt);

struct BandSeries {
  std::vector<double> times_yr;
  Eigen::VectorXd p10, p50, p90;
};

/// ensemble: n_members x n_times.
BandSeries band_series(const Eigen::MatrixXd& ensemble, const std::vector<double>& times_yr);

}  // namespace co2hm
