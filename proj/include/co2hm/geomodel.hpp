#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "co2hm/common.hpp"

namespace co2hm {

// Metaparameters ---------------------------------------------------------------

/// Scenario-level geological parameters. Moduli in Pa, mu_logk in ln(md).
struct Metaparameters {
  double mu_logk = 3.5;
  double sigma_logk = 1.75;
  double a_r = 0.1;
  double d = 0.03;
  double e = 0.07;
  double E_s = 12.5e9;
  double E_o = 32.5e9;

  static constexpr int size = 7;
  static const std::array<const char*, size>& names();

  /// Sampling coordinates: a_r is carried as log10(a_r).
  std::array<double, size> to_sampling() const;
  static Metaparameters from_sampling(const std::array<double, size>& v);

  bool operator==(const Metaparameters&) const = default;
};

/// Uniform prior box in sampling coordinates (log10 for a_r).
struct PriorBox {
  std::array<double, Metaparameters::size> lower{2.0, 1.0, -2.0, 0.02, 0.06, 5e9, 25e9};
  std::array<double, Metaparameters::size> upper{5.0, 2.5, 0.0, 0.04, 0.08, 20e9, 40e9};

  bool contains(const std::array<double, Metaparameters::size>& v) const;
  bool contains(const Metaparameters& m) const { return contains(m.to_sampling()); }
  std::array<double, Metaparameters::size> center() const;
  double range(int i) const { return upper[static_cast<std::size_t>(i)] - lower[static_cast<std::size_t>(i)]; }
  /// Throws DomainError naming the first violated bound.
  void validate(const Metaparameters& m) const;
};

Metaparameters sample_prior_metaparameters(std::uint64_t seed, const PriorBox& prior = {});

// Grids -------------------------------------------------------------------------

/// Storage-aquifer grid. The simulation grid adds one lateral ring of
/// surrounding-region cells of width ring_width whose pore volume is scaled
/// by boundary_pv_multiplier.
struct GridSpec {
  int nx = 32, ny = 32, nz = 8;
  double dx = 375.0, dy = 375.0, dz = 12.5;
  double depth_top = 1900.0;
  double boundary_pv_multiplier = 100.0;
  double ring_width = 0.0;  // m; 0 means the aquifer cell size

  void validate() const;

  int aquifer_cells() const { return nx * ny * nz; }
  // simulation grid (aquifer + ring)
  int sim_nx() const { return nx + 2; }
  int sim_ny() const { return ny + 2; }
  int sim_cells() const { return sim_nx() * sim_ny() * nz; }
  /// Simulation-grid index of simulation coordinates (i, j, k), k from the top.
  int sim_index(int i, int j, int k) const { return i + sim_nx() * (j + sim_ny() * k); }
  /// Simulation-grid index of aquifer coordinates.
  int sim_index_of_aquifer(int ia, int ja, int k) const { return sim_index(ia + 1, ja + 1, k); }
  int aquifer_index(int ia, int ja, int k) const { return ia + nx * (ja + ny * k); }
  double cell_volume() const { return dx * dy * dz; }
  /// Widths of simulation-grid column i / row j (ring cells use ring_width).
  double sim_width_x(int i) const { return (i == 0 || i == nx + 1) && ring_width > 0 ? ring_width : dx; }
  double sim_width_y(int j) const { return (j == 0 || j == ny + 1) && ring_width > 0 ? ring_width : dy; }
  double thickness() const { return nz * dz; }
  double cell_center_depth(int k) const { return depth_top + (k + 0.5) * dz; }
  bool operator==(const GridSpec&) const = default;
};

GridSpec default_fine_grid();
GridSpec default_coarse_grid();

// Gaussian random fields ----------------------------------------------------------

/// Correlation lengths in cells (horizontal, horizontal, vertical).
struct CorrelationLengths {
  double lx = 12.0, ly = 12.0, lz = 3.0;
};

/// Exponential covariance exp(-3 h) with h the anisotropic lag normalized by
/// the correlation lengths (practical-range convention).
double exponential_covariance(double hx, double hy, double hz, const CorrelationLengths& corr);

/// Exact sampler for a stationary Gaussian field with exponential covariance
/// on a regular nx*ny*nz grid. Uses circulant embedding (FFT); falls back to a
/// dense Cholesky factor when the embedding is not positive semidefinite and
/// the grid has fewer than 10^4 cells.
class GaussianFieldSampler {
 public:
  GaussianFieldSampler(int nx, int ny, int nz, CorrelationLengths corr);
  ~GaussianFieldSampler();
  GaussianFieldSampler(GaussianFieldSampler&&) noexcept;
  GaussianFieldSampler& operator=(GaussianFieldSampler&&) noexcept;

  /// One standard-normal field, x fastest then y then z.
  Eigen::VectorXd sample(std::uint64_t seed) const;
  bool uses_circulant_embedding() const;
  int size() const { return nx_ * ny_ * nz_; }

 private:
  struct Impl;
  int nx_, ny_, nz_;
  std::unique_ptr<Impl> impl_;
};

Eigen::VectorXd sample_gaussian_field(const GridSpec& grid, const CorrelationLengths& corr,
                                      std::uint64_t seed);

// PCA parameterization ------------------------------------------------------------

struct PcaBasis {
  Eigen::MatrixXd basis;      // n_s x n_d, orthogonal columns scaled by sigma/sqrt(n_r-1)
  Eigen::VectorXd mean_field; // n_s
  Eigen::VectorXd singular_values;

  int n_s() const { return static_cast<int>(basis.rows()); }
  int n_d() const { return static_cast<int>(basis.cols()); }
};

struct LatentVector {
  Eigen::VectorXd xi;
  int size() const { return static_cast<int>(xi.size()); }
};

/// realizations: n_s x n_r, one realization per column.
PcaBasis build_pca_basis(const Eigen::MatrixXd& realizations, int n_d);

Eigen::VectorXd generate_pca_realization(const PcaBasis& pca, const LatentVector& xi);

// Geomodel --------------------------------------------------------------------

enum class Region : std::uint8_t { storage = 0, surrounding = 1, overburden = 2, underburden = 3 };

struct RockProps {
  double k_md;
  double phi;
  double E;
  double nu;
  bool operator==(const RockProps&) const = default;
};

/// Fixed (non-uncertain) rock properties.
struct FixedRockTable {
  double nu_storage = 0.165;
  RockProps overburden{0.001, 0.08, 0.0, 0.27};   // E set from E_o
  RockProps underburden{2.3, 0.09, 0.0, 0.27};
  double overburden_thickness = 1905.0;
  double underburden_thickness = 500.0;
  double phi_min = 0.01;
  double phi_max = 0.45;
};

/// Properties on the simulation grid (aquifer plus lateral ring). Overburden
/// and underburden are region-constant and carried as scalar records.
struct Geomodel {
  GridSpec grid;
  std::vector<double> kx, ky, kz;  // md
  std::vector<double> phi;
  std::vector<double> E;           // Pa
  std::vector<double> nu;
  std::vector<Region> region;
  RockProps overburden{};
  RockProps underburden{};
  double mean_storage_phi = 0.0;

  int cells() const { return static_cast<int>(phi.size()); }
  bool operator==(const Geomodel&) const = default;
};

Geomodel assemble_geomodel(const Metaparameters& meta, std::span<const double> y_pca,
                           const GridSpec& grid, const PriorBox& prior = {},
                           const FixedRockTable& fixed = {});

/// Natural-log permeability of the storage aquifer (aquifer ordering).
Eigen::VectorXd storage_log_permeability(const Metaparameters& meta, std::span<const double> y_pca);

/// Block permeability averaging: plain geometric mean per axis, or the
/// geometric mean of the arithmetic-harmonic flow bounds along each axis.
enum class PermeabilityAveraging { geometric, flow_bounds };

const char* to_string(PermeabilityAveraging a);
PermeabilityAveraging permeability_averaging_from_string(const std::string& s);

/// Restricts a fine geomodel to a coarser grid covering the same aquifer
/// extent. Porosity and moduli are averaged arithmetically. The coarse
/// dimensions must divide the fine ones.
Geomodel restrict_geomodel(const Geomodel& fine, const GridSpec& coarse,
                           PermeabilityAveraging averaging = PermeabilityAveraging::geometric);

}  // namespace co2hm
