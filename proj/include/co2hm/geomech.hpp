#pragma once

#include <Eigen/Dense>

#include <vector>

#include "co2hm/geomodel.hpp"

namespace co2hm {

inline constexpr double kGrainBulkModulus = 37.0e9;  // Pa, quartz

struct ElasticProps {
  double E = 10e9;
  double nu = 0.165;
  double K_g = kGrainBulkModulus;

  void validate() const;
};

double bulk_modulus(double E, double nu);
double shear_modulus(double E, double nu);
/// Constrained (P-wave) modulus K + 4G/3.
double uniaxial_modulus(double E, double nu);
double biot_coefficient(double K, double K_g);

/// Pore compressibility that makes a flow-only porosity update reproduce the
/// uniaxial-strain poroelastic one: dphi/dp = phi_bar * c.
double effective_compressibility(double phi_bar, double E, double nu, double b);

/// Slope dphi/dp of the poroelastic porosity update under uniaxial strain,
/// b^2 / (K + 4G/3) + (b - phi0) / K_g.
double poroelastic_porosity_slope(double phi0, double E, double nu, double K_g);

struct RegionCompressibilities {
  double storage = 0.0;      // storage aquifer and surrounding region
  double overburden = 0.0;
  double underburden = 0.0;
};

RegionCompressibilities effective_compressibilities(const Geomodel& m, double K_g = kGrainBulkModulus);

// Surface uplift ------------------------------------------------------------------

struct SurfacePoint {
  double x = 0.0, y = 0.0;  // m, aquifer corner at the origin
};

/// n_x by n_y points evenly spaced over [x0, x1] x [y0, y1], x fastest.
std::vector<SurfacePoint> regular_surface_points(int n_x, int n_y, double x0, double x1,
                                                 double y0, double y1);

/// Pure geometry of the nucleus-of-strain kernel: V D / (D^2 + r^2)^(3/2) for
/// every (surface point, aquifer cell) pair. Independent of rock properties,
/// so it is built once per grid and reused.
struct UpliftGeometry {
  GridSpec grid;
  std::vector<SurfacePoint> points;
  Eigen::MatrixXd factors;  // n_points x n_aquifer_cells, 1/m (V D / R^3 has units m)
};

UpliftGeometry build_uplift_geometry(const GridSpec& grid, std::vector<SurfacePoint> points);

struct UpliftKernel {
  Eigen::MatrixXd weights;     // m / Pa, n_points x n_aquifer_cells
  double compaction_coefficient = 0.0;  // c_m = b_s / (K_s + 4 G_s / 3), 1/Pa
  double stiffness_contrast = 1.0;      // 2 G_s / (G_s + G_o)
  double coefficient = 0.0;             // c_m (1 - nu_o) contrast / pi
  int n_points() const { return static_cast<int>(weights.rows()); }
  int n_cells() const { return static_cast<int>(weights.cols()); }
};

/// Scalar prefactor c_m (1 - nu_o) (2 G_s / (G_s + G_o)) / pi. The stiffness
/// contrast is 1 for a homogeneous half-space (plain Geertsma solution).
double uplift_coefficient(const ElasticProps& aquifer, const ElasticProps& overburden,
                          double* compaction = nullptr, double* contrast = nullptr);

UpliftKernel build_uplift_kernel(const UpliftGeometry& geometry, const ElasticProps& aquifer,
                                 const ElasticProps& overburden);

UpliftKernel build_uplift_kernel(const GridSpec& grid, const std::vector<SurfacePoint>& points,
                                 const ElasticProps& aquifer, const ElasticProps& overburden);

/// u_z per report time (rows) and surface point (columns), uplift positive.
/// dp: n_aquifer_cells x n_times pressure change relative to the initial state.
Eigen::MatrixXd surface_uplift(const UpliftKernel& kernel, const Eigen::MatrixXd& dp);

}  // namespace co2hm
