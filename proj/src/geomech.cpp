#include "co2hm/geomech.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace co2hm {

void ElasticProps::validate() const {
  if (!(E > 0)) throw DomainError("Young's modulus must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw DomainError("Poisson's ratio must lie in [0, 0.5)");
  if (!(K_g > 0)) throw DomainError("grain bulk modulus must be positive");
}

double bulk_modulus(double E, double nu) {
  if (nu >= 0.5) throw DomainError("Poisson's ratio >= 0.5: incompressible limit, bulk modulus undefined");
  return E / (3.0 * (1.0 - 2.0 * nu));
}

double shear_modulus(double E, double nu) { return E / (2.0 * (1.0 + nu)); }

double uniaxial_modulus(double E, double nu) {
  return bulk_modulus(E, nu) + 4.0 * shear_modulus(E, nu) / 3.0;
}

double biot_coefficient(double K, double K_g) {
  if (!(K_g > 0)) throw DomainError("grain bulk modulus must be positive");
  if (K < 0) throw DomainError("bulk modulus must be non-negative");
  if (K > K_g) {
    std::ostringstream os;
    os << "bulk modulus " << K << " exceeds grain modulus " << K_g
       << ": negative Biot coefficient unsupported";
    throw DomainError(os.str());
  }
  return 1.0 - K / K_g;
}

double effective_compressibility(double phi_bar, double E, double nu, double b) {
  if (!(phi_bar > 0.0 && phi_bar < 1.0)) throw DomainError("mean porosity must lie in (0, 1)");
  if (!(E > 0)) throw DomainError("Young's modulus must be positive");
  return (1.0 - 2.0 * nu) / (phi_bar * E) *
         (b * b * (1.0 + nu) / (1.0 - nu) + 3.0 * (b - phi_bar) * (1.0 - b));
}

double poroelastic_porosity_slope(double phi0, double E, double nu, double K_g) {
  const double b = biot_coefficient(bulk_modulus(E, nu), K_g);
  return b * b / uniaxial_modulus(E, nu) + (b - phi0) / K_g;
}

RegionCompressibilities effective_compressibilities(const Geomodel& m, double K_g) {
  auto for_props = [K_g](double phi, double E, double nu) {
    return effective_compressibility(phi, E, nu, biot_coefficient(bulk_modulus(E, nu), K_g));
  };
  double E_s = 0.0, nu_s = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < m.region.size(); ++c) {
    if (m.region[c] != Region::storage) continue;
    E_s += m.E[c];
    nu_s += m.nu[c];
    ++n;
  }
  if (n == 0) throw DomainError("geomodel has no storage cells");
  RegionCompressibilities out;
  out.storage = for_props(m.mean_storage_phi, E_s / n, nu_s / n);
  out.overburden = for_props(m.overburden.phi, m.overburden.E, m.overburden.nu);
  out.underburden = for_props(m.underburden.phi, m.underburden.E, m.underburden.nu);
  return out;
}

// Uplift ---------------------------------------------------------------------------

std::vector<SurfacePoint> regular_surface_points(int n_x, int n_y, double x0, double x1,
                                                 double y0, double y1) {
  if (n_x < 1 || n_y < 1) throw DomainError("surface layout needs at least one point per axis");
  std::vector<SurfacePoint> pts;
  pts.reserve(static_cast<std::size_t>(n_x) * n_y);
  for (int j = 0; j < n_y; ++j)
    for (int i = 0; i < n_x; ++i) {
      const double x = n_x == 1 ? 0.5 * (x0 + x1) : x0 + (x1 - x0) * i / (n_x - 1);
      const double y = n_y == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * j / (n_y - 1);
      pts.push_back({x, y});
    }
  return pts;
}

UpliftGeometry build_uplift_geometry(const GridSpec& grid, std::vector<SurfacePoint> points) {
  grid.validate();
  UpliftGeometry g;
  g.grid = grid;
  g.points = std::move(points);
  const int nc = grid.aquifer_cells();
  g.factors.resize(static_cast<Eigen::Index>(g.points.size()), nc);
  const double V = grid.cell_volume();
  for (std::size_t p = 0; p < g.points.size(); ++p) {
    const auto& pt = g.points[p];
    for (int k = 0; k < grid.nz; ++k) {
      const double D = grid.cell_center_depth(k);
      for (int j = 0; j < grid.ny; ++j) {
        const double ry = (j + 0.5) * grid.dy - pt.y;
        for (int i = 0; i < grid.nx; ++i) {
          const double rx = (i + 0.5) * grid.dx - pt.x;
          const double R2 = D * D + rx * rx + ry * ry;
          g.factors(static_cast<Eigen::Index>(p), grid.aquifer_index(i, j, k)) =
              V * D / (R2 * std::sqrt(R2));
        }
      }
    }
  }
  return g;
}

double uplift_coefficient(const ElasticProps& aquifer, const ElasticProps& overburden,
                          double* compaction, double* contrast) {
  aquifer.validate();
  overburden.validate();
  const double b_s = biot_coefficient(bulk_modulus(aquifer.E, aquifer.nu), aquifer.K_g);
  const double c_m = b_s / uniaxial_modulus(aquifer.E, aquifer.nu);
  const double G_s = shear_modulus(aquifer.E, aquifer.nu);
  const double G_o = shear_modulus(overburden.E, overburden.nu);
  const double r = 2.0 * G_s / (G_s + G_o);
  if (compaction) *compaction = c_m;
  if (contrast) *contrast = r;
  return c_m * (1.0 - overburden.nu) * r / std::numbers::pi;
}

UpliftKernel build_uplift_kernel(const UpliftGeometry& geometry, const ElasticProps& aquifer,
                                 const ElasticProps& overburden) {
  UpliftKernel k;
  k.coefficient =
      uplift_coefficient(aquifer, overburden, &k.compaction_coefficient, &k.stiffness_contrast);
  k.weights = k.coefficient * geometry.factors;
  return k;
}

UpliftKernel build_uplift_kernel(const GridSpec& grid, const std::vector<SurfacePoint>& points,
                                 const ElasticProps& aquifer, const ElasticProps& overburden) {
  return build_uplift_kernel(build_uplift_geometry(grid, points), aquifer, overburden);
}

Eigen::MatrixXd surface_uplift(const UpliftKernel& kernel, const Eigen::MatrixXd& dp) {
  if (dp.rows() != kernel.n_cells()) {
    std::ostringstream os;
    os << "pressure change has " << dp.rows() << " cells but the kernel expects "
       << kernel.n_cells();
    throw DimensionError(os.str());
  }
  return (kernel.weights * dp).transpose();
}

}  // namespace co2hm
