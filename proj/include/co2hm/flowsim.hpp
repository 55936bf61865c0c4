#pragma once

#include <span>
#include <string>
#include <vector>

#include "co2hm/geomech.hpp"
#include "co2hm/geomodel.hpp"

namespace co2hm {

/// Constant-property immiscible CO2/brine description. Densities follow
/// rho = rho_ref exp(c (p - p_ref)).
struct FluidProps {
  double mu_w = 5e-4, mu_g = 5e-5;     // Pa s
  double rho_w = 1000.0, rho_g = 700.0;  // kg/m^3 at p_ref
  double c_w = 4e-10, c_g = 1e-8;      // 1/Pa
  double p_ref = 20e6;                 // Pa

  void validate() const;
};

struct RelPermParams {
  double S_wi = 0.22;
  double S_gr = 0.0;
  double n_w = 9.0;
  double n_g = 4.0;
  double krg_at_Swi = 0.95;
  double krw_endpoint = 1.0;

  void validate() const;
  /// (S_w - S_wi) / (1 - S_wi - S_gr) clipped to [0, 1].
  double effective_saturation(double S_w) const;
};

struct RelPerm {
  double krw = 0.0;
  double krg = 0.0;
};

RelPerm corey_relperm(double S_w, const RelPermParams& params);

enum class CapillaryExponent { negative_lambda, negative_inverse_lambda };

struct CapPressureParams {
  double lambda = 0.55;
  double P_e_ref = 1.0e4;  // Pa at (phi_ref, k_ref)
  double phi_ref = 0.2;
  double k_ref_md = 20.0;
  double se_floor = 1e-3;
  CapillaryExponent convention = CapillaryExponent::negative_lambda;

  void validate() const;
  double exponent() const {
    return convention == CapillaryExponent::negative_lambda ? lambda : 1.0 / lambda;
  }
};

/// Brooks-Corey curve with Leverett scaling of the entry pressure.
double capillary_pressure(double S_w, double phi, double k_md, const CapPressureParams& cap,
                          const RelPermParams& relperm = {});

enum class WellRole { injector, monitor };
enum class InjectedPhase { co2, water };

/// Vertical well at aquifer column (i, j).
struct WellSpec {
  std::string name;
  int i = 0, j = 0;
  std::vector<int> layers;
  double rate = 0.0;  // kg/s, total over the perforations
  WellRole role = WellRole::injector;
  InjectedPhase phase = InjectedPhase::co2;
};

enum class PorosityMode { flow_only, pseudo_coupled };

const char* to_string(PorosityMode m);
PorosityMode porosity_mode_from_string(const std::string& s);

struct SimConfig {
  std::vector<double> report_times_yr{1, 2, 4, 6, 9, 12, 16, 20, 25, 30};
  PorosityMode mode = PorosityMode::pseudo_coupled;
  int max_newton = 12;
  double newton_tol = 1e-7;          // max scaled residual (mass / pore-volume mass)
  double mass_balance_tol = 1e-11;   // step gas-mass defect relative to cumulative injection
  double dt_initial_yr = 0.05;
  double dt_max_yr = 1.0;
  double dt_growth = 2.0;
  double ds_target = 0.2;    // saturation change per step driving dt growth
  double dp_target = 5e6;    // Pa
  double max_ds_iter = 0.2;  // Newton saturation chop
  int max_cuts = 10;
  double grain_bulk_modulus = kGrainBulkModulus;

  void validate() const;
};

struct FlowProperties {
  FluidProps fluids;
  RelPermParams relperm;
  CapPressureParams capillary;
};

struct SimStats {
  int steps = 0;
  int newton_iterations = 0;
  int cuts = 0;
  double wall_seconds = 0.0;
};

struct SimResult {
  GridSpec grid;
  std::vector<double> times_yr;
  std::vector<std::vector<double>> p;  // per report step, per simulation cell (Pa)
  std::vector<std::vector<double>> S;  // CO2 saturation
  std::vector<double> p_initial;
  std::vector<double> injected_mass;   // cumulative CO2 injected at each report step (kg)
  std::vector<double> co2_in_place;    // CO2 mass in place at each report step (kg)
  bool converged = true;
  std::string failure;
  SimStats stats;

  int steps() const { return static_cast<int>(times_yr.size()); }
  /// |in-place change - injected| / injected at report step t.
  double mass_balance_error(int t) const;
};

/// Per-cell porosity-pressure slope dphi/dp for the chosen mode. flow_only uses
/// phi0 * c with the region effective compressibility; pseudo_coupled the
/// poroelastic uniaxial-strain update.
std::vector<double> porosity_slopes(const Geomodel& m, PorosityMode mode,
                                    double K_g = kGrainBulkModulus);

/// Hydrostatic initial pressure anchored at p_anchor in the aquifer mid-layer,
/// discretely in equilibrium with the two-point gravity term.
std::vector<double> hydrostatic_pressure(const GridSpec& grid, const FluidProps& fluids,
                                         double p_anchor = 20e6);

SimResult simulate(const Geomodel& m, const FlowProperties& props,
                   const std::vector<WellSpec>& wells, const SimConfig& config);

/// Variant with caller-supplied porosity slopes (config.mode is then ignored).
SimResult simulate(const Geomodel& m, const FlowProperties& props,
                   const std::vector<WellSpec>& wells, const SimConfig& config,
                   std::span<const double> dphi_dp);

}  // namespace co2hm
