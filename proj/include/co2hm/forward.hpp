#pragma once

#include <Eigen/Dense>

#include <vector>

#include "co2hm/flowsim.hpp"
#include "co2hm/geomech.hpp"
#include "co2hm/geomodel.hpp"

namespace co2hm {

// Observation layout --------------------------------------------------------------

/// Vertical monitoring well at fine aquifer column (i, j).
struct MonitoringWell {
  int i = 0, j = 0;
  std::vector<int> layers;
};

/// Measurement ordering: saturation block, pressure block, uplift block. Each
/// block is time-major; within a time, saturation is well-major then layer.
struct ObservationLayout {
  std::vector<MonitoringWell> saturation_wells;
  MonitoringWell pressure_well;
  std::vector<SurfacePoint> surface_points;
  std::vector<double> history_times_yr{1, 2, 4, 6, 9};
  std::vector<double> prediction_times_yr{12, 16, 20, 25, 30};

  int n_saturation_points() const;
  int n_pressure_points() const { return static_cast<int>(pressure_well.layers.size()); }
  int n_surface_points() const { return static_cast<int>(surface_points.size()); }
  int n_history_times() const { return static_cast<int>(history_times_yr.size()); }
  int n_m() const;
  std::vector<double> all_times_yr() const;

  /// Throws DomainError for empty layouts or locations outside the grid.
  void validate(const GridSpec& fine) const;
};

/// Four saturation wells one cell off the injectors, a central pressure well
/// (all layers) and a 5x5 surface grid spanning the aquifer.
ObservationLayout default_observation_layout(const GridSpec& fine);

/// Four injectors near 0.3 and 0.7 of the aquifer extent in x and y, all layers.
std::vector<WellSpec> default_injectors(const GridSpec& fine, double rate_per_well = 1e9 / units::year);

/// Indices into the measurement vector that belong to the selected data types.
/// Subsurface covers the saturation and pressure blocks, surface the uplift block.
std::vector<int> data_selection(const ObservationLayout& layout, bool subsurface, bool surface);

/// Observables at the layout locations per report time (rows).
struct ObservableSeries {
  std::vector<double> times_yr;
  Eigen::MatrixXd saturation;  // n_times x n_saturation_points
  Eigen::MatrixXd pressure;    // Pa
  Eigen::MatrixXd uplift;      // m, positive up

  int n_times() const { return static_cast<int>(times_yr.size()); }
};

struct ForwardResponse {
  Eigen::VectorXd obs;  // length n_m, units fraction / Pa / m
};

/// Extracts the history-time measurements in the documented ordering.
ForwardResponse observe(const ObservableSeries& series, const ObservationLayout& layout);

/// Per-time values of one measurement location across report times, for
/// measurement block b (0 saturation, 1 pressure, 2 uplift) and column c.
Eigen::VectorXd observable_time_series(const ObservableSeries& series, int block, int column);

// Fields on the storage aquifer ----------------------------------------------------

/// Storage-aquifer saturation and pressure per report time (rows), aquifer ordering.
struct StorageFields {
  std::vector<double> times_yr;
  Eigen::MatrixXd S;
  Eigen::MatrixXd p;
};

StorageFields storage_fields(const SimResult& r);

/// Trilinear interpolation of coarse aquifer cell-centred values at the cell
/// centres of a fine grid with the same extent. Values beyond the outermost
/// coarse centres are held constant.
Eigen::VectorXd prolong_field(const GridSpec& coarse, std::span<const double> coarse_aquifer_values,
                              const GridSpec& fine);

// Forward models --------------------------------------------------------------------

struct ForwardSetup {
  GridSpec fine = default_fine_grid();
  GridSpec coarse = default_coarse_grid();
  FlowProperties props;
  /// Coarse-grid pseudo relative permeability: milder exponents compensate
  /// the smearing of the plume over large cells.
  RelPermParams fast_relperm{0.22, 0.0, 4.0, 3.0, 0.95, 1.0};
  PermeabilityAveraging upscaling = PermeabilityAveraging::flow_bounds;
  SimConfig hifi_config;  // mode forced to pseudo_coupled
  SimConfig fast_config;  // mode forced to flow_only
  std::vector<WellSpec> injectors;  // on the fine grid
  ObservationLayout layout;
  FixedRockTable fixed;
  double grain_bulk_modulus = kGrainBulkModulus;

  /// Desk defaults: default grids, injectors, layout and time-step controls.
  static ForwardSetup desk_defaults();
};

struct ForwardRun {
  SimResult sim;              // on the native grid of the fidelity
  Eigen::MatrixXd uplift;     // n_times x n_surface_points (m)
  ObservableSeries series;
  StorageFields fields;       // fine storage cells; filled when requested
  bool converged() const { return sim.converged; }
  double wall_seconds = 0.0;
};

enum class Horizon { history, full };

class ForwardModel {
 public:
  explicit ForwardModel(ForwardSetup setup);

  const ForwardSetup& setup() const { return setup_; }

  /// Fine-grid pseudo-coupled flow followed by the uplift kernel.
  ForwardRun run_high_fidelity(const Geomodel& fine, Horizon horizon = Horizon::full,
                               bool keep_fields = false) const;

  /// Coarse-grid flow-only run with region effective compressibilities; the
  /// fine geomodel is restricted internally and observables are mapped back
  /// to the fine observation locations.
  ForwardRun run_fast_model(const Geomodel& fine, Horizon horizon = Horizon::full,
                            bool keep_fields = false) const;

  /// Injectors mapped to the coarse grid.
  const std::vector<WellSpec>& coarse_injectors() const { return coarse_wells_; }
  const std::vector<double>& fine_initial_pressure() const { return p0_fine_; }

 private:
  std::vector<double> times_for(Horizon h) const;
  Eigen::MatrixXd uplift_for(const Geomodel& m, const UpliftGeometry& geometry,
                             const SimResult& r) const;

  ForwardSetup setup_;
  std::vector<WellSpec> coarse_wells_;
  UpliftGeometry fine_geometry_, coarse_geometry_;
  std::vector<double> p0_fine_;
};

// Error metrics ---------------------------------------------------------------------

struct FieldDifference {
  double eps_S = 0.0;
  double eps_p = 0.0;
};

inline constexpr double kSaturationGuard = 0.01;

/// Relative saturation and range-normalized pressure differences of A
/// against the reference B over storage cells and report times.
FieldDifference field_difference_metrics(const StorageFields& A, const StorageFields& B,
                                         double guard = kSaturationGuard);

/// Ensemble average of field_difference_metrics over matched pairs.
FieldDifference field_difference_metrics(const std::vector<StorageFields>& A,
                                         const std::vector<StorageFields>& B,
                                         double guard = kSaturationGuard);

struct RelativeErrors {
  std::vector<double> delta_S, delta_p, delta_d;  // per test case
  long excluded_uplift_points = 0;  // zero true uplift, left out of delta_d
};

/// Relative errors of approximate responses against reference ones, per
/// case: saturation and pressure over storage cells, uplift over surface
/// points, all averaged over the report times. Uplift points whose reference
/// magnitude is <= uplift_floor are excluded and counted.
RelativeErrors surrogate_relative_errors(const std::vector<StorageFields>& fast_fields,
                                         const std::vector<Eigen::MatrixXd>& fast_uplift,
                                         const std::vector<StorageFields>& hifi_fields,
                                         const std::vector<Eigen::MatrixXd>& hifi_uplift,
                                         double guard = kSaturationGuard,
                                         double uplift_floor = 0.0);

/// Per-time empirical quantiles (linear interpolation between order
/// statistics, h = (n - 1) q). ensemble: n_members x n_times. Returns
/// n_quantiles x n_times.
Eigen::MatrixXd ensemble_percentiles(const Eigen::MatrixXd& ensemble,
                                     const std::vector<double>& quantiles = {0.1, 0.25, 0.5, 0.75, 0.9});

/// Quantile of one sample with the same convention.
double empirical_quantile(std::vector<double> values, double q);

}  // namespace co2hm
