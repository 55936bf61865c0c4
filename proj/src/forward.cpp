#include "co2hm/forward.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <sstream>

namespace co2hm {

// Layout ------------------------------------------------------------------------------

int ObservationLayout::n_saturation_points() const {
  int n = 0;
  for (const auto& w : saturation_wells) n += static_cast<int>(w.layers.size());
  return n;
}

int ObservationLayout::n_m() const {
  return n_history_times() * (n_saturation_points() + n_pressure_points() + n_surface_points());
}

std::vector<double> ObservationLayout::all_times_yr() const {
  std::vector<double> t = history_times_yr;
  t.insert(t.end(), prediction_times_yr.begin(), prediction_times_yr.end());
  return t;
}

void ObservationLayout::validate(const GridSpec& fine) const {
  if (history_times_yr.empty()) throw DomainError("observation layout has no history times");
  if (n_saturation_points() + n_pressure_points() + n_surface_points() == 0)
    throw DomainError("observation layout has no measurement locations");
  const auto all = all_times_yr();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!(all[i] > 0)) throw DomainError("observation times must be positive");
    if (i > 0 && !(all[i] > all[i - 1]))
      throw DomainError("history and prediction times must be strictly increasing");
  }
  auto check_well = [&](const MonitoringWell& w, const char* what) {
    if (w.i < 0 || w.i >= fine.nx || w.j < 0 || w.j >= fine.ny) {
      std::ostringstream os;
      os << what << " well at (" << w.i << ", " << w.j << ") lies outside the "
         << fine.nx << " x " << fine.ny << " aquifer";
      throw DomainError(os.str());
    }
    for (int l : w.layers)
      if (l < 0 || l >= fine.nz) {
        std::ostringstream os;
        os << what << " well layer " << l << " outside 0.." << fine.nz - 1;
        throw DomainError(os.str());
      }
  };
  for (const auto& w : saturation_wells) check_well(w, "saturation");
  if (!pressure_well.layers.empty()) check_well(pressure_well, "pressure");
  const double Lx = fine.nx * fine.dx, Ly = fine.ny * fine.dy;
  for (const auto& p : surface_points)
    if (p.x < 0 || p.x > Lx || p.y < 0 || p.y > Ly)
      throw DomainError("surface point lies outside the area above the aquifer");
}

namespace {

// injector column: the cell whose centre is nearest 0.3 of the extent
int injector_offset(int n) { return static_cast<int>(std::round(0.3 * n - 0.5)); }

}  // namespace

ObservationLayout default_observation_layout(const GridSpec& fine) {
  ObservationLayout l;
  std::vector<int> all_layers(static_cast<std::size_t>(fine.nz));
  for (int k = 0; k < fine.nz; ++k) all_layers[static_cast<std::size_t>(k)] = k;
  const int a = injector_offset(fine.nx), b = fine.nx - 1 - a;
  const int c = injector_offset(fine.ny), d = fine.ny - 1 - c;
  // one cell towards the aquifer centre in x from each injector
  l.saturation_wells = {{a + 1, c, all_layers}, {b - 1, c, all_layers},
                        {a + 1, d, all_layers}, {b - 1, d, all_layers}};
  l.pressure_well = {fine.nx / 2, fine.ny / 2, all_layers};
  l.surface_points = regular_surface_points(5, 5, 0.0, fine.nx * fine.dx, 0.0, fine.ny * fine.dy);
  return l;
}

std::vector<WellSpec> default_injectors(const GridSpec& fine, double rate_per_well) {
  std::vector<int> layers(static_cast<std::size_t>(fine.nz));
  for (int k = 0; k < fine.nz; ++k) layers[static_cast<std::size_t>(k)] = k;
  const int a = injector_offset(fine.nx), b = fine.nx - 1 - a;
  const int c = injector_offset(fine.ny), d = fine.ny - 1 - c;
  std::vector<WellSpec> w;
  int n = 1;
  for (auto [i, j] : {std::pair{a, c}, {b, c}, {a, d}, {b, d}})
    w.push_back({"I" + std::to_string(n++), i, j, layers, rate_per_well});
  return w;
}

std::vector<int> data_selection(const ObservationLayout& layout, bool subsurface, bool surface) {
  if (!subsurface && !surface) throw DomainError("data selection is empty");
  const int nt = layout.n_history_times();
  const int ns = layout.n_saturation_points(), np = layout.n_pressure_points();
  const int sub = nt * (ns + np);
  std::vector<int> idx;
  if (subsurface)
    for (int i = 0; i < sub; ++i) idx.push_back(i);
  if (surface)
    for (int i = sub; i < layout.n_m(); ++i) idx.push_back(i);
  return idx;
}

namespace {

int time_row(const ObservableSeries& s, double t) {
  for (int r = 0; r < s.n_times(); ++r)
    if (std::abs(s.times_yr[static_cast<std::size_t>(r)] - t) <= 1e-9 * t) return r;
  std::ostringstream os;
  os << "response has no report time " << t << " yr";
  throw DimensionError(os.str());
}

}  // namespace

ForwardResponse observe(const ObservableSeries& series, const ObservationLayout& layout) {
  const int ns = layout.n_saturation_points(), np = layout.n_pressure_points(),
            nd = layout.n_surface_points();
  if (ns + np + nd == 0) throw DomainError("observation layout has no measurement locations");
  if (series.saturation.cols() != ns || series.pressure.cols() != np || series.uplift.cols() != nd)
    throw DimensionError("observable series does not match the observation layout");
  ForwardResponse out;
  out.obs.resize(layout.n_m());
  Eigen::Index o = 0;
  std::vector<int> rows;
  for (double t : layout.history_times_yr) rows.push_back(time_row(series, t));
  for (int r : rows)
    for (int c = 0; c < ns; ++c) out.obs[o++] = series.saturation(r, c);
  for (int r : rows)
    for (int c = 0; c < np; ++c) out.obs[o++] = series.pressure(r, c);
  for (int r : rows)
    for (int c = 0; c < nd; ++c) out.obs[o++] = series.uplift(r, c);
  return out;
}

Eigen::VectorXd observable_time_series(const ObservableSeries& series, int block, int column) {
  const Eigen::MatrixXd* m = block == 0 ? &series.saturation
                             : block == 1 ? &series.pressure
                             : block == 2 ? &series.uplift
                                          : nullptr;
  if (!m) throw DomainError("measurement block must be 0, 1 or 2");
  if (column < 0 || column >= m->cols()) throw DimensionError("measurement column out of range");
  return m->col(column);
}

// Fields -------------------------------------------------------------------------------

StorageFields storage_fields(const SimResult& r) {
  const GridSpec& g = r.grid;
  StorageFields f;
  f.times_yr = r.times_yr;
  const int nt = r.steps(), nc = g.aquifer_cells();
  f.S.resize(nt, nc);
  f.p.resize(nt, nc);
  for (int t = 0; t < nt; ++t)
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          const auto s = static_cast<std::size_t>(g.sim_index_of_aquifer(i, j, k));
          const int a = g.aquifer_index(i, j, k);
          f.S(t, a) = r.S[static_cast<std::size_t>(t)][s];
          f.p(t, a) = r.p[static_cast<std::size_t>(t)][s];
        }
  return f;
}

namespace {

struct Axis {
  int i0 = 0, i1 = 0;
  double w = 0.0;  // weight of i1
};

Axis locate(double x, double h, int n) {
  const double f = x / h - 0.5;
  Axis a;
  if (f <= 0.0 || n == 1) return a;
  if (f >= n - 1) {
    a.i0 = a.i1 = n - 1;
    return a;
  }
  a.i0 = static_cast<int>(std::floor(f));
  a.i1 = a.i0 + 1;
  a.w = f - a.i0;
  return a;
}

/// Trilinear stencil of coarse aquifer indices and weights for a point.
struct Stencil {
  std::array<int, 8> idx{};
  std::array<double, 8> w{};
};

Stencil stencil_at(const GridSpec& c, double x, double y, double z) {
  const Axis ax = locate(x, c.dx, c.nx), ay = locate(y, c.dy, c.ny), az = locate(z, c.dz, c.nz);
  Stencil s;
  int n = 0;
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        s.idx[static_cast<std::size_t>(n)] =
            c.aquifer_index(di ? ax.i1 : ax.i0, dj ? ay.i1 : ay.i0, dk ? az.i1 : az.i0);
        s.w[static_cast<std::size_t>(n)] =
            (di ? ax.w : 1 - ax.w) * (dj ? ay.w : 1 - ay.w) * (dk ? az.w : 1 - az.w);
        ++n;
      }
  return s;
}

double interpolate(const Stencil& s, std::span<const double> v) {
  double out = 0.0;
  for (std::size_t n = 0; n < 8; ++n) out += s.w[n] * v[static_cast<std::size_t>(s.idx[n])];
  return out;
}

void check_same_extent(const GridSpec& coarse, const GridSpec& fine) {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(a, b); };
  if (!close(coarse.nx * coarse.dx, fine.nx * fine.dx) ||
      !close(coarse.ny * coarse.dy, fine.ny * fine.dy) ||
      !close(coarse.nz * coarse.dz, fine.nz * fine.dz))
    throw DimensionError("coarse and fine grids must cover the same aquifer extent");
}

}  // namespace

Eigen::VectorXd prolong_field(const GridSpec& coarse, std::span<const double> v, const GridSpec& fine) {
  if (static_cast<int>(v.size()) != coarse.aquifer_cells())
    throw DimensionError("coarse field does not match the coarse aquifer grid");
  check_same_extent(coarse, fine);
  Eigen::VectorXd out(fine.aquifer_cells());
  for (int k = 0; k < fine.nz; ++k)
    for (int j = 0; j < fine.ny; ++j)
      for (int i = 0; i < fine.nx; ++i) {
        const Stencil s =
            stencil_at(coarse, (i + 0.5) * fine.dx, (j + 0.5) * fine.dy, (k + 0.5) * fine.dz);
        out[fine.aquifer_index(i, j, k)] = interpolate(s, v);
      }
  return out;
}

// Forward models ---------------------------------------------------------------------------

ForwardSetup ForwardSetup::desk_defaults() {
  ForwardSetup s;
  s.injectors = default_injectors(s.fine);
  s.layout = default_observation_layout(s.fine);
  s.hifi_config.mode = PorosityMode::pseudo_coupled;
  s.fast_config.mode = PorosityMode::flow_only;
  s.fast_config.dt_initial_yr = 0.5;
  s.fast_config.dt_max_yr = 3.0;
  s.fast_config.ds_target = 0.5;
  return s;
}

ForwardModel::ForwardModel(ForwardSetup setup) : setup_(std::move(setup)) {
  setup_.fine.validate();
  setup_.coarse.validate();
  check_same_extent(setup_.coarse, setup_.fine);
  setup_.layout.validate(setup_.fine);
  setup_.hifi_config.mode = PorosityMode::pseudo_coupled;
  setup_.fast_config.mode = PorosityMode::flow_only;
  setup_.hifi_config.grain_bulk_modulus = setup_.grain_bulk_modulus;
  setup_.fast_config.grain_bulk_modulus = setup_.grain_bulk_modulus;
  if (setup_.injectors.empty()) setup_.injectors = default_injectors(setup_.fine);

  const GridSpec& f = setup_.fine;
  const GridSpec& c = setup_.coarse;
  for (const auto& w : setup_.injectors) {
    WellSpec cw = w;
    cw.i = static_cast<int>((w.i + 0.5) * f.dx / c.dx);
    cw.j = static_cast<int>((w.j + 0.5) * f.dy / c.dy);
    std::vector<int> layers;
    for (int l : w.layers) {
      const int lc = std::min(static_cast<int>((l + 0.5) * f.dz / c.dz), c.nz - 1);
      if (std::find(layers.begin(), layers.end(), lc) == layers.end()) layers.push_back(lc);
    }
    cw.layers = layers;
    coarse_wells_.push_back(cw);
  }
  fine_geometry_ = build_uplift_geometry(f, setup_.layout.surface_points);
  coarse_geometry_ = build_uplift_geometry(c, setup_.layout.surface_points);
  p0_fine_ = hydrostatic_pressure(f, setup_.props.fluids);
}

std::vector<double> ForwardModel::times_for(Horizon h) const {
  if (h == Horizon::history) return setup_.layout.history_times_yr;
  return setup_.layout.all_times_yr();
}

Eigen::MatrixXd ForwardModel::uplift_for(const Geomodel& m, const UpliftGeometry& geometry,
                                         const SimResult& r) const {
  const GridSpec& g = r.grid;
  double E_s = 0.0, nu_s = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < m.region.size(); ++c)
    if (m.region[c] == Region::storage) {
      E_s += m.E[c];
      nu_s += m.nu[c];
      ++n;
    }
  const ElasticProps aquifer{E_s / n, nu_s / n, setup_.grain_bulk_modulus};
  const ElasticProps overburden{m.overburden.E, m.overburden.nu, setup_.grain_bulk_modulus};
  const UpliftKernel kernel = build_uplift_kernel(geometry, aquifer, overburden);
  Eigen::MatrixXd dp(g.aquifer_cells(), r.steps());
  for (int t = 0; t < r.steps(); ++t)
    for (int k = 0; k < g.nz; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
          const auto s = static_cast<std::size_t>(g.sim_index_of_aquifer(i, j, k));
          dp(g.aquifer_index(i, j, k), t) = r.p[static_cast<std::size_t>(t)][s] - r.p_initial[s];
        }
  return surface_uplift(kernel, dp);
}

ForwardRun ForwardModel::run_high_fidelity(const Geomodel& m, Horizon horizon, bool keep_fields) const {
  if (!(m.grid == setup_.fine)) throw DimensionError("high-fidelity model needs a fine-grid geomodel");
  const auto t0 = std::chrono::steady_clock::now();
  SimConfig cfg = setup_.hifi_config;
  cfg.report_times_yr = times_for(horizon);
  ForwardRun run;
  run.sim = simulate(m, setup_.props, setup_.injectors, cfg);
  run.uplift = uplift_for(m, fine_geometry_, run.sim);

  const auto& layout = setup_.layout;
  const GridSpec& g = setup_.fine;
  const int nt = run.sim.steps();
  auto& s = run.series;
  s.times_yr = run.sim.times_yr;
  s.saturation.resize(nt, layout.n_saturation_points());
  s.pressure.resize(nt, layout.n_pressure_points());
  for (int t = 0; t < nt; ++t) {
    const auto& S = run.sim.S[static_cast<std::size_t>(t)];
    const auto& p = run.sim.p[static_cast<std::size_t>(t)];
    int c = 0;
    for (const auto& w : layout.saturation_wells)
      for (int l : w.layers) s.saturation(t, c++) = S[static_cast<std::size_t>(g.sim_index_of_aquifer(w.i, w.j, l))];
    c = 0;
    for (int l : layout.pressure_well.layers)
      s.pressure(t, c++) = p[static_cast<std::size_t>(
          g.sim_index_of_aquifer(layout.pressure_well.i, layout.pressure_well.j, l))];
  }
  s.uplift = run.uplift;
  if (keep_fields) run.fields = storage_fields(run.sim);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

ForwardRun ForwardModel::run_fast_model(const Geomodel& m, Horizon horizon, bool keep_fields) const {
  if (!(m.grid == setup_.fine)) throw DimensionError("fast model expects a fine-grid geomodel");
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec& f = setup_.fine;
  const GridSpec& c = setup_.coarse;
  const Geomodel mc = restrict_geomodel(m, c, setup_.upscaling);
  SimConfig cfg = setup_.fast_config;
  cfg.report_times_yr = times_for(horizon);
  ForwardRun run;
  FlowProperties props = setup_.props;
  props.relperm = setup_.fast_relperm;
  run.sim = simulate(mc, props, coarse_wells_, cfg);
  run.uplift = uplift_for(mc, coarse_geometry_, run.sim);

  const auto& layout = setup_.layout;
  const int nt = run.sim.steps();
  auto& s = run.series;
  s.times_yr = run.sim.times_yr;
  s.saturation.resize(nt, layout.n_saturation_points());
  s.pressure.resize(nt, layout.n_pressure_points());

  // interpolation stencils at the fine observation cells
  auto stencil_for = [&](int i, int j, int k) {
    return stencil_at(c, (i + 0.5) * f.dx, (j + 0.5) * f.dy, (k + 0.5) * f.dz);
  };
  std::vector<Stencil> sat_st, p_st;
  std::vector<double> p0;
  for (const auto& w : layout.saturation_wells)
    for (int l : w.layers) sat_st.push_back(stencil_for(w.i, w.j, l));
  for (int l : layout.pressure_well.layers) {
    p_st.push_back(stencil_for(layout.pressure_well.i, layout.pressure_well.j, l));
    p0.push_back(p0_fine_[static_cast<std::size_t>(
        f.sim_index_of_aquifer(layout.pressure_well.i, layout.pressure_well.j, l))]);
  }

  const int nca = c.aquifer_cells();
  std::vector<double> S_aq(static_cast<std::size_t>(nca)), dp_aq(static_cast<std::size_t>(nca));
  if (keep_fields) {
    run.fields.times_yr = s.times_yr;
    run.fields.S.resize(nt, f.aquifer_cells());
    run.fields.p.resize(nt, f.aquifer_cells());
  }
  for (int t = 0; t < nt; ++t) {
    for (int k = 0; k < c.nz; ++k)
      for (int j = 0; j < c.ny; ++j)
        for (int i = 0; i < c.nx; ++i) {
          const auto sc = static_cast<std::size_t>(c.sim_index_of_aquifer(i, j, k));
          const auto a = static_cast<std::size_t>(c.aquifer_index(i, j, k));
          S_aq[a] = run.sim.S[static_cast<std::size_t>(t)][sc];
          dp_aq[a] = run.sim.p[static_cast<std::size_t>(t)][sc] - run.sim.p_initial[sc];
        }
    for (std::size_t n = 0; n < sat_st.size(); ++n)
      s.saturation(t, static_cast<Eigen::Index>(n)) = interpolate(sat_st[n], S_aq);
    // pressure change is interpolated and added to the fine hydrostatic state
    for (std::size_t n = 0; n < p_st.size(); ++n)
      s.pressure(t, static_cast<Eigen::Index>(n)) = p0[n] + interpolate(p_st[n], dp_aq);
    if (keep_fields) {
      run.fields.S.row(t) = prolong_field(c, S_aq, f).transpose();
      const Eigen::VectorXd dpf = prolong_field(c, dp_aq, f);
      for (int k = 0; k < f.nz; ++k)
        for (int j = 0; j < f.ny; ++j)
          for (int i = 0; i < f.nx; ++i) {
            const int a = f.aquifer_index(i, j, k);
            run.fields.p(t, a) = p0_fine_[static_cast<std::size_t>(f.sim_index_of_aquifer(i, j, k))] + dpf[a];
          }
    }
  }
  s.uplift = run.uplift;
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

// Metrics ----------------------------------------------------------------------------------

namespace {

void check_fields(const StorageFields& A, const StorageFields& B) {
  if (A.S.rows() != B.S.rows() || A.S.cols() != B.S.cols() || A.p.rows() != B.p.rows() ||
      A.p.cols() != B.p.cols() || A.S.rows() != A.p.rows() || A.S.cols() != A.p.cols())
    throw DimensionError("field sets differ in shape");
  if (A.S.size() == 0) throw DimensionError("field sets are empty");
}

double saturation_sum(const StorageFields& A, const StorageFields& B, double guard) {
  return ((A.S - B.S).array().abs() / (B.S.array() + guard)).sum();
}

double pressure_sum(const StorageFields& A, const StorageFields& B) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < B.p.rows(); ++t) {
    const double range = B.p.row(t).maxCoeff() - B.p.row(t).minCoeff();
    const double diff = (A.p.row(t) - B.p.row(t)).cwiseAbs().sum();
    if (diff == 0.0) continue;
    if (!(range > 0)) throw DomainError("reference pressure field has zero range");
    sum += diff / range;
  }
  return sum;
}

}  // namespace

FieldDifference field_difference_metrics(const StorageFields& A, const StorageFields& B, double guard) {
  check_fields(A, B);
  const double n = static_cast<double>(B.S.size());
  return {saturation_sum(A, B, guard) / n, pressure_sum(A, B) / n};
}

FieldDifference field_difference_metrics(const std::vector<StorageFields>& A,
                                         const std::vector<StorageFields>& B, double guard) {
  if (A.size() != B.size()) throw DimensionError("ensembles differ in size");
  if (A.empty()) throw DimensionError("ensembles are empty");
  FieldDifference out;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const auto d = field_difference_metrics(A[i], B[i], guard);
    out.eps_S += d.eps_S;
    out.eps_p += d.eps_p;
  }
  out.eps_S /= static_cast<double>(A.size());
  out.eps_p /= static_cast<double>(A.size());
  return out;
}

RelativeErrors surrogate_relative_errors(const std::vector<StorageFields>& fast_fields,
                                         const std::vector<Eigen::MatrixXd>& fast_uplift,
                                         const std::vector<StorageFields>& hifi_fields,
                                         const std::vector<Eigen::MatrixXd>& hifi_uplift,
                                         double guard, double uplift_floor) {
  const std::size_t n = hifi_fields.size();
  if (fast_fields.size() != n || fast_uplift.size() != n || hifi_uplift.size() != n)
    throw DimensionError("fast and reference test sets differ in size");
  RelativeErrors out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = field_difference_metrics(fast_fields[i], hifi_fields[i], guard);
    out.delta_S.push_back(d.eps_S);
    out.delta_p.push_back(d.eps_p);
    const auto& a = fast_uplift[i];
    const auto& b = hifi_uplift[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("uplift shapes differ");
    double sum = 0.0;
    long used = 0;
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      for (Eigen::Index c = 0; c < b.cols(); ++c) {
        if (std::abs(b(r, c)) <= uplift_floor) {
          ++out.excluded_uplift_points;
          continue;
        }
        sum += std::abs(a(r, c) - b(r, c)) / std::abs(b(r, c));
        ++used;
      }
    out.delta_d.push_back(used ? sum / static_cast<double>(used) : 0.0);
  }
  return out;
}

double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DomainError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::MatrixXd ensemble_percentiles(const Eigen::MatrixXd& ensemble, const std::vector<double>& quantiles) {
  if (ensemble.rows() == 0) throw DomainError("ensemble is empty");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(quantiles.size()), ensemble.cols());
  for (Eigen::Index t = 0; t < ensemble.cols(); ++t) {
    std::vector<double> col(ensemble.col(t).data(), ensemble.col(t).data() + ensemble.rows());
    std::sort(col.begin(), col.end());
    for (std::size_t q = 0; q < quantiles.size(); ++q)
      out(static_cast<Eigen::Index>(q), t) = empirical_quantile(col, quantiles[q]);
  }
  return out;
}

}  // namespace co2hm
