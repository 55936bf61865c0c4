#include "co2hm/flowsim.hpp"

#include "linear_solver.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace co2hm {

void FluidProps::validate() const {
  if (!(mu_w > 0 && mu_g > 0 && rho_w > 0 && rho_g > 0 && c_w > 0 && c_g > 0 && p_ref > 0))
    throw DomainError("fluid properties must be positive");
}

void RelPermParams::validate() const {
  if (!(S_wi >= 0 && S_gr >= 0 && S_wi + S_gr < 1.0))
    throw DomainError("relative permeability endpoints require 0 <= S_wi + S_gr < 1");
  if (!(n_w >= 1 && n_g >= 1)) throw DomainError("Corey exponents must be >= 1");
  if (!(krg_at_Swi > 0 && krg_at_Swi <= 1 && krw_endpoint > 0 && krw_endpoint <= 1))
    throw DomainError("relative permeability endpoints must lie in (0, 1]");
}

double RelPermParams::effective_saturation(double S_w) const {
  return std::clamp((S_w - S_wi) / (1.0 - S_wi - S_gr), 0.0, 1.0);
}

RelPerm corey_relperm(double S_w, const RelPermParams& p) {
  const double se = p.effective_saturation(std::clamp(S_w, 0.0, 1.0));
  return {p.krw_endpoint * std::pow(se, p.n_w), p.krg_at_Swi * std::pow(1.0 - se, p.n_g)};
}

void CapPressureParams::validate() const {
  if (!(lambda > 0)) throw DomainError("capillary exponent must be positive");
  if (!(P_e_ref >= 0)) throw DomainError("entry pressure must be non-negative");
  if (!(phi_ref > 0 && k_ref_md > 0 && se_floor > 0 && se_floor < 1))
    throw DomainError("capillary reference values must be positive");
}

double capillary_pressure(double S_w, double phi, double k_md, const CapPressureParams& cap,
                          const RelPermParams& relperm) {
  if (!(phi > 0 && k_md > 0)) throw DomainError("capillary pressure needs positive phi and k");
  const double scale = cap.P_e_ref * std::sqrt((cap.k_ref_md / cap.phi_ref) / (k_md / phi));
  const double se = std::max(relperm.effective_saturation(S_w), cap.se_floor);
  return scale * std::pow(se, -cap.exponent());
}

const char* to_string(PorosityMode m) {
  return m == PorosityMode::flow_only ? "flow_only" : "pseudo_coupled";
}

PorosityMode porosity_mode_from_string(const std::string& s) {
  if (s == "flow_only") return PorosityMode::flow_only;
  if (s == "pseudo_coupled") return PorosityMode::pseudo_coupled;
  throw DomainError("unknown porosity mode '" + s + "'");
}

void SimConfig::validate() const {
  if (report_times_yr.empty()) throw DomainError("at least one report time is required");
  double prev = 0.0;
  for (double t : report_times_yr) {
    if (!(t > prev)) throw DomainError("report times must be positive and strictly increasing");
    prev = t;
  }
  if (max_newton < 1 || !(newton_tol > 0) || !(dt_initial_yr > 0) || !(dt_max_yr > 0) ||
      !(dt_growth >= 1) || max_cuts < 0)
    throw DomainError("invalid time-stepping or Newton controls");
}

double SimResult::mass_balance_error(int t) const {
  const auto i = static_cast<std::size_t>(t);
  const double defect = std::abs(co2_in_place[i] - injected_mass[i]);
  return injected_mass[i] > 0 ? defect / injected_mass[i] : defect;
}

std::vector<double> porosity_slopes(const Geomodel& m, PorosityMode mode, double K_g) {
  std::vector<double> slope(m.phi.size());
  if (mode == PorosityMode::flow_only) {
    const double c = effective_compressibilities(m, K_g).storage;
    for (std::size_t i = 0; i < slope.size(); ++i) slope[i] = m.phi[i] * c;
  } else {
    for (std::size_t i = 0; i < slope.size(); ++i)
      slope[i] = poroelastic_porosity_slope(m.phi[i], m.E[i], m.nu[i], K_g);
  }
  return slope;
}

std::vector<double> hydrostatic_pressure(const GridSpec& grid, const FluidProps& f,
                                         double p_anchor) {
  const double g = units::gravity;
  auto rho = [&](double p) { return f.rho_w * std::exp(f.c_w * (p - f.p_ref)); };
  std::vector<double> layer(static_cast<std::size_t>(grid.nz));
  // continuous hydrostat from the mid-depth anchor to the reference layer
  const int k0 = grid.nz / 2;
  const double z_mid = grid.depth_top + 0.5 * grid.thickness();
  const double dz0 = grid.cell_center_depth(k0) - z_mid;
  layer[static_cast<std::size_t>(k0)] =
      f.p_ref - std::log(std::exp(-f.c_w * (p_anchor - f.p_ref)) - f.c_w * f.rho_w * g * dz0) / f.c_w;
  // discrete two-point equilibrium: p_b - p_a = 0.5 (rho_a + rho_b) g (z_b - z_a)
  auto solve = [&](double pa, double dz) {
    double pb = pa + rho(pa) * g * dz;
    for (int it = 0; it < 50; ++it) {
      const double r = pb - pa - 0.5 * (rho(pa) + rho(pb)) * g * dz;
      const double dr = 1.0 - 0.5 * f.c_w * rho(pb) * g * dz;
      const double step = r / dr;
      pb -= step;
      if (std::abs(step) < 1e-12 * std::abs(pb)) break;
    }
    return pb;
  };
  for (int k = k0 + 1; k < grid.nz; ++k)
    layer[static_cast<std::size_t>(k)] = solve(layer[static_cast<std::size_t>(k - 1)], grid.dz);
  for (int k = k0 - 1; k >= 0; --k)
    layer[static_cast<std::size_t>(k)] = solve(layer[static_cast<std::size_t>(k + 1)], -grid.dz);

  std::vector<double> p(static_cast<std::size_t>(grid.sim_cells()));
  for (int k = 0; k < grid.nz; ++k)
    for (int j = 0; j < grid.sim_ny(); ++j)
      for (int i = 0; i < grid.sim_nx(); ++i)
        p[static_cast<std::size_t>(grid.sim_index(i, j, k))] = layer[static_cast<std::size_t>(k)];
  return p;
}

namespace {

struct Connection {
  int a = 0, b = 0;
  double T = 0.0;    // m^3 (k A / L with k in m^2)
  double gdz = 0.0;  // g (z_a - z_b)
  int off_ab[4]{};   // value offsets of block (a, b): (w,p) (w,S) (g,p) (g,S)
  int off_ba[4]{};
};

struct CellEval {
  double phi, dphi;
  double pc, dpc;  // dPc/dS_g
  double rho_w, drho_w;
  double rho_g, drho_g_dp, drho_g_ds;
  double mob_w, dmob_w_dp, dmob_w_ds;  // rho kr / mu
  double mob_g, dmob_g_dp, dmob_g_ds;
  double acc_w, dacc_w_dp, dacc_w_ds;  // kg
  double acc_g, dacc_g_dp, dacc_g_ds;
};

class FlowSolver {
 public:
  FlowSolver(const Geomodel& m, const FlowProperties& props, const std::vector<WellSpec>& wells,
             const SimConfig& cfg, std::span<const double> slope)
      : m_(m), props_(props), wells_(wells), cfg_(cfg), slope_(slope.begin(), slope.end()) {
    const GridSpec& g = m.grid;
    n_ = g.sim_cells();
    pv_.resize(static_cast<std::size_t>(n_));
    pc_scale_.resize(static_cast<std::size_t>(n_));
    for (int c = 0; c < n_; ++c) {
      const auto u = static_cast<std::size_t>(c);
      const int i = c % g.sim_nx(), j = (c / g.sim_nx()) % g.sim_ny();
      const double mult = m.region[u] == Region::storage ? 1.0 : g.boundary_pv_multiplier;
      pv_[u] = g.sim_width_x(i) * g.sim_width_y(j) * g.dz * mult;
      const auto& cap = props.capillary;
      pc_scale_[u] = cap.P_e_ref * std::sqrt((cap.k_ref_md / cap.phi_ref) / (m.kx[u] / m.phi[u]));
    }
    build_connections();
    build_pattern();
    p0_ = hydrostatic_pressure(g, props.fluids);
  }

  SimResult run();

 private:
  void build_connections();
  void build_pattern();
  int offset(int row, int col) const;
  void evaluate(int c, double p, double s, CellEval& e) const;
  /// Assembles residual (kg) and scaled Jacobian at the current iterate.
  void assemble(double dt, bool with_jacobian);
  void allocate_wells();

  const Geomodel& m_;
  const FlowProperties& props_;
  const std::vector<WellSpec>& wells_;
  const SimConfig& cfg_;
  std::vector<double> slope_;
  int n_ = 0;
  std::vector<double> pv_, pc_scale_, p0_;
  std::vector<Connection> conns_;
  std::vector<int> diag_off_;  // 4 per cell
  Eigen::SparseMatrix<double> J_;

  // state
  std::vector<double> p_, s_, p_old_, s_old_;
  std::vector<double> acc_w_old_, acc_g_old_;
  std::vector<double> q_g_, q_w_;  // kg/s per cell
  std::vector<CellEval> ev_;
  Eigen::VectorXd R_;

  static constexpr double kPressureScale = 1e6;
};

void FlowSolver::build_connections() {
  const GridSpec& g = m_.grid;
  const double md = units::millidarcy;
  const double gz = units::gravity;
  auto add = [&](int a, int b, double ka, double kb, double area, double len_a, double len_b,
                 double dzab) {
    const double ta = ka * md * area / (0.5 * len_a);
    const double tb = kb * md * area / (0.5 * len_b);
    Connection c;
    c.a = a;
    c.b = b;
    c.T = ta * tb / (ta + tb);
    c.gdz = gz * dzab;
    conns_.push_back(c);
  };
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.sim_ny(); ++j)
      for (int i = 0; i < g.sim_nx(); ++i) {
        const int c = g.sim_index(i, j, k);
        const auto u = static_cast<std::size_t>(c);
        const double wx = g.sim_width_x(i), wy = g.sim_width_y(j);
        if (i + 1 < g.sim_nx()) {
          const int d = g.sim_index(i + 1, j, k);
          add(c, d, m_.kx[u], m_.kx[static_cast<std::size_t>(d)], wy * g.dz, wx,
              g.sim_width_x(i + 1), 0.0);
        }
        if (j + 1 < g.sim_ny()) {
          const int d = g.sim_index(i, j + 1, k);
          add(c, d, m_.ky[u], m_.ky[static_cast<std::size_t>(d)], wx * g.dz, wy,
              g.sim_width_y(j + 1), 0.0);
        }
        if (k + 1 < g.nz) {
          const int d = g.sim_index(i, j, k + 1);
          add(c, d, m_.kz[u], m_.kz[static_cast<std::size_t>(d)], wx * wy, g.dz, g.dz, -g.dz);
        }
      }
}

void FlowSolver::build_pattern() {
  const int N = 2 * n_;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(4 * n_) + 8 * conns_.size());
  auto block = [&](int r, int c) {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) trip.emplace_back(2 * r + a, 2 * c + b, 1.0);
  };
  for (int c = 0; c < n_; ++c) block(c, c);
  for (const auto& cn : conns_) {
    block(cn.a, cn.b);
    block(cn.b, cn.a);
  }
  J_.resize(N, N);
  J_.setFromTriplets(trip.begin(), trip.end());
  J_.makeCompressed();
  diag_off_.resize(static_cast<std::size_t>(4 * n_));
  for (int c = 0; c < n_; ++c)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        diag_off_[static_cast<std::size_t>(4 * c + 2 * a + b)] = offset(2 * c + a, 2 * c + b);
  for (auto& cn : conns_)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        cn.off_ab[2 * a + b] = offset(2 * cn.a + a, 2 * cn.b + b);
        cn.off_ba[2 * a + b] = offset(2 * cn.b + a, 2 * cn.a + b);
      }
}

int FlowSolver::offset(int row, int col) const {
  const int* outer = J_.outerIndexPtr();
  const int* inner = J_.innerIndexPtr();
  const int* it = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
  return static_cast<int>(it - inner);
}

void FlowSolver::evaluate(int c, double p, double s, CellEval& e) const {
  const auto u = static_cast<std::size_t>(c);
  const auto& f = props_.fluids;
  const auto& rp = props_.relperm;
  const auto& cap = props_.capillary;
  const double sw = 1.0 - s;
  const double span = 1.0 - rp.S_wi - rp.S_gr;
  const double se_raw = (sw - rp.S_wi) / span;
  const double se = std::clamp(se_raw, 0.0, 1.0);
  const bool se_inside = se_raw > 0.0 && se_raw < 1.0;
  // dSe/dS_g
  const double dse = se_inside ? -1.0 / span : 0.0;

  // capillary pressure
  const double expo = cap.exponent();
  if (se_raw > cap.se_floor) {
    e.pc = pc_scale_[u] * std::pow(se, -expo);
    e.dpc = -expo * e.pc / se * (-1.0 / span);
    if (se_raw >= 1.0) e.dpc = 0.0;
  } else {
    e.pc = pc_scale_[u] * std::pow(cap.se_floor, -expo);
    e.dpc = 0.0;
  }

  e.phi = m_.phi[u] + slope_[u] * (p - p0_[u]);
  e.dphi = slope_[u];
  e.rho_w = f.rho_w * std::exp(f.c_w * (p - f.p_ref));
  e.drho_w = f.c_w * e.rho_w;
  const double pg = p + e.pc;
  e.rho_g = f.rho_g * std::exp(f.c_g * (pg - f.p_ref));
  e.drho_g_dp = f.c_g * e.rho_g;
  e.drho_g_ds = f.c_g * e.rho_g * e.dpc;

  const double krw = rp.krw_endpoint * std::pow(se, rp.n_w);
  const double dkrw = se > 0.0 ? rp.krw_endpoint * rp.n_w * std::pow(se, rp.n_w - 1.0) * dse : 0.0;
  const double krg = rp.krg_at_Swi * std::pow(1.0 - se, rp.n_g);
  const double dkrg =
      se < 1.0 ? -rp.krg_at_Swi * rp.n_g * std::pow(1.0 - se, rp.n_g - 1.0) * dse : 0.0;

  e.mob_w = e.rho_w * krw / f.mu_w;
  e.dmob_w_dp = e.drho_w * krw / f.mu_w;
  e.dmob_w_ds = e.rho_w * dkrw / f.mu_w;
  e.mob_g = e.rho_g * krg / f.mu_g;
  e.dmob_g_dp = e.drho_g_dp * krg / f.mu_g;
  e.dmob_g_ds = (e.drho_g_ds * krg + e.rho_g * dkrg) / f.mu_g;

  const double v = pv_[u];
  e.acc_w = v * e.phi * e.rho_w * sw;
  e.dacc_w_dp = v * (e.dphi * e.rho_w + e.phi * e.drho_w) * sw;
  e.dacc_w_ds = -v * e.phi * e.rho_w;
  e.acc_g = v * e.phi * e.rho_g * s;
  e.dacc_g_dp = v * (e.dphi * e.rho_g + e.phi * e.drho_g_dp) * s;
  e.dacc_g_ds = v * e.phi * (e.rho_g + e.drho_g_ds * s);
}

void FlowSolver::allocate_wells() {
  const GridSpec& g = m_.grid;
  std::fill(q_g_.begin(), q_g_.end(), 0.0);
  std::fill(q_w_.begin(), q_w_.end(), 0.0);
  for (const auto& w : wells_) {
    if (w.role != WellRole::injector || w.rate <= 0.0) continue;
    std::vector<double> weight(w.layers.size());
    double total = 0.0;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto c = static_cast<std::size_t>(g.sim_index_of_aquifer(w.i, w.j, w.layers[l]));
      const RelPerm kr = corey_relperm(1.0 - s_[c], props_.relperm);
      const double lam = kr.krw / props_.fluids.mu_w + kr.krg / props_.fluids.mu_g;
      weight[l] = m_.kx[c] * g.dz * lam;
      total += weight[l];
    }
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto c = static_cast<std::size_t>(g.sim_index_of_aquifer(w.i, w.j, w.layers[l]));
      const double q = w.rate * weight[l] / total;
      (w.phase == InjectedPhase::co2 ? q_g_ : q_w_)[c] += q;
    }
  }
}

void FlowSolver::assemble(double dt, bool with_jacobian) {
  double* val = J_.valuePtr();
  if (with_jacobian) std::fill(val, val + J_.nonZeros(), 0.0);
  const double rw = props_.fluids.rho_w, rg = props_.fluids.rho_g;
  const double ps = kPressureScale;

  for (int c = 0; c < n_; ++c) {
    const auto u = static_cast<std::size_t>(c);
    CellEval& e = ev_[u];
    evaluate(c, p_[u], s_[u], e);
    R_[2 * c] = e.acc_w - acc_w_old_[u] - dt * q_w_[u];
    R_[2 * c + 1] = e.acc_g - acc_g_old_[u] - dt * q_g_[u];
    if (with_jacobian) {
      const double sw = 1.0 / (rw * pv_[u]), sg = 1.0 / (rg * pv_[u]);
      const int* o = &diag_off_[4 * u];
      val[o[0]] += e.dacc_w_dp * sw * ps;
      val[o[1]] += e.dacc_w_ds * sw;
      val[o[2]] += e.dacc_g_dp * sg * ps;
      val[o[3]] += e.dacc_g_ds * sg;
    }
  }

  for (const auto& cn : conns_) {
    const auto a = static_cast<std::size_t>(cn.a), b = static_cast<std::size_t>(cn.b);
    const CellEval& ea = ev_[a];
    const CellEval& eb = ev_[b];
    const double sa_w = 1.0 / (rw * pv_[a]), sb_w = 1.0 / (rw * pv_[b]);
    const double sa_g = 1.0 / (rg * pv_[a]), sb_g = 1.0 / (rg * pv_[b]);

    // water
    {
      const double rho_bar = 0.5 * (ea.rho_w + eb.rho_w);
      const double dphi = p_[a] - p_[b] - rho_bar * cn.gdz;
      const bool up_a = dphi >= 0.0;
      const double mob = up_a ? ea.mob_w : eb.mob_w;
      const double F = dt * cn.T * mob * dphi;
      R_[2 * cn.a] += F;
      R_[2 * cn.b] -= F;
      if (with_jacobian) {
        const double k = dt * cn.T;
        const double dpa = k * ((up_a ? ea.dmob_w_dp * dphi : 0.0) +
                                mob * (1.0 - 0.5 * ea.drho_w * cn.gdz));
        const double dsa = k * (up_a ? ea.dmob_w_ds * dphi : 0.0);
        const double dpb = k * ((up_a ? 0.0 : eb.dmob_w_dp * dphi) +
                                mob * (-1.0 - 0.5 * eb.drho_w * cn.gdz));
        const double dsb = k * (up_a ? 0.0 : eb.dmob_w_ds * dphi);
        val[diag_off_[4 * a + 0]] += dpa * sa_w * ps;
        val[diag_off_[4 * a + 1]] += dsa * sa_w;
        val[cn.off_ab[0]] += dpb * sa_w * ps;
        val[cn.off_ab[1]] += dsb * sa_w;
        val[diag_off_[4 * b + 0]] -= dpb * sb_w * ps;
        val[diag_off_[4 * b + 1]] -= dsb * sb_w;
        val[cn.off_ba[0]] -= dpa * sb_w * ps;
        val[cn.off_ba[1]] -= dsa * sb_w;
      }
    }
    // CO2
    {
      const double rho_bar = 0.5 * (ea.rho_g + eb.rho_g);
      const double dphi = (p_[a] + ea.pc) - (p_[b] + eb.pc) - rho_bar * cn.gdz;
      const bool up_a = dphi >= 0.0;
      const double mob = up_a ? ea.mob_g : eb.mob_g;
      const double F = dt * cn.T * mob * dphi;
      R_[2 * cn.a + 1] += F;
      R_[2 * cn.b + 1] -= F;
      if (with_jacobian) {
        const double k = dt * cn.T;
        const double dpa = k * ((up_a ? ea.dmob_g_dp * dphi : 0.0) +
                                mob * (1.0 - 0.5 * ea.drho_g_dp * cn.gdz));
        const double dsa = k * ((up_a ? ea.dmob_g_ds * dphi : 0.0) +
                                mob * (ea.dpc - 0.5 * ea.drho_g_ds * cn.gdz));
        const double dpb = k * ((up_a ? 0.0 : eb.dmob_g_dp * dphi) +
                                mob * (-1.0 - 0.5 * eb.drho_g_dp * cn.gdz));
        const double dsb = k * ((up_a ? 0.0 : eb.dmob_g_ds * dphi) +
                                mob * (-eb.dpc - 0.5 * eb.drho_g_ds * cn.gdz));
        val[diag_off_[4 * a + 2]] += dpa * sa_g * ps;
        val[diag_off_[4 * a + 3]] += dsa * sa_g;
        val[cn.off_ab[2]] += dpb * sa_g * ps;
        val[cn.off_ab[3]] += dsb * sa_g;
        val[diag_off_[4 * b + 2]] -= dpb * sb_g * ps;
        val[diag_off_[4 * b + 3]] -= dsb * sb_g;
        val[cn.off_ba[2]] -= dpa * sb_g * ps;
        val[cn.off_ba[3]] -= dsa * sb_g;
      }
    }
  }
}

SimResult FlowSolver::run() {
  const auto t_start = std::chrono::steady_clock::now();
  const GridSpec& g = m_.grid;
  const auto n = static_cast<std::size_t>(n_);
  p_ = p0_;
  s_.assign(n, 0.0);
  acc_w_old_.resize(n);
  acc_g_old_.resize(n);
  q_g_.assign(n, 0.0);
  q_w_.assign(n, 0.0);
  ev_.resize(n);
  R_.resize(2 * n_);

  SimResult res;
  res.grid = g;
  res.p_initial = p0_;

  double injection_rate_g = 0.0;
  for (const auto& w : wells_)
    if (w.role == WellRole::injector && w.phase == InjectedPhase::co2) injection_rate_g += w.rate;

  auto linear = detail::make_linear_solver(J_);

  double t = 0.0;  // s
  double dt = cfg_.dt_initial_yr * units::year;
  double injected = 0.0;
  std::size_t next_report = 0;
  const auto& reports = cfg_.report_times_yr;
  Eigen::VectorXd dx(2 * n_);

  auto co2_mass = [&]() {
    double mass = 0.0;
    for (std::size_t c = 0; c < n; ++c) mass += ev_[c].acc_g;
    return mass;
  };

  for (int c = 0; c < n_; ++c) {
    evaluate(c, p_[static_cast<std::size_t>(c)], 0.0, ev_[static_cast<std::size_t>(c)]);
  }
  const double co2_initial = co2_mass();

  while (next_report < reports.size()) {
    const double t_report = reports[next_report] * units::year;
    // land on report times without leaving a sliver
    if (t + dt >= t_report * (1.0 - 1e-12)) {
      dt = t_report - t;
    } else if (t + 2.0 * dt > t_report) {
      dt = 0.5 * (t_report - t);
    }

    p_old_ = p_;
    s_old_ = s_;
    for (std::size_t c = 0; c < n; ++c) {
      acc_w_old_[c] = ev_[c].acc_w;
      acc_g_old_[c] = ev_[c].acc_g;
    }
    allocate_wells();

    int cuts = 0;
    bool ok = false;
    while (true) {
      const double step_injection = injection_rate_g * dt;
      const double defect_tol =
          cfg_.mass_balance_tol * std::max(injected + step_injection, 1.0);
      for (int it = 0; it <= cfg_.max_newton; ++it) {
        assemble(dt, true);
        double rmax = 0.0, gas_sum = 0.0;
        bool finite = true;
        for (std::size_t c = 0; c < n; ++c) {
          const double rw = std::abs(R_[2 * c]) / (props_.fluids.rho_w * pv_[c]);
          const double rg = std::abs(R_[2 * c + 1]) / (props_.fluids.rho_g * pv_[c]);
          if (!std::isfinite(rw) || !std::isfinite(rg)) finite = false;
          rmax = std::max({rmax, rw, rg});
          gas_sum += R_[2 * c + 1];
        }
        if (!finite) break;
        if (rmax < cfg_.newton_tol && std::abs(gas_sum) <= defect_tol) {
          ok = true;
          res.stats.newton_iterations += it;
          break;
        }
        if (it == cfg_.max_newton) break;
        // scaled rows
        Eigen::VectorXd rhs(2 * n_);
        for (std::size_t c = 0; c < n; ++c) {
          rhs[2 * c] = -R_[2 * c] / (props_.fluids.rho_w * pv_[c]);
          rhs[2 * c + 1] = -R_[2 * c + 1] / (props_.fluids.rho_g * pv_[c]);
        }
        if (!linear->solve(J_, rhs, dx)) break;
        for (std::size_t c = 0; c < n; ++c) {
          const double dp = dx[2 * c] * kPressureScale;
          const double ds = std::clamp(dx[2 * c + 1], -cfg_.max_ds_iter, cfg_.max_ds_iter);
          p_[c] = std::max(p_[c] + dp, 0.1 * p_[c]);
          s_[c] = std::clamp(s_[c] + ds, 0.0, 1.0);
        }
      }
      if (ok) break;
      // time-step cut
      p_ = p_old_;
      s_ = s_old_;
      ++cuts;
      ++res.stats.cuts;
      if (cuts > cfg_.max_cuts) break;
      dt *= 0.5;
    }

    if (!ok) {
      // restore the state of the last converged step
      for (int c = 0; c < n_; ++c)
        evaluate(c, p_[static_cast<std::size_t>(c)], s_[static_cast<std::size_t>(c)],
                 ev_[static_cast<std::size_t>(c)]);
      std::ostringstream os;
      os << "Newton failed to converge at t = " << t / units::year << " yr after "
         << cfg_.max_cuts << " time-step cuts";
      res.converged = false;
      res.failure = os.str();
      break;
    }

    ++res.stats.steps;
    t += dt;
    injected += injection_rate_g * dt;
    double ds_max = 0.0, dp_max = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      ds_max = std::max(ds_max, std::abs(s_[c] - s_old_[c]));
      dp_max = std::max(dp_max, std::abs(p_[c] - p_old_[c]));
    }
    if (std::abs(t - t_report) <= 1e-9 * t_report) {
      t = t_report;
      res.times_yr.push_back(reports[next_report]);
      res.p.push_back(p_);
      res.S.push_back(s_);
      res.injected_mass.push_back(injected);
      res.co2_in_place.push_back(co2_mass() - co2_initial);
      ++next_report;
    }
    double factor = cfg_.dt_growth;
    if (ds_max > 0) factor = std::min(factor, cfg_.ds_target / ds_max);
    if (dp_max > 0) factor = std::min(factor, cfg_.dp_target / dp_max);
    factor = std::max(factor, 0.5);
    dt = std::min(dt * factor, cfg_.dt_max_yr * units::year);
  }

  res.stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

void validate_wells(const GridSpec& g, const std::vector<WellSpec>& wells) {
  bool injector = false;
  for (const auto& w : wells) {
    if (w.i < 0 || w.i >= g.nx || w.j < 0 || w.j >= g.ny)
      throw DomainError("well '" + w.name + "' lies outside the storage aquifer");
    if (w.rate < 0) throw DomainError("well '" + w.name + "' has a negative rate");
    for (int l : w.layers)
      if (l < 0 || l >= g.nz) throw DomainError("well '" + w.name + "' perforates a missing layer");
    if (w.role == WellRole::injector) {
      injector = true;
      if (w.layers.empty()) throw DomainError("injector '" + w.name + "' has no perforations");
    }
  }
  if (!injector) throw DomainError("simulation needs at least one injector");
}

}  // namespace

SimResult simulate(const Geomodel& m, const FlowProperties& props,
                   const std::vector<WellSpec>& wells, const SimConfig& config,
                   std::span<const double> dphi_dp) {
  m.grid.validate();
  props.fluids.validate();
  props.relperm.validate();
  props.capillary.validate();
  config.validate();
  if (static_cast<int>(m.phi.size()) != m.grid.sim_cells() ||
      static_cast<int>(dphi_dp.size()) != m.grid.sim_cells())
    throw DimensionError("geomodel arrays do not match the simulation grid");
  validate_wells(m.grid, wells);
  FlowSolver solver(m, props, wells, config, dphi_dp);
  return solver.run();
}

SimResult simulate(const Geomodel& m, const FlowProperties& props,
                   const std::vector<WellSpec>& wells, const SimConfig& config) {
  const auto slope = porosity_slopes(m, config.mode, config.grain_bulk_modulus);
  return simulate(m, props, wells, config, slope);
}

}  // namespace co2hm
