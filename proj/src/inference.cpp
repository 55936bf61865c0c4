#include "co2hm/inference.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace co2hm {

// Noise and covariances ------------------------------------------------------------

void MeasurementNoise::validate(bool allow_zero) const {
  for (double s : {sigma_sat, sigma_p, sigma_uplift}) {
    if (!std::isfinite(s) || s < 0.0 || (!allow_zero && s == 0.0))
      throw DomainError("measurement noise standard deviations must be positive");
  }
}

Eigen::VectorXd build_measurement_covariance(const ObservationLayout& layout,
                                             const MeasurementNoise& noise) {
  noise.validate();
  const int nt = layout.n_history_times();
  const int ns = layout.n_saturation_points() * nt;
  const int np = layout.n_pressure_points() * nt;
  const int nu = layout.n_surface_points() * nt;
  Eigen::VectorXd c(ns + np + nu);
  c.segment(0, ns).setConstant(noise.sigma_sat * noise.sigma_sat);
  c.segment(ns, np).setConstant(noise.sigma_p * noise.sigma_p);
  c.segment(ns + np, nu).setConstant(noise.sigma_uplift * noise.sigma_uplift);
  return c;
}

Eigen::VectorXd synthesize_observations(const Eigen::VectorXd& d_true,
                                        const ObservationLayout& layout,
                                        const MeasurementNoise& noise) {
  noise.validate(true);
  if (d_true.size() != layout.n_m())
    throw DimensionError("observation vector length does not match the layout");
  const int nt = layout.n_history_times();
  const int ns = layout.n_saturation_points() * nt;
  const int np = layout.n_pressure_points() * nt;
  Rng rng(noise.seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd d = d_true;
  for (int i = 0; i < d.size(); ++i) {
    const double s = i < ns ? noise.sigma_sat : (i < ns + np ? noise.sigma_p : noise.sigma_uplift);
    const double z = normal(rng);
    d[i] += s * z;
  }
  return d;
}

ModelErrorEstimate build_model_error_covariance(const Eigen::MatrixXd& hifi,
                                                const Eigen::MatrixXd& fast) {
  if (hifi.rows() != fast.rows() || hifi.cols() != fast.cols())
    throw DimensionError("hifi and fast response matrices differ in shape");
  const Eigen::Index ne = hifi.cols();
  if (ne < 2) throw DomainError("model-error covariance needs at least two test cases");
  if (!hifi.allFinite() || !fast.allFinite())
    throw DomainError("non-finite response in model-error ensemble");
  ModelErrorEstimate out;
  const Eigen::MatrixXd eps = hifi - fast;
  out.epsilon_bar = eps.rowwise().mean();
  out.D = (eps.colwise() - out.epsilon_bar) / std::sqrt(static_cast<double>(ne - 1));
  out.C_surr = out.D * out.D.transpose();
  // D D^T is symmetric in exact arithmetic; enforce it bitwise
  out.C_surr = 0.5 * (out.C_surr + out.C_surr.transpose()).eval();
  return out;
}

std::pair<double, double> eigenvalue_range(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return {0.0, 0.0};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

ErrorCovariance::ErrorCovariance(const Eigen::VectorXd& c_d, const Eigen::MatrixXd& C_surr,
                                 bool model_error_enabled)
    : c_d_(c_d), model_error_(model_error_enabled) {
  if ((c_d.array() <= 0.0).any() || !c_d.allFinite())
    throw DomainError("measurement variances must be positive");
  if (model_error_enabled) {
    if (C_surr.rows() != c_d.size() || C_surr.cols() != c_d.size())
      throw DimensionError("C_surr shape does not match C_D");
    C_surr_ = C_surr;
    diagonal_ = false;
    llt_.compute(C_tot());
    if (llt_.info() != Eigen::Success) {
      const auto [lo, hi] = eigenvalue_range(C_tot());
      std::ostringstream msg;
      msg << "total covariance is not positive definite (min eigenvalue " << lo << ", max " << hi << ")";
      throw DomainError(msg.str());
    }
  }
}

Eigen::MatrixXd ErrorCovariance::C_tot() const {
  Eigen::MatrixXd C = diagonal_ ? Eigen::MatrixXd::Zero(size(), size()) : C_surr_;
  C.diagonal() += c_d_;
  return C;
}

Eigen::MatrixXd ErrorCovariance::factor() const {
  if (diagonal_) return c_d_.cwiseSqrt().asDiagonal();
  return llt_.matrixL();
}

double ErrorCovariance::quadratic_form(const Eigen::VectorXd& r) const {
  if (r.size() != size()) throw DimensionError("residual length does not match the covariance");
  if (!r.allFinite()) throw DomainError("non-finite residual");
  if (diagonal_) return -0.5 * (r.array().square() / c_d_.array()).sum();
  const Eigen::VectorXd w = llt_.matrixL().solve(r);
  return -0.5 * w.squaredNorm();
}

ErrorCovariance ErrorCovariance::subset(const std::vector<int>& idx) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(idx.size()));
  Eigen::MatrixXd S;
  if (!diagonal_) S.resize(c.size(), c.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    c[static_cast<Eigen::Index>(a)] = c_d_[idx[a]];
    if (diagonal_) continue;
    for (std::size_t b = 0; b < idx.size(); ++b)
      S(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = C_surr_(idx[a], idx[b]);
  }
  return ErrorCovariance(c, S, !diagonal_);
}

ErrorCovariance total_covariance(const Eigen::VectorXd& c_d, const Eigen::MatrixXd& C_surr,
                                 bool model_error_enabled) {
  return ErrorCovariance(c_d, C_surr, model_error_enabled);
}

double log_likelihood(const Eigen::VectorXd& d_obs, const Eigen::VectorXd& response,
                      const ErrorCovariance& cov) {
  if (d_obs.size() != response.size()) throw DimensionError("observation and response lengths differ");
  return cov.quadratic_form(d_obs - response);
}

Eigen::VectorXd select(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out[static_cast<Eigen::Index>(a)] = v[idx[a]];
  return out;
}

// Proposals ------------------------------------------------------------------------

const char* to_string(PcnVariant v) { return v == PcnVariant::sqrt ? "sqrt" : "literal"; }

PcnVariant pcn_variant_from_string(const std::string& s) {
  if (s == "sqrt") return PcnVariant::sqrt;
  if (s == "literal") return PcnVariant::literal;
  throw DomainError("unknown pcn variant '" + s + "' (expected sqrt or literal)");
}

Eigen::VectorXd propose_latent(const Eigen::VectorXd& xi, double beta, Rng& rng, PcnVariant variant) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
  const double a = variant == PcnVariant::sqrt ? std::sqrt(1.0 - beta * beta) : 1.0 - beta * beta;
  std::normal_distribution<double> normal;
  Eigen::VectorXd out(xi.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) out[i] = a * xi[i] + beta * normal(rng);
  return out;
}

SamplingVector propose_metaparameters(const SamplingVector& theta, const SamplingVector& sigmas, Rng& rng) {
  std::normal_distribution<double> normal;
  SamplingVector out = theta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigmas[i] * normal(rng);
  return out;
}

SamplingVector proposal_sigmas(const PriorBox& prior, double fraction) {
  SamplingVector s{};
  for (int i = 0; i < Metaparameters::size; ++i) s[static_cast<std::size_t>(i)] = prior.range(i) * fraction;
  return s;
}

// MCMC ---------------------------------------------------------------------------------

void McmcConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("beta must lie in (0, 1]");
  if (!(sigma_fraction > 0.0)) throw DomainError("sigma_fraction must be positive");
  if (sweeps < 1) throw DomainError("sweeps must be at least 1");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw DomainError("burn_in_fraction must lie in [0, 1)");
  if (thin < 1) throw DomainError("thin must be at least 1");
  if (latent_snapshot_every < 0) throw DomainError("latent_snapshot_every must be non-negative");
}

double ChainResult::acceptance_latent() const {
  const auto& s = final_state;
  return s.proposed_latent ? static_cast<double>(s.accepted_latent) / static_cast<double>(s.proposed_latent) : 0.0;
}

double ChainResult::acceptance_meta() const {
  const auto& s = final_state;
  return s.proposed_meta ? static_cast<double>(s.accepted_meta) / static_cast<double>(s.proposed_meta) : 0.0;
}

double ChainResult::acceptance_overall() const {
  const auto& s = final_state;
  const long n = s.proposed_latent + s.proposed_meta;
  return n ? static_cast<double>(s.accepted_latent + s.accepted_meta) / static_cast<double>(n) : 0.0;
}

namespace {

bool accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return std::log(u(rng)) < log_ratio;
}

}  // namespace

ChainResult run_chain(const LogLikelihoodFn& loglik, const PriorBox& prior, const McmcConfig& config,
                      const SamplingVector& theta0, const Eigen::VectorXd& xi0,
                      const SweepObserver& observer) {
  config.validate();
  if (!prior.contains(theta0)) throw DomainError("initial metaparameters lie outside the prior box");
  const SamplingVector sigmas = proposal_sigmas(prior, config.sigma_fraction);

  ChainResult out;
  ChainState& s = out.final_state;
  s.theta = theta0;
  s.xi = xi0;
  const auto l0 = loglik(s.theta, s.xi);
  if (!l0 || !std::isfinite(*l0)) throw Error("forward model failed at the initial state");
  s.loglik = *l0;

  Rng rng(config.seed);
  const long burn = static_cast<long>(std::floor(config.burn_in_fraction * config.sweeps));
  for (long it = 1; it <= config.sweeps; ++it) {
    bool acc_xi = false, acc_theta = false;

    const Eigen::VectorXd xi_p = propose_latent(s.xi, config.beta, rng, config.pcn_variant);
    ++s.proposed_latent;
    if (const auto l = loglik(s.theta, xi_p); !l || !std::isfinite(*l)) {
      ++s.forward_failures;
    } else if (accept(*l - s.loglik, rng)) {
      s.xi = xi_p;
      s.loglik = *l;
      acc_xi = true;
      ++s.accepted_latent;
    }

    const SamplingVector theta_p = propose_metaparameters(s.theta, sigmas, rng);
    ++s.proposed_meta;
    if (!prior.contains(theta_p)) {
      ++s.rejected_out_of_box;
    } else if (const auto l = loglik(theta_p, s.xi); !l || !std::isfinite(*l)) {
      ++s.forward_failures;
    } else if (accept(*l - s.loglik, rng)) {
      s.theta = theta_p;
      s.loglik = *l;
      acc_theta = true;
      ++s.accepted_meta;
    }

    s.iteration = it;
    if (it > burn && (it - burn) % config.thin == 0)
      out.records.push_back({it, s.theta, s.loglik, acc_xi, acc_theta});
    if (config.latent_snapshot_every > 0 && it % config.latent_snapshot_every == 0)
      out.latent_snapshots.push_back({it, s.theta, s.xi});
    if (observer) observer(s, acc_xi, acc_theta);
  }
  return out;
}

ChainResult mcmc_run(const Eigen::VectorXd& d_obs, const ForwardFn& forward,
                     const ErrorCovariance& cov, const PriorBox& prior, const McmcConfig& config,
                     const SamplingVector& theta0, const Eigen::VectorXd& xi0,
                     const SweepObserver& observer) {
  if (d_obs.size() != cov.size()) throw DimensionError("observation length does not match the covariance");
  auto ll = [&](const SamplingVector& theta, const Eigen::VectorXd& xi) -> std::optional<double> {
    std::optional<Eigen::VectorXd> r;
    try {
      r = forward(Metaparameters::from_sampling(theta), LatentVector{xi});
    } catch (const Error&) {
      return std::nullopt;
    }
    if (!r || r->size() != d_obs.size() || !r->allFinite()) return std::nullopt;
    return log_likelihood(d_obs, *r, cov);
  };
  return run_chain(ll, prior, config, theta0, xi0, observer);
}

// Diagnostics -------------------------------------------------------------------------

namespace {

using Chains = std::vector<std::vector<double>>;

Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h == 0) continue;
    // the middle draw of an odd-length chain is dropped
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double rhat_of(const Chains& c) {
  const double n = static_cast<double>(c.front().size());
  const double m = static_cast<double>(c.size());
  std::vector<double> means;
  double W = 0.0;
  for (const auto& x : c) {
    means.push_back(mean_of(x));
    W += variance_of(x);
  }
  W /= m;
  const double B = n * variance_of(means);
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

/// Normal scores of pooled ranks, average ranks for ties.
Chains rank_normalize(const Chains& c) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t i = 0; i < c[k].size(); ++i) all.emplace_back(c[k][i], k * c[0].size() + i);
  std::sort(all.begin(), all.end());
  const double S = static_cast<double>(all.size());
  std::vector<double> z(all.size());
  const boost::math::normal_distribution<double> nd;
  for (std::size_t a = 0; a < all.size();) {
    std::size_t b = a;
    while (b < all.size() && all[b].first == all[a].first) ++b;
    const double r = 0.5 * static_cast<double>(a + 1 + b);
    const double q = boost::math::quantile(nd, (r - 0.375) / (S + 0.25));
    for (std::size_t t = a; t < b; ++t) z[all[t].second] = q;
    a = b;
  }
  Chains out = c;
  for (std::size_t k = 0; k < c.size(); ++k)
    for (std::size_t i = 0; i < c[k].size(); ++i) out[k][i] = z[k * c[0].size() + i];
  return out;
}

/// Multi-chain ESS with Geyer's initial monotone sequence.
double ess_of(const Chains& c) {
  const std::size_t m = c.size();
  const std::size_t n = c.front().size();
  if (n < 4) return static_cast<double>(m * n);
  std::vector<std::vector<double>> acov(m);
  std::vector<double> means(m), vars(m);
  for (std::size_t k = 0; k < m; ++k) {
    means[k] = mean_of(c[k]);
    acov[k].assign(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (c[k][i] - means[k]) * (c[k][i + t] - means[k]);
      acov[k][t] = s / static_cast<double>(n);
    }
    vars[k] = acov[k][0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double W = mean_of(vars);
  double var_plus = W * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += variance_of(means);
  auto rho = [&](std::size_t t) {
    double a = 0.0;
    for (std::size_t k = 0; k < m; ++k) a += acov[k][t];
    a /= static_cast<double>(m);
    return 1.0 - (W - a) / var_plus;
  };
  std::vector<double> r(n);
  for (std::size_t t = 0; t < n; ++t) r[t] = rho(t);
  // pair sums Gamma_k = rho_{2k} + rho_{2k+1}, truncated at the first
  // negative value and made monotone
  double sum = 0.0;
  double prev = r[0] + r[1];
  sum += prev;
  for (std::size_t t = 2; t + 1 < n; t += 2) {
    double g = r[t] + r[t + 1];
    if (g < 0.0) break;
    g = std::min(g, prev);
    sum += g;
    prev = g;
  }
  const double tau = -1.0 + 2.0 * sum;
  const double mn = static_cast<double>(m * n);
  return mn / std::max(tau, 1.0 / std::log10(mn));
}

bool degenerate(const Chains& c) {
  for (const auto& x : c)
    for (double v : x)
      if (v != c.front().front()) return false;
  return true;
}

void check_chains(const Chains& chains) {
  if (chains.empty()) throw DomainError("diagnostics need at least one chain");
  for (const auto& c : chains) {
    if (c.size() != chains.front().size()) throw DimensionError("chains differ in length");
    if (c.size() < 4) throw DomainError("chains are too short for diagnostics");
  }
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  return rhat_of(split(chains));
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  if (degenerate(chains)) return std::numeric_limits<double>::quiet_NaN();
  return ess_of(rank_normalize(split(chains)));
}

ParameterDiagnostics chain_diagnostics(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  ParameterDiagnostics d;
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  d.mean = mean_of(pooled);
  d.sd = std::sqrt(variance_of(pooled));
  d.q05 = empirical_quantile(pooled, 0.05);
  d.q50 = empirical_quantile(pooled, 0.5);
  d.q95 = empirical_quantile(pooled, 0.95);

  const Chains s = split(chains);
  bool any_flat = false;
  for (const auto& x : s) any_flat |= variance_of(x) == 0.0;
  if (degenerate(chains) || any_flat) {
    d.defined = false;
    d.rhat = std::numeric_limits<double>::quiet_NaN();
    d.ess = std::numeric_limits<double>::quiet_NaN();
    return d;
  }
  const Chains z = rank_normalize(s);
  const double bulk = rhat_of(z);
  // folded draws detect differences in scale
  Chains folded = s;
  const double med = d.q50;
  for (auto& x : folded)
    for (double& v : x) v = std::abs(v - med);
  const double tail = degenerate(folded) ? bulk : rhat_of(rank_normalize(folded));
  d.rhat = std::max(bulk, tail);
  d.ess = ess_of(z);
  return d;
}

}  // namespace co2hm
