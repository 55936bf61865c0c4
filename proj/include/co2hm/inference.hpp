#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "co2hm/forward.hpp"
#include "co2hm/geomodel.hpp"

namespace co2hm {

// Noise and covariances ------------------------------------------------------------

struct MeasurementNoise {
  double sigma_sat = 0.02;        // saturation fraction
  double sigma_p = 0.095e6;       // Pa
  double sigma_uplift = 0.1e-2;   // m
  std::uint64_t seed = 0;

  void validate(bool allow_zero = false) const;
};

/// Diagonal of C_D in measurement order.
Eigen::VectorXd build_measurement_covariance(const ObservationLayout& layout,
                                             const MeasurementNoise& noise);

/// d_obs = d_true + eps, eps ~ N(0, C_D), deterministic for noise.seed.
Eigen::VectorXd synthesize_observations(const Eigen::VectorXd& d_true,
                                        const ObservationLayout& layout,
                                        const MeasurementNoise& noise);

struct ModelErrorEstimate {
  Eigen::VectorXd epsilon_bar;  // mean of hifi - fast
  Eigen::MatrixXd D;            // centered residuals / sqrt(n_e - 1), n_m x n_e
  Eigen::MatrixXd C_surr;       // D D^T
};

/// hifi, fast: n_m x n_e response matrices, one test case per column.
ModelErrorEstimate build_model_error_covariance(const Eigen::MatrixXd& hifi,
                                                const Eigen::MatrixXd& fast);

/// Total covariance with a cached Cholesky factor.
class ErrorCovariance {
 public:
  ErrorCovariance() = default;
  /// C_tot = diag(c_d) + C_surr, or diag(c_d) alone when model error is
  /// disabled. Throws DomainError with the minimum eigenvalue when C_tot is
  /// not positive definite.
  ErrorCovariance(const Eigen::VectorXd& c_d, const Eigen::MatrixXd& C_surr,
                  bool model_error_enabled);

  int size() const { return static_cast<int>(c_d_.size()); }
  bool model_error_enabled() const { return model_error_; }
  const Eigen::VectorXd& c_d() const { return c_d_; }
  const Eigen::MatrixXd& C_surr() const { return C_surr_; }
  Eigen::MatrixXd C_tot() const;
  /// Lower-triangular L with L L^T = C_tot.
  Eigen::MatrixXd factor() const;

  /// -1/2 r^T C_tot^{-1} r via a triangular solve.
  double quadratic_form(const Eigen::VectorXd& r) const;

  /// Restriction to a subset of measurements (rows and columns).
  ErrorCovariance subset(const std::vector<int>& idx) const;

 private:
  Eigen::VectorXd c_d_;
  Eigen::MatrixXd C_surr_;
  bool model_error_ = true;
  bool diagonal_ = true;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

ErrorCovariance total_covariance(const Eigen::VectorXd& c_d, const Eigen::MatrixXd& C_surr,
                                 bool model_error_enabled);

/// Smallest and largest eigenvalue of a symmetric matrix.
std::pair<double, double> eigenvalue_range(const Eigen::MatrixXd& A);

/// log-likelihood up to a constant: -1/2 r^T C_tot^{-1} r, r = d_obs - response.
double log_likelihood(const Eigen::VectorXd& d_obs, const Eigen::VectorXd& response,
                      const ErrorCovariance& cov);

Eigen::VectorXd select(const Eigen::VectorXd& v, const std::vector<int>& idx);

// Proposals ------------------------------------------------------------------------

enum class PcnVariant { sqrt, literal };

const char* to_string(PcnVariant v);
PcnVariant pcn_variant_from_string(const std::string& s);

/// sqrt: sqrt(1 - beta^2) xi + beta eps; literal: (1 - beta^2) xi + beta eps.
Eigen::VectorXd propose_latent(const Eigen::VectorXd& xi, double beta, Rng& rng,
                               PcnVariant variant = PcnVariant::sqrt);

using SamplingVector = std::array<double, Metaparameters::size>;

/// Random-walk step in sampling coordinates (log10 a_r). No box check.
SamplingVector propose_metaparameters(const SamplingVector& theta, const SamplingVector& sigmas,
                                      Rng& rng);

/// sigma_i = range_i * fraction in sampling coordinates.
SamplingVector proposal_sigmas(const PriorBox& prior, double fraction = 1.0 / 60.0);

// MCMC ---------------------------------------------------------------------------------

struct McmcConfig {
  double beta = 0.03;
  double sigma_fraction = 1.0 / 60.0;
  int sweeps = 20000;
  double burn_in_fraction = 0.5;
  int thin = 10;
  PcnVariant pcn_variant = PcnVariant::sqrt;
  bool model_error_enabled = true;
  int latent_snapshot_every = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ChainState {
  SamplingVector theta{};  // sampling coordinates
  Eigen::VectorXd xi;
  double loglik = 0.0;
  long iteration = 0;
  long accepted_latent = 0, accepted_meta = 0;
  long proposed_latent = 0, proposed_meta = 0;
  long rejected_out_of_box = 0;
  long forward_failures = 0;
};

struct ChainRecord {
  long iteration = 0;
  SamplingVector theta{};
  double loglik = 0.0;
  bool accepted_latent = false, accepted_meta = false;
};

/// Full state every latent_snapshot_every sweeps.
struct LatentSnapshot {
  long iteration = 0;
  SamplingVector theta{};
  Eigen::VectorXd xi;
};

struct ChainResult {
  std::vector<ChainRecord> records;      // kept sweeps (after burn-in, thinned)
  std::vector<LatentSnapshot> latent_snapshots;
  ChainState final_state;
  double acceptance_latent() const;
  double acceptance_meta() const;
  /// Accepted proposals over all block proposals.
  double acceptance_overall() const;
};

/// Log-likelihood of (theta, xi); nullopt signals a failed forward run.
using LogLikelihoodFn = std::function<std::optional<double>(const SamplingVector&, const Eigen::VectorXd&)>;

/// Called after every sweep with the current state (for logging or streaming).
using SweepObserver = std::function<void(const ChainState&, bool accepted_latent, bool accepted_meta)>;

/// Metropolis-within-Gibbs: pCN update of xi, then a Gaussian random walk on
/// theta with out-of-box proposals rejected before evaluation.
ChainResult run_chain(const LogLikelihoodFn& loglik, const PriorBox& prior, const McmcConfig& config,
                      const SamplingVector& theta0, const Eigen::VectorXd& xi0,
                      const SweepObserver& observer = {});

/// Forward map from (metaparameters, latent vector) to predicted measurements.
using ForwardFn = std::function<std::optional<Eigen::VectorXd>(const Metaparameters&, const LatentVector&)>;

ChainResult mcmc_run(const Eigen::VectorXd& d_obs, const ForwardFn& forward,
                     const ErrorCovariance& cov, const PriorBox& prior, const McmcConfig& config,
                     const SamplingVector& theta0, const Eigen::VectorXd& xi0,
                     const SweepObserver& observer = {});

// Diagnostics -------------------------------------------------------------------------

struct ParameterDiagnostics {
  double rhat = 0.0;  // rank-normalized split R-hat (max of bulk and folded)
  double ess = 0.0;   // bulk effective sample size
  double mean = 0.0, sd = 0.0;
  double q05 = 0.0, q50 = 0.0, q95 = 0.0;
  bool defined = true;  // false for zero-variance draws
};

/// chains[c][i]: draw i of chain c for one scalar parameter.
ParameterDiagnostics chain_diagnostics(const std::vector<std::vector<double>>& chains);

/// Effective sample size of split, rank-normalized chains.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// Plain split R-hat without rank normalization.
double split_rhat(const std::vector<std::vector<double>>& chains);

}  // namespace co2hm
