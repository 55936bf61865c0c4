#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "co2hm/forward.hpp"
#include "co2hm/inference.hpp"
#include "co2hm/io.hpp"

namespace co2hm {

// Configuration --------------------------------------------------------------------

/// Where the designated true model comes from.
struct TruthSpec {
  enum class Source { prior, explicit_values };
  enum class Field { pca, direct };
  Source source = Source::prior;
  Field field = Field::pca;
  std::uint64_t index = 0;     // stream index for prior draws
  Metaparameters meta;         // used with explicit_values
  std::optional<CorrelationLengths> corr;  // direct-field override
};

enum class ClusterFeature { log_permeability, saturation, uplift };

struct RunConfig {
  std::string experiment = "desk";
  std::uint64_t seed = 2024;
  ForwardSetup setup = ForwardSetup::desk_defaults();
  PriorBox prior;
  CorrelationLengths corr;
  int n_realizations = 300;  // fields behind the PCA basis
  int n_d = 64;
  int n_cases = 400;         // paired test cases for the model-error estimate
  MeasurementNoise noise;
  McmcConfig mcmc{.beta = 0.35};  // pCN step tuned for roughly 20% latent acceptance
  int chains = 4;
  bool bias_correction = true;  // add the mean model error to fast responses
  TruthSpec truth;
  int posterior_samples = 100;
  int medoids = 5;
  int histogram_bins = 20;
  ClusterFeature cluster_on = ClusterFeature::log_permeability;

  /// Resolved configuration as JSON; its hash tags every artifact.
  io::json to_json() const;
  std::string hash() const;
  void validate() const;
};

/// Parses a sectioned key=value file. Unknown sections or keys are errors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

// Pipeline stages ------------------------------------------------------------------

enum class Fidelity { fast, hifi, both };
enum class DataTypes { surface, subsurface, both };

const char* to_string(Fidelity f);
Fidelity fidelity_from_string(const std::string& s);
const char* to_string(DataTypes d);
DataTypes data_types_from_string(const std::string& s);

struct EnsembleSummary {
  int completed = 0, failed = 0, skipped = 0;
  double mean_wall_fast = 0.0, mean_wall_hifi = 0.0;
};

struct McmcSummary {
  std::string tag;
  std::vector<double> acceptance;  // overall, per chain
  std::vector<double> acceptance_latent, acceptance_meta;
  std::vector<ParameterDiagnostics> diagnostics;  // per metaparameter
  double max_rhat = 0.0;
};

struct AnalysisSummary {
  std::string tag;
  std::vector<ParameterDiagnostics> diagnostics;
  SamplingVector truth{};
  SamplingVector prior_sd{};
  int truth_covered = 0;  // metaparameters with truth inside P5-P95
  double acceptance = 0.0;
  std::vector<int> medoids;
};

/// Artifact root: $CO2HM_ARTIFACTS when set, else ./artifacts.
std::filesystem::path default_artifact_root();

class Pipeline {
 public:
  Pipeline(RunConfig config, std::filesystem::path root, int workers = 1, std::ostream* log = nullptr);

  const RunConfig& config() const { return cfg_; }
  std::filesystem::path dir() const { return root_ / cfg_.experiment; }
  const ForwardModel& model() const { return model_; }

  /// PCA basis plus n_cases prior draws (metaparameters and latent vectors).
  void gen_prior(bool resume = false);
  /// Paired responses for the prior cases; completed cases are skipped on resume.
  EnsembleSummary run_ensemble(Fidelity fidelity, bool resume = false);
  /// Mean model error and C_surr from cases present in both fidelities.
  void build_error_cov();
  /// Truth model, its full-horizon high-fidelity run and noisy observations.
  void synth_obs(bool resume = false);
  McmcSummary run_mcmc(DataTypes data, bool model_error, bool resume = false);
  AnalysisSummary analyze(DataTypes data, bool model_error);

  static std::string run_tag(DataTypes data, bool model_error);

  // building blocks shared with tests
  PcaBasis load_pca() const;
  Geomodel fine_geomodel(const Metaparameters& meta, const Eigen::VectorXd& xi, const PcaBasis& pca) const;
  Metaparameters truth_metaparameters() const;

 private:
  void log(const std::string& line) const;
  io::json manifest_base(const std::string& stage) const;
  void for_each_parallel(int n, const std::function<void(int)>& fn) const;

  RunConfig cfg_;
  std::filesystem::path root_;
  int workers_;
  std::ostream* log_;
  ForwardModel model_;
};

}  // namespace co2hm
