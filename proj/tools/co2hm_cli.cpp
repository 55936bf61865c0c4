#include <CLI11.hpp>

#include <iostream>

#include "co2hm/pipeline.hpp"

using namespace co2hm;

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity Bayesian history matching for CO2 storage"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 1;
  bool resume = false;
  std::string root;
  app.add_option("--config", config_path, "Configuration file (INI sections, strict keys)");
  app.add_option("--workers", workers, "Worker threads for case- and chain-level parallelism")->check(CLI::PositiveNumber);
  app.add_flag("--resume", resume, "Skip work whose artifacts already exist");
  app.add_option("--root", root, "Artifact root (default: $CO2HM_ARTIFACTS or ./artifacts)");

  auto* gen = app.add_subcommand("gen-prior", "PCA basis and prior case archive");
  auto* ens = app.add_subcommand("run-ensemble", "Forward runs for the prior cases");
  std::string fidelity = "both";
  ens->add_option("--fidelity", fidelity, "fast, hifi or both")->check(CLI::IsMember({"fast", "hifi", "both"}));
  auto* cov = app.add_subcommand("build-error-cov", "Model-error mean and covariance from paired runs");
  auto* obs = app.add_subcommand("synth-obs", "Truth simulation and noisy observations");

  std::string data = "both";
  bool no_model_error = false;
  auto* mcmc = app.add_subcommand("run-mcmc", "Metropolis-within-Gibbs sampling");
  auto* ana = app.add_subcommand("analyze", "Histograms, diagnostics, bands and medoids");
  for (auto* sub : {mcmc, ana}) {
    sub->add_option("--data", data, "surface, subsurface or both")->check(CLI::IsMember({"surface", "subsurface", "both"}));
    sub->add_flag("--no-model-error", no_model_error, "Likelihood with C_D only");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    Pipeline p(cfg, root.empty() ? default_artifact_root() : std::filesystem::path(root), workers, &std::cerr);
    if (gen->parsed()) {
      p.gen_prior(resume);
    } else if (ens->parsed()) {
      const auto s = p.run_ensemble(fidelity_from_string(fidelity), resume);
      std::cout << "completed " << s.completed << " failed " << s.failed << " skipped " << s.skipped << "\n";
      if (s.mean_wall_fast > 0 && s.mean_wall_hifi > 0)
        std::cout << "mean wall fast " << s.mean_wall_fast << " s, hifi " << s.mean_wall_hifi << " s, speedup "
                  << s.mean_wall_hifi / s.mean_wall_fast << "\n";
    } else if (cov->parsed()) {
      p.build_error_cov();
    } else if (obs->parsed()) {
      p.synth_obs(resume);
    } else if (mcmc->parsed()) {
      const auto s = p.run_mcmc(data_types_from_string(data), !no_model_error, resume);
      for (std::size_t c = 0; c < s.acceptance.size(); ++c)
        std::cout << "chain " << c << " acceptance " << s.acceptance[c] << " (xi " << s.acceptance_latent[c]
                  << ", theta " << s.acceptance_meta[c] << ")\n";
      std::cout << "max split R-hat " << s.max_rhat << "\n";
    } else if (ana->parsed()) {
      const auto s = p.analyze(data_types_from_string(data), !no_model_error);
      std::cout << "truth inside P5-P95 for " << s.truth_covered << " of " << Metaparameters::size
                << " metaparameters\n";
      for (int i = 0; i < Metaparameters::size; ++i) {
        const auto& d = s.diagnostics[static_cast<std::size_t>(i)];
        std::cout << "  " << Metaparameters::names()[static_cast<std::size_t>(i)] << ": truth "
                  << s.truth[static_cast<std::size_t>(i)] << " mean " << d.mean << " sd " << d.sd << " (prior "
                  << s.prior_sd[static_cast<std::size_t>(i)] << ") rhat " << d.rhat << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
