#include "co2hm/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "co2hm/posterior.hpp"

namespace co2hm {

namespace fs = std::filesystem;
using io::json;

namespace {

std::string lower_case(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string case_name(int c) {
  std::ostringstream os;
  os << "case_" << std::setw(5) << std::setfill('0') << c;
  return os.str();
}

Eigen::VectorXd standard_normal(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

json sampling_json(const SamplingVector& v) {
  json j;
  for (int i = 0; i < Metaparameters::size; ++i) j[Metaparameters::names()[static_cast<std::size_t>(i)]] = v[static_cast<std::size_t>(i)];
  return j;
}

SamplingVector sampling_from_json(const json& j) {
  SamplingVector v{};
  for (int i = 0; i < Metaparameters::size; ++i)
    v[static_cast<std::size_t>(i)] = j.at(Metaparameters::names()[static_cast<std::size_t>(i)]).get<double>();
  return v;
}

json grid_json(const GridSpec& g) {
  return {{"nx", g.nx}, {"ny", g.ny}, {"nz", g.nz}, {"dx", g.dx}, {"dy", g.dy}, {"dz", g.dz},
          {"depth_top", g.depth_top}, {"boundary_pv_multiplier", g.boundary_pv_multiplier},
          {"ring_width", g.ring_width}};
}

/// Unit-annotated CSV column names for the sampling coordinates.
const std::array<const char*, Metaparameters::size>& sampling_headers() {
  static const std::array<const char*, Metaparameters::size> h{
      "mu_logk[ln_md]", "sigma_logk[-]", "log10_a_r[-]", "d[-]", "e[-]", "E_s[Pa]", "E_o[Pa]"};
  return h;
}

}  // namespace

// Configuration ---------------------------------------------------------------------

io::json RunConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["grid"] = {{"fine", grid_json(setup.fine)}, {"coarse", grid_json(setup.coarse)}};
  json prior_j;
  for (int i = 0; i < Metaparameters::size; ++i)
    prior_j[Metaparameters::names()[static_cast<std::size_t>(i)]] = {prior.lower[static_cast<std::size_t>(i)], prior.upper[static_cast<std::size_t>(i)]};
  j["prior"] = prior_j;
  j["geostat"] = {{"lh", corr.lx}, {"lv", corr.lz}, {"n_realizations", n_realizations}, {"n_d", n_d}};
  j["ensemble"] = {{"n_cases", n_cases}, {"upscaling", to_string(setup.upscaling)}};
  j["noise"] = {{"sigma_sat", noise.sigma_sat}, {"sigma_p", noise.sigma_p}, {"sigma_uplift", noise.sigma_uplift}};
  j["mcmc"] = {{"beta", mcmc.beta},
               {"sigma_fraction", mcmc.sigma_fraction},
               {"sweeps", mcmc.sweeps},
               {"burn_in_fraction", mcmc.burn_in_fraction},
               {"thin", mcmc.thin},
               {"pcn_variant", to_string(mcmc.pcn_variant)},
               {"snapshot_every", mcmc.latent_snapshot_every},
               {"chains", chains},
               {"bias_correction", bias_correction}};
  json t;
  t["source"] = truth.source == TruthSpec::Source::prior ? "prior" : "explicit";
  t["field"] = truth.field == TruthSpec::Field::pca ? "pca" : "direct";
  t["index"] = truth.index;
  if (truth.source == TruthSpec::Source::explicit_values) t["meta"] = sampling_json(truth.meta.to_sampling());
  if (truth.corr) t["corr"] = {truth.corr->lx, truth.corr->lz};
  j["truth"] = t;
  const char* cl = cluster_on == ClusterFeature::log_permeability ? "logk"
                   : cluster_on == ClusterFeature::saturation      ? "saturation"
                                                                   : "uplift";
  j["analysis"] = {{"posterior_samples", posterior_samples}, {"medoids", medoids},
                   {"histogram_bins", histogram_bins}, {"cluster_on", cl}};
  return j;
}

std::string RunConfig::hash() const { return io::fnv1a_hex(to_json().dump()); }

void RunConfig::validate() const {
  if (experiment.empty() || experiment.find('/') != std::string::npos)
    throw DomainError("experiment name must be a nonempty single path component");
  setup.fine.validate();
  setup.coarse.validate();
  for (int i = 0; i < Metaparameters::size; ++i)
    if (!(prior.upper[static_cast<std::size_t>(i)] > prior.lower[static_cast<std::size_t>(i)]))
      throw DomainError(std::string("empty prior interval for ") + Metaparameters::names()[static_cast<std::size_t>(i)]);
  if (n_realizations < 2) throw DomainError("n_realizations must be at least 2");
  if (n_d < 1 || n_d > n_realizations - 1) throw DomainError("n_d must lie in [1, n_realizations - 1]");
  if (n_cases < 0) throw DomainError("n_cases must be non-negative");
  noise.validate();
  mcmc.validate();
  if (chains < 1) throw DomainError("chains must be at least 1");
  if (posterior_samples < 1 || medoids < 1 || histogram_bins < 1)
    throw DomainError("analysis counts must be positive");
  if (medoids > posterior_samples) throw DomainError("medoids exceed posterior_samples");
  if (truth.source == TruthSpec::Source::explicit_values) prior.validate(truth.meta);
}

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"experiment", {"name", "seed"}},
      {"grid", {"fine_nx", "fine_ny", "fine_nz", "fine_dx", "fine_dy", "fine_dz", "depth_top",
                "pv_multiplier", "coarse_nx", "coarse_ny", "coarse_nz"}},
      {"geostat", {"lh", "lv", "n_realizations", "n_d"}},
      {"prior", {"mu_logk", "sigma_logk", "log10_a_r", "d", "e", "E_s_gpa", "E_o_gpa"}},
      {"ensemble", {"n_cases", "upscaling"}},
      {"noise", {"sigma_sat", "sigma_p_mpa", "sigma_uplift_cm"}},
      {"mcmc", {"beta", "sigma_fraction", "sweeps", "burn_in_fraction", "thin", "pcn_variant", "chains",
                "snapshot_every", "bias_correction"}},
      {"truth", {"source", "index", "field", "lh", "lv", "mu_logk", "sigma_logk", "a_r", "d", "e",
                 "E_s_gpa", "E_o_gpa"}},
      {"analysis", {"posterior_samples", "medoids", "histogram_bins", "cluster_on"}},
  };
  return k;
}

template <class T>
T value_as(const pt::ptree& sec, const std::string& section, const std::string& key) {
  const std::string raw = sec.get<std::string>(key);
  std::istringstream is(raw);
  T v{};
  if (!(is >> v) || !(is >> std::ws).eof())
    throw DomainError("config [" + section + "] " + key + ": cannot parse '" + raw + "'");
  return v;
}

bool bool_value(const pt::ptree& sec, const std::string& section, const std::string& key) {
  const std::string raw = lower_case(sec.get<std::string>(key));
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw DomainError("config [" + section + "] " + key + ": expected a boolean, got '" + raw + "'");
}

std::pair<double, double> interval_value(const pt::ptree& sec, const std::string& section,
                                         const std::string& key) {
  std::string raw = sec.get<std::string>(key);
  for (char& c : raw)
    if (c == ',') c = ' ';
  std::istringstream is(raw);
  double a = 0, b = 0;
  if (!(is >> a >> b) || !(is >> std::ws).eof())
    throw DomainError("config [" + section + "] " + key + ": expected 'lower, upper'");
  return {a, b};
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DomainError(std::string("config syntax error: ") + e.what());
  }
  const auto& allowed = allowed_keys();
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) {
      if (body.empty() && !body.data().empty())
        throw DomainError("config key '" + section + "' outside any section");
      throw DomainError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw DomainError("unknown config key [" + section + "] " + key);
      (void)value;
    }
  }

  RunConfig c;
  auto sec = [&](const std::string& s) -> const pt::ptree* {
    const auto o = tree.get_child_optional(s);
    return o ? &*o : nullptr;
  };
  auto has = [](const pt::ptree* s, const std::string& k) { return s && s->count(k) > 0; };

  if (const auto* s = sec("experiment")) {
    if (has(s, "name")) c.experiment = s->get<std::string>("name");
    if (has(s, "seed")) c.seed = value_as<std::uint64_t>(*s, "experiment", "seed");
  }

  bool grid_changed = false;
  if (const auto* s = sec("grid")) {
    GridSpec& f = c.setup.fine;
    auto geti = [&](const char* k, int& v) {
      if (has(s, k)) v = value_as<int>(*s, "grid", k), grid_changed = true;
    };
    auto getd = [&](const char* k, double& v) {
      if (has(s, k)) v = value_as<double>(*s, "grid", k), grid_changed = true;
    };
    geti("fine_nx", f.nx);
    geti("fine_ny", f.ny);
    geti("fine_nz", f.nz);
    getd("fine_dx", f.dx);
    getd("fine_dy", f.dy);
    getd("fine_dz", f.dz);
    getd("depth_top", f.depth_top);
    getd("pv_multiplier", f.boundary_pv_multiplier);
    int cnx = c.setup.coarse.nx, cny = c.setup.coarse.ny, cnz = c.setup.coarse.nz;
    geti("coarse_nx", cnx);
    geti("coarse_ny", cny);
    geti("coarse_nz", cnz);
    if (grid_changed) {
      f.validate();
      GridSpec g = f;
      g.nx = cnx;
      g.ny = cny;
      g.nz = cnz;
      g.dx = f.dx * f.nx / cnx;
      g.dy = f.dy * f.ny / cny;
      g.dz = f.dz * f.nz / cnz;
      g.ring_width = f.ring_width > 0 ? f.ring_width : f.dx;
      c.setup.coarse = g;
      c.setup.injectors = default_injectors(f);
      c.setup.layout = default_observation_layout(f);
    }
  }

  if (const auto* s = sec("geostat")) {
    if (has(s, "lh")) c.corr.lx = c.corr.ly = value_as<double>(*s, "geostat", "lh");
    if (has(s, "lv")) c.corr.lz = value_as<double>(*s, "geostat", "lv");
    if (has(s, "n_realizations")) c.n_realizations = value_as<int>(*s, "geostat", "n_realizations");
    if (has(s, "n_d")) c.n_d = value_as<int>(*s, "geostat", "n_d");
  }

  if (const auto* s = sec("prior")) {
    static const std::array<const char*, Metaparameters::size> keys{
        "mu_logk", "sigma_logk", "log10_a_r", "d", "e", "E_s_gpa", "E_o_gpa"};
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (!has(s, keys[i])) continue;
      auto [lo, hi] = interval_value(*s, "prior", keys[i]);
      const double scale = i >= 5 ? units::GPa : 1.0;
      c.prior.lower[i] = lo * scale;
      c.prior.upper[i] = hi * scale;
    }
  }

  if (const auto* s = sec("ensemble")) {
    if (has(s, "n_cases")) c.n_cases = value_as<int>(*s, "ensemble", "n_cases");
    if (has(s, "upscaling"))
      c.setup.upscaling = permeability_averaging_from_string(s->get<std::string>("upscaling"));
  }

  if (const auto* s = sec("noise")) {
    if (has(s, "sigma_sat")) c.noise.sigma_sat = value_as<double>(*s, "noise", "sigma_sat");
    if (has(s, "sigma_p_mpa")) c.noise.sigma_p = value_as<double>(*s, "noise", "sigma_p_mpa") * units::MPa;
    if (has(s, "sigma_uplift_cm"))
      c.noise.sigma_uplift = value_as<double>(*s, "noise", "sigma_uplift_cm") * units::cm;
  }

  if (const auto* s = sec("mcmc")) {
    if (has(s, "beta")) c.mcmc.beta = value_as<double>(*s, "mcmc", "beta");
    if (has(s, "sigma_fraction")) c.mcmc.sigma_fraction = value_as<double>(*s, "mcmc", "sigma_fraction");
    if (has(s, "sweeps")) c.mcmc.sweeps = value_as<int>(*s, "mcmc", "sweeps");
    if (has(s, "burn_in_fraction")) c.mcmc.burn_in_fraction = value_as<double>(*s, "mcmc", "burn_in_fraction");
    if (has(s, "thin")) c.mcmc.thin = value_as<int>(*s, "mcmc", "thin");
    if (has(s, "pcn_variant")) c.mcmc.pcn_variant = pcn_variant_from_string(s->get<std::string>("pcn_variant"));
    if (has(s, "chains")) c.chains = value_as<int>(*s, "mcmc", "chains");
    if (has(s, "snapshot_every")) c.mcmc.latent_snapshot_every = value_as<int>(*s, "mcmc", "snapshot_every");
    if (has(s, "bias_correction")) c.bias_correction = bool_value(*s, "mcmc", "bias_correction");
  }

  if (const auto* s = sec("truth")) {
    if (has(s, "source")) {
      const std::string v = s->get<std::string>("source");
      if (v == "prior") c.truth.source = TruthSpec::Source::prior;
      else if (v == "explicit") c.truth.source = TruthSpec::Source::explicit_values;
      else throw DomainError("config [truth] source must be prior or explicit");
    }
    if (has(s, "field")) {
      const std::string v = s->get<std::string>("field");
      if (v == "pca") c.truth.field = TruthSpec::Field::pca;
      else if (v == "direct") c.truth.field = TruthSpec::Field::direct;
      else throw DomainError("config [truth] field must be pca or direct");
    }
    if (has(s, "index")) c.truth.index = value_as<std::uint64_t>(*s, "truth", "index");
    if (has(s, "lh") || has(s, "lv")) {
      CorrelationLengths cl = c.corr;
      if (has(s, "lh")) cl.lx = cl.ly = value_as<double>(*s, "truth", "lh");
      if (has(s, "lv")) cl.lz = value_as<double>(*s, "truth", "lv");
      c.truth.corr = cl;
    }
    const bool any_meta = has(s, "mu_logk") || has(s, "sigma_logk") || has(s, "a_r") || has(s, "d") ||
                          has(s, "e") || has(s, "E_s_gpa") || has(s, "E_o_gpa");
    if (any_meta && c.truth.source != TruthSpec::Source::explicit_values)
      throw DomainError("config [truth] metaparameter values need source = explicit");
    Metaparameters& m = c.truth.meta;
    if (has(s, "mu_logk")) m.mu_logk = value_as<double>(*s, "truth", "mu_logk");
    if (has(s, "sigma_logk")) m.sigma_logk = value_as<double>(*s, "truth", "sigma_logk");
    if (has(s, "a_r")) m.a_r = value_as<double>(*s, "truth", "a_r");
    if (has(s, "d")) m.d = value_as<double>(*s, "truth", "d");
    if (has(s, "e")) m.e = value_as<double>(*s, "truth", "e");
    if (has(s, "E_s_gpa")) m.E_s = value_as<double>(*s, "truth", "E_s_gpa") * units::GPa;
    if (has(s, "E_o_gpa")) m.E_o = value_as<double>(*s, "truth", "E_o_gpa") * units::GPa;
  }

  if (const auto* s = sec("analysis")) {
    if (has(s, "posterior_samples")) c.posterior_samples = value_as<int>(*s, "analysis", "posterior_samples");
    if (has(s, "medoids")) c.medoids = value_as<int>(*s, "analysis", "medoids");
    if (has(s, "histogram_bins")) c.histogram_bins = value_as<int>(*s, "analysis", "histogram_bins");
    if (has(s, "cluster_on")) {
      const std::string v = s->get<std::string>("cluster_on");
      if (v == "logk") c.cluster_on = ClusterFeature::log_permeability;
      else if (v == "saturation") c.cluster_on = ClusterFeature::saturation;
      else if (v == "uplift") c.cluster_on = ClusterFeature::uplift;
      else throw DomainError("config [analysis] cluster_on must be logk, saturation or uplift");
    }
  }

  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  io::require(path);
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

// Enumerations ------------------------------------------------------------------------

const char* to_string(Fidelity f) {
  switch (f) {
    case Fidelity::fast: return "fast";
    case Fidelity::hifi: return "hifi";
    case Fidelity::both: return "both";
  }
  return "?";
}

Fidelity fidelity_from_string(const std::string& s) {
  if (s == "fast") return Fidelity::fast;
  if (s == "hifi") return Fidelity::hifi;
  if (s == "both") return Fidelity::both;
  throw DomainError("fidelity must be fast, hifi or both");
}

const char* to_string(DataTypes d) {
  switch (d) {
    case DataTypes::surface: return "surface";
    case DataTypes::subsurface: return "subsurface";
    case DataTypes::both: return "both";
  }
  return "?";
}

DataTypes data_types_from_string(const std::string& s) {
  if (s == "surface") return DataTypes::surface;
  if (s == "subsurface") return DataTypes::subsurface;
  if (s == "both") return DataTypes::both;
  throw DomainError("data must be surface, subsurface or both");
}

fs::path default_artifact_root() {
  if (const char* env = std::getenv("CO2HM_ARTIFACTS"); env && *env) return fs::path(env);
  return fs::path("artifacts");
}

// Pipeline -----------------------------------------------------------------------------

Pipeline::Pipeline(RunConfig config, fs::path root, int workers, std::ostream* log)
    : cfg_(std::move(config)), root_(std::move(root)), workers_(std::max(1, workers)), log_(log),
      model_(cfg_.setup) {
  cfg_.validate();
}

std::string Pipeline::run_tag(DataTypes data, bool model_error) {
  return std::string(to_string(data)) + (model_error ? "_ctot" : "_cd");
}

void Pipeline::log(const std::string& line) const {
  if (!log_) return;
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  (*log_) << "[" << cfg_.experiment << "] " << line << std::endl;
}

io::json Pipeline::manifest_base(const std::string& stage) const {
  return {{"stage", stage}, {"config_hash", cfg_.hash()}, {"code_version", CO2HM_VERSION},
          {"seed", cfg_.seed}, {"config", cfg_.to_json()}};
}

void Pipeline::for_each_parallel(int n, const std::function<void(int)>& fn) const {
  if (n <= 0) return;
  const int nt = std::min(workers_, n);
  if (nt == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex em;
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(em);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

PcaBasis Pipeline::load_pca() const {
  PcaBasis pca;
  pca.basis = io::read_matrix(dir() / "pca" / "basis.bin");
  pca.mean_field = io::read_matrix(dir() / "pca" / "mean.bin").col(0);
  pca.singular_values = io::read_matrix(dir() / "pca" / "singular_values.bin").col(0);
  return pca;
}

Geomodel Pipeline::fine_geomodel(const Metaparameters& meta, const Eigen::VectorXd& xi,
                                 const PcaBasis& pca) const {
  const Eigen::VectorXd y = generate_pca_realization(pca, LatentVector{xi});
  return assemble_geomodel(meta, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                           cfg_.setup.fine, cfg_.prior, cfg_.setup.fixed);
}

Metaparameters Pipeline::truth_metaparameters() const {
  if (cfg_.truth.source == TruthSpec::Source::explicit_values) return cfg_.truth.meta;
  return sample_prior_metaparameters(derive_seed(derive_seed(cfg_.seed, "truth-meta"), cfg_.truth.index),
                                     cfg_.prior);
}

void Pipeline::gen_prior(bool resume) {
  const fs::path pdir = dir() / "pca";
  const fs::path cdir = dir() / "prior";
  const bool pca_done = fs::exists(pdir / "manifest.json") &&
                        io::read_json(pdir / "manifest.json").value("config_hash", "") == cfg_.hash();
  if (!(resume && pca_done)) {
    const GridSpec& f = cfg_.setup.fine;
    log("sampling " + std::to_string(cfg_.n_realizations) + " Gaussian fields for the PCA basis");
    const GaussianFieldSampler sampler(f.nx, f.ny, f.nz, cfg_.corr);
    Eigen::MatrixXd R(f.aquifer_cells(), cfg_.n_realizations);
    const std::uint64_t base = derive_seed(cfg_.seed, "pca-field");
    for (int r = 0; r < cfg_.n_realizations; ++r) R.col(r) = sampler.sample(derive_seed(base, static_cast<std::uint64_t>(r)));
    const PcaBasis pca = build_pca_basis(R, cfg_.n_d);
    io::write_matrix(pdir / "basis.bin", pca.basis);
    io::write_matrix(pdir / "mean.bin", pca.mean_field);
    io::write_matrix(pdir / "singular_values.bin", pca.singular_values);
    json m = manifest_base("gen-prior/pca");
    m["n_s"] = pca.n_s();
    m["n_d"] = pca.n_d();
    m["corr_lengths_cells"] = {cfg_.corr.lx, cfg_.corr.ly, cfg_.corr.lz};
    m["grid"] = grid_json(f);
    m["field_seed_base"] = base;
    const double total = (R.colwise() - pca.mean_field).squaredNorm() / (cfg_.n_realizations - 1);
    m["retained_variance_fraction"] = total > 0 ? pca.basis.squaredNorm() / total : 0.0;
    io::write_json(pdir / "manifest.json", m);
  }

  Eigen::MatrixXd X(cfg_.n_d, cfg_.n_cases);
  json cases = json::array();
  const std::uint64_t meta_base = derive_seed(cfg_.seed, "case-meta");
  const std::uint64_t xi_base = derive_seed(cfg_.seed, "case-xi");
  for (int c = 0; c < cfg_.n_cases; ++c) {
    const auto ms = derive_seed(meta_base, static_cast<std::uint64_t>(c));
    const auto xs = derive_seed(xi_base, static_cast<std::uint64_t>(c));
    const Metaparameters meta = sample_prior_metaparameters(ms, cfg_.prior);
    X.col(c) = standard_normal(cfg_.n_d, xs);
    cases.push_back({{"case", c}, {"meta_seed", ms}, {"xi_seed", xs}, {"meta", sampling_json(meta.to_sampling())}});
  }
  io::write_matrix(cdir / "xi.bin", X);
  json m = manifest_base("gen-prior");
  m["n_cases"] = cfg_.n_cases;
  m["cases"] = cases;
  io::write_json(cdir / "manifest.json", m);
  log("prior archive: " + std::to_string(cfg_.n_cases) + " cases");
}

EnsembleSummary Pipeline::run_ensemble(Fidelity fidelity, bool resume) {
  const json prior = io::read_json(dir() / "prior" / "manifest.json");
  const Eigen::MatrixXd X = io::read_matrix(dir() / "prior" / "xi.bin");
  const PcaBasis pca = load_pca();
  const int n = prior.at("n_cases").get<int>();

  std::vector<Fidelity> fids;
  if (fidelity != Fidelity::hifi) fids.push_back(Fidelity::fast);
  if (fidelity != Fidelity::fast) fids.push_back(Fidelity::hifi);

  EnsembleSummary summary;
  for (Fidelity fid : fids) {
    const fs::path edir = dir() / "ensemble" / to_string(fid);
    fs::create_directories(edir);
    std::atomic<int> done{0}, failed{0}, skipped{0};
    for_each_parallel(n, [&](int c) {
      const fs::path meta_path = edir / (case_name(c) + ".json");
      if (resume && fs::exists(meta_path)) {
        ++skipped;
        return;
      }
      const Metaparameters meta = Metaparameters::from_sampling(sampling_from_json(prior["cases"][static_cast<std::size_t>(c)]["meta"]));
      json cj = {{"case", c}, {"fidelity", to_string(fid)}};
      try {
        const Geomodel g = fine_geomodel(meta, X.col(c), pca);
        const ForwardRun r = fid == Fidelity::fast ? model_.run_fast_model(g, Horizon::history)
                                                   : model_.run_high_fidelity(g, Horizon::history);
        cj["wall_seconds"] = r.wall_seconds;
        cj["converged"] = r.converged();
        cj["steps"] = r.sim.stats.steps;
        cj["newton_iterations"] = r.sim.stats.newton_iterations;
        cj["cuts"] = r.sim.stats.cuts;
        if (r.converged()) {
          io::write_matrix(edir / (case_name(c) + ".bin"), observe(r.series, cfg_.setup.layout).obs);
          ++done;
        } else {
          cj["failure"] = r.sim.failure;
          ++failed;
        }
      } catch (const Error& e) {
        cj["converged"] = false;
        cj["failure"] = e.what();
        ++failed;
      }
      io::write_json(meta_path, cj);
      log(std::string(to_string(fid)) + " " + case_name(c) + (cj["converged"].get<bool>() ? " ok" : " FAILED") +
          (cj.contains("wall_seconds") ? " (" + std::to_string(cj["wall_seconds"].get<double>()) + " s)" : ""));
    });

    // aggregate over everything on disk, including cases from earlier runs
    json mcases = json::array(), failures = json::array();
    std::vector<Eigen::VectorXd> rows;
    double wall = 0.0;
    int timed = 0;
    for (int c = 0; c < n; ++c) {
      const fs::path meta_path = edir / (case_name(c) + ".json");
      if (!fs::exists(meta_path)) continue;
      const json cj = io::read_json(meta_path);
      if (cj.contains("wall_seconds")) {
        wall += cj["wall_seconds"].get<double>();
        ++timed;
      }
      if (cj["converged"].get<bool>()) {
        rows.push_back(io::read_matrix(edir / (case_name(c) + ".bin")).col(0));
        mcases.push_back(c);
      } else {
        failures.push_back({{"case", c}, {"reason", cj.value("failure", "")}});
      }
    }
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), cfg_.setup.layout.n_m());
    for (std::size_t r = 0; r < rows.size(); ++r) M.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    io::write_matrix(edir / "responses.bin", M);
    json m = manifest_base("run-ensemble");
    m["fidelity"] = to_string(fid);
    m["horizon_yr"] = cfg_.setup.layout.history_times_yr.back();
    m["cases"] = mcases;
    m["failures"] = failures;
    m["n_archive"] = n;
    m["n_completed"] = mcases.size();
    m["mean_wall_seconds"] = timed ? wall / timed : 0.0;
    io::write_json(edir / "manifest.json", m);
    (fid == Fidelity::fast ? summary.mean_wall_fast : summary.mean_wall_hifi) = timed ? wall / timed : 0.0;
    summary.completed += done;
    summary.failed += failed;
    summary.skipped += skipped;
  }

  if (fs::exists(dir() / "ensemble" / "fast" / "manifest.json") &&
      fs::exists(dir() / "ensemble" / "hifi" / "manifest.json")) {
    const double wf = io::read_json(dir() / "ensemble" / "fast" / "manifest.json")["mean_wall_seconds"].get<double>();
    const double wh = io::read_json(dir() / "ensemble" / "hifi" / "manifest.json")["mean_wall_seconds"].get<double>();
    json m = manifest_base("run-ensemble/timing");
    m["mean_wall_seconds_fast"] = wf;
    m["mean_wall_seconds_hifi"] = wh;
    m["speedup"] = wf > 0 ? wh / wf : 0.0;
    io::write_json(dir() / "ensemble" / "timing.json", m);
    if (summary.mean_wall_fast == 0.0) summary.mean_wall_fast = wf;
    if (summary.mean_wall_hifi == 0.0) summary.mean_wall_hifi = wh;
  }
  return summary;
}

void Pipeline::build_error_cov() {
  const fs::path fdir = dir() / "ensemble" / "fast";
  const fs::path hdir = dir() / "ensemble" / "hifi";
  const json fm = io::read_json(fdir / "manifest.json");
  const json hm = io::read_json(hdir / "manifest.json");
  const Eigen::MatrixXd F = io::read_matrix(fdir / "responses.bin");
  const Eigen::MatrixXd H = io::read_matrix(hdir / "responses.bin");
  std::map<int, int> frow, hrow;
  for (std::size_t r = 0; r < fm["cases"].size(); ++r) frow[fm["cases"][r].get<int>()] = static_cast<int>(r);
  for (std::size_t r = 0; r < hm["cases"].size(); ++r) hrow[hm["cases"][r].get<int>()] = static_cast<int>(r);
  std::vector<int> paired;
  for (const auto& [c, r] : frow)
    if (hrow.count(c)) paired.push_back(c);
  const int n_m = cfg_.setup.layout.n_m();
  Eigen::MatrixXd hifi(n_m, static_cast<Eigen::Index>(paired.size()));
  Eigen::MatrixXd fast(n_m, static_cast<Eigen::Index>(paired.size()));
  for (std::size_t k = 0; k < paired.size(); ++k) {
    hifi.col(static_cast<Eigen::Index>(k)) = H.row(hrow[paired[k]]).transpose();
    fast.col(static_cast<Eigen::Index>(k)) = F.row(frow[paired[k]]).transpose();
  }
  const ModelErrorEstimate est = build_model_error_covariance(hifi, fast);
  const fs::path odir = dir() / "errorcov";
  io::write_matrix(odir / "epsilon_bar.bin", est.epsilon_bar);
  io::write_matrix(odir / "C_surr.bin", est.C_surr);
  io::write_matrix(odir / "D.bin", est.D);
  const auto [lo, hi] = eigenvalue_range(est.C_surr);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(est.D);
  svd.setThreshold(1e-10);
  json m = manifest_base("build-error-cov");
  m["n_e"] = paired.size();
  m["cases"] = paired;
  m["min_eigenvalue"] = lo;
  m["max_eigenvalue"] = hi;
  m["rank"] = svd.rank();
  // per-block error summaries in physical units
  const ObservationLayout& L = cfg_.setup.layout;
  const int nt = L.n_history_times();
  const int ns = L.n_saturation_points() * nt, np = L.n_pressure_points() * nt;
  const Eigen::MatrixXd eps = hifi - fast;
  auto block = [&](int a, int len) {
    const Eigen::MatrixXd b = eps.middleRows(a, len);
    const double mean = b.mean();
    const double sd = std::sqrt((b.array() - mean).square().sum() / std::max<Eigen::Index>(1, b.size() - 1));
    return json{{"mean", mean}, {"sd", sd}};
  };
  m["error_saturation"] = block(0, ns);
  m["error_pressure_Pa"] = block(ns, np);
  m["error_uplift_m"] = block(ns + np, n_m - ns - np);
  io::write_json(odir / "manifest.json", m);
  log("model-error covariance from " + std::to_string(paired.size()) + " paired cases");
}

void Pipeline::synth_obs(bool resume) {
  const fs::path tdir = dir() / "truth";
  if (resume && fs::exists(tdir / "manifest.json") &&
      io::read_json(tdir / "manifest.json").value("config_hash", "") == cfg_.hash()) {
    log("truth artifacts present, skipping");
    return;
  }
  const Metaparameters meta = truth_metaparameters();
  cfg_.prior.validate(meta);
  const GridSpec& f = cfg_.setup.fine;
  Eigen::VectorXd y;
  Eigen::VectorXd xi;
  if (cfg_.truth.field == TruthSpec::Field::pca) {
    const PcaBasis pca = load_pca();
    xi = standard_normal(pca.n_d(), derive_seed(derive_seed(cfg_.seed, "truth-xi"), cfg_.truth.index));
    y = generate_pca_realization(pca, LatentVector{xi});
  } else {
    y = sample_gaussian_field(f, cfg_.truth.corr.value_or(cfg_.corr),
                              derive_seed(derive_seed(cfg_.seed, "truth-field"), cfg_.truth.index));
  }
  const Geomodel g = assemble_geomodel(meta, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                                       f, cfg_.prior, cfg_.setup.fixed);
  log("running the high-fidelity truth model");
  const ForwardRun r = model_.run_high_fidelity(g, Horizon::full);
  if (!r.converged()) throw Error("truth simulation failed: " + r.sim.failure);
  const Eigen::VectorXd d_true = observe(r.series, cfg_.setup.layout).obs;
  MeasurementNoise noise = cfg_.noise;
  noise.seed = derive_seed(cfg_.seed, "obs-noise");
  const Eigen::VectorXd d_obs = synthesize_observations(d_true, cfg_.setup.layout, noise);

  io::write_matrix(tdir / "y.bin", y);
  if (xi.size()) io::write_matrix(tdir / "xi.bin", xi);
  io::write_matrix(tdir / "d_true.bin", d_true);
  io::write_matrix(tdir / "d_obs.bin", d_obs);
  io::write_matrix(tdir / "saturation.bin", r.series.saturation);
  io::write_matrix(tdir / "pressure.bin", r.series.pressure);
  io::write_matrix(tdir / "uplift.bin", r.series.uplift);
  json m = manifest_base("synth-obs");
  m["meta"] = sampling_json(meta.to_sampling());
  m["field"] = cfg_.truth.field == TruthSpec::Field::pca ? "pca" : "direct";
  m["noise_seed"] = noise.seed;
  m["times_yr"] = r.series.times_yr;
  m["n_m"] = d_obs.size();
  m["wall_seconds"] = r.wall_seconds;
  io::write_json(tdir / "manifest.json", m);

  io::CsvWriter csv(tdir / "observations.csv", {"index", "block", "d_true[frac|Pa|m]", "d_obs[frac|Pa|m]"});
  const ObservationLayout& L = cfg_.setup.layout;
  const int nt = L.n_history_times();
  const int ns = L.n_saturation_points() * nt, np = L.n_pressure_points() * nt;
  for (int i = 0; i < d_obs.size(); ++i) {
    csv << i << std::string(i < ns ? "saturation" : i < ns + np ? "pressure" : "uplift") << d_true[i] << d_obs[i];
    csv.end_row();
  }
}

McmcSummary Pipeline::run_mcmc(DataTypes data, bool model_error, bool resume) {
  const std::string tag = run_tag(data, model_error);
  const fs::path mdir = dir() / "mcmc" / tag;
  fs::create_directories(mdir);
  const PcaBasis pca = load_pca();
  const Eigen::VectorXd d_obs_full = io::read_matrix(dir() / "truth" / "d_obs.bin").col(0);
  const ObservationLayout& L = cfg_.setup.layout;
  const Eigen::VectorXd c_d = build_measurement_covariance(L, cfg_.noise);
  Eigen::MatrixXd C_surr;
  Eigen::VectorXd eps_bar = Eigen::VectorXd::Zero(L.n_m());
  if (model_error || cfg_.bias_correction) {
    C_surr = io::read_matrix(dir() / "errorcov" / "C_surr.bin");
    eps_bar = io::read_matrix(dir() / "errorcov" / "epsilon_bar.bin").col(0);
  }
  if (!cfg_.bias_correction) eps_bar.setZero();
  const std::vector<int> idx =
      data_selection(L, data != DataTypes::surface, data != DataTypes::subsurface);
  const ErrorCovariance cov = ErrorCovariance(c_d, C_surr, model_error).subset(idx);
  const Eigen::VectorXd d_obs = select(d_obs_full, idx);

  const ForwardFn forward = [&](const Metaparameters& meta, const LatentVector& xi) -> std::optional<Eigen::VectorXd> {
    const Geomodel g = fine_geomodel(meta, xi.xi, pca);
    const ForwardRun r = model_.run_fast_model(g, Horizon::history);
    if (!r.converged()) return std::nullopt;
    return select(observe(r.series, L).obs + eps_bar, idx);
  };

  const std::uint64_t chain_base = derive_seed(cfg_.seed, "mcmc");
  SamplingVector theta0 = cfg_.prior.center();
  const Eigen::VectorXd xi0 = Eigen::VectorXd::Zero(pca.n_d());

  for_each_parallel(cfg_.chains, [&](int c) {
    const fs::path state = mdir / ("chain_" + std::to_string(c) + ".json");
    if (resume && fs::exists(state) && io::read_json(state).value("complete", false) &&
        io::read_json(state).value("config_hash", "") == cfg_.hash()) {
      log(tag + " chain " + std::to_string(c) + " complete, skipping");
      return;
    }
    McmcConfig mc = cfg_.mcmc;
    mc.model_error_enabled = model_error;
    mc.seed = derive_seed(chain_base, static_cast<std::uint64_t>(c));
    const auto t0 = std::chrono::steady_clock::now();
    const SweepObserver obs = [&](const ChainState& s, bool, bool) {
      if (s.iteration % 1000 == 0) {
        std::ostringstream os;
        os << tag << " chain " << c << " sweep " << s.iteration << " loglik " << s.loglik << " acc(xi) "
           << static_cast<double>(s.accepted_latent) / s.proposed_latent << " acc(theta) "
           << static_cast<double>(s.accepted_meta) / s.proposed_meta;
        log(os.str());
      }
    };
    const ChainResult res = mcmc_run(d_obs, forward, cov, cfg_.prior, mc, theta0, xi0, obs);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
      io::ChainRecordWriter w(mdir / ("chain_" + std::to_string(c) + ".rec"), false);
      for (const auto& r : res.records) w.write(r);
    }
    Eigen::MatrixXd snaps(1 + Metaparameters::size + pca.n_d(), static_cast<Eigen::Index>(res.latent_snapshots.size()));
    for (std::size_t k = 0; k < res.latent_snapshots.size(); ++k) {
      const auto& s = res.latent_snapshots[k];
      auto col = snaps.col(static_cast<Eigen::Index>(k));
      col[0] = static_cast<double>(s.iteration);
      for (int i = 0; i < Metaparameters::size; ++i) col[1 + i] = s.theta[static_cast<std::size_t>(i)];
      col.tail(pca.n_d()) = s.xi;
    }
    io::write_matrix(mdir / ("chain_" + std::to_string(c) + "_snapshots.bin"), snaps);
    const ChainState& f = res.final_state;
    json j = manifest_base("run-mcmc/chain");
    j["chain"] = c;
    j["tag"] = tag;
    j["chain_seed"] = mc.seed;
    j["complete"] = true;
    j["sweeps"] = f.iteration;
    j["block_proposals"] = f.proposed_latent + f.proposed_meta;
    j["accepted_latent"] = f.accepted_latent;
    j["accepted_meta"] = f.accepted_meta;
    j["proposed_latent"] = f.proposed_latent;
    j["proposed_meta"] = f.proposed_meta;
    j["rejected_out_of_box"] = f.rejected_out_of_box;
    j["forward_failures"] = f.forward_failures;
    j["acceptance_latent"] = res.acceptance_latent();
    j["acceptance_meta"] = res.acceptance_meta();
    j["acceptance_overall"] = res.acceptance_overall();
    j["final_loglik"] = f.loglik;
    j["wall_seconds"] = wall;
    io::write_json(state, j);
    log(tag + " chain " + std::to_string(c) + " done in " + std::to_string(wall) + " s");
  });

  McmcSummary s;
  s.tag = tag;
  std::vector<std::vector<std::vector<double>>> draws(Metaparameters::size);
  for (int c = 0; c < cfg_.chains; ++c) {
    const json j = io::read_json(mdir / ("chain_" + std::to_string(c) + ".json"));
    s.acceptance.push_back(j["acceptance_overall"].get<double>());
    s.acceptance_latent.push_back(j["acceptance_latent"].get<double>());
    s.acceptance_meta.push_back(j["acceptance_meta"].get<double>());
    const auto recs = io::read_chain_records(mdir / ("chain_" + std::to_string(c) + ".rec"));
    for (int p = 0; p < Metaparameters::size; ++p) {
      std::vector<double> v;
      for (const auto& r : recs) v.push_back(r.theta[static_cast<std::size_t>(p)]);
      draws[static_cast<std::size_t>(p)].push_back(std::move(v));
    }
  }
  json m = manifest_base("run-mcmc");
  m["tag"] = tag;
  m["data"] = to_string(data);
  m["model_error"] = model_error;
  m["n_measurements"] = idx.size();
  m["acceptance_overall"] = s.acceptance;
  m["acceptance_latent"] = s.acceptance_latent;
  m["acceptance_meta"] = s.acceptance_meta;
  json diag;
  for (int p = 0; p < Metaparameters::size; ++p) {
    const auto d = chain_diagnostics(draws[static_cast<std::size_t>(p)]);
    s.diagnostics.push_back(d);
    if (d.defined) s.max_rhat = std::max(s.max_rhat, d.rhat);
    diag[Metaparameters::names()[static_cast<std::size_t>(p)]] = {
        {"rhat", d.defined ? json(d.rhat) : json(nullptr)}, {"ess", d.defined ? json(d.ess) : json(nullptr)},
        {"mean", d.mean}, {"sd", d.sd}, {"q05", d.q05}, {"q50", d.q50}, {"q95", d.q95}, {"defined", d.defined}};
  }
  m["diagnostics"] = diag;
  m["max_rhat"] = s.max_rhat;
  m["rhat_below_1_05"] = s.max_rhat < 1.05;
  io::write_json(mdir / "manifest.json", m);
  return s;
}

AnalysisSummary Pipeline::analyze(DataTypes data, bool model_error) {
  const std::string tag = run_tag(data, model_error);
  const fs::path mdir = dir() / "mcmc" / tag;
  const fs::path adir = dir() / "analysis" / tag;
  fs::create_directories(adir);
  const json mm = io::read_json(mdir / "manifest.json");
  const json tm = io::read_json(dir() / "truth" / "manifest.json");
  const PcaBasis pca = load_pca();

  AnalysisSummary out;
  out.tag = tag;
  out.truth = sampling_from_json(tm["meta"]);
  for (int p = 0; p < Metaparameters::size; ++p)
    out.prior_sd[static_cast<std::size_t>(p)] = cfg_.prior.range(p) / std::sqrt(12.0);
  double acc = 0.0;
  for (const auto& a : mm["acceptance_overall"]) acc += a.get<double>();
  out.acceptance = acc / static_cast<double>(mm["acceptance_overall"].size());

  // metaparameter draws and diagnostics
  std::vector<std::vector<std::vector<double>>> draws(Metaparameters::size);
  std::vector<Eigen::VectorXd> snapshots;
  const long burn = static_cast<long>(std::floor(cfg_.mcmc.burn_in_fraction * cfg_.mcmc.sweeps));
  for (int c = 0; c < cfg_.chains; ++c) {
    const auto recs = io::read_chain_records(mdir / ("chain_" + std::to_string(c) + ".rec"));
    for (int p = 0; p < Metaparameters::size; ++p) {
      std::vector<double> v;
      for (const auto& r : recs) v.push_back(r.theta[static_cast<std::size_t>(p)]);
      draws[static_cast<std::size_t>(p)].push_back(std::move(v));
    }
    const Eigen::MatrixXd S = io::read_matrix(mdir / ("chain_" + std::to_string(c) + "_snapshots.bin"));
    for (Eigen::Index k = 0; k < S.cols(); ++k)
      if (S(0, k) > static_cast<double>(burn)) snapshots.push_back(S.col(k));
  }
  io::CsvWriter dcsv(adir / "diagnostics.csv",
                     {"parameter", "unit", "truth", "mean", "sd", "prior_sd", "q05", "q50", "q95", "rhat", "ess"});
  static const std::array<const char*, Metaparameters::size> unit{"ln_md", "-", "-", "-", "-", "Pa", "Pa"};
  json jd;
  for (int p = 0; p < Metaparameters::size; ++p) {
    const auto sp = static_cast<std::size_t>(p);
    const auto d = chain_diagnostics(draws[sp]);
    out.diagnostics.push_back(d);
    const bool covered = out.truth[sp] >= d.q05 && out.truth[sp] <= d.q95;
    out.truth_covered += covered ? 1 : 0;
    dcsv << std::string(Metaparameters::names()[sp]) << std::string(unit[sp]) << out.truth[sp] << d.mean << d.sd
         << out.prior_sd[sp] << d.q05 << d.q50 << d.q95 << (d.defined ? d.rhat : NAN) << (d.defined ? d.ess : NAN);
    dcsv.end_row();
    jd[Metaparameters::names()[sp]] = {{"truth", out.truth[sp]}, {"mean", d.mean}, {"sd", d.sd},
                                       {"prior_sd", out.prior_sd[sp]}, {"q05", d.q05}, {"q95", d.q95},
                                       {"truth_in_p5_p95", covered}};

    std::vector<double> pooled;
    for (const auto& v : draws[sp]) pooled.insert(pooled.end(), v.begin(), v.end());
    const Histogram h = histogram_summary(pooled, cfg_.histogram_bins, cfg_.prior.lower[sp], cfg_.prior.upper[sp],
                                          out.truth[sp]);
    io::CsvWriter hcsv(adir / ("histogram_" + std::string(Metaparameters::names()[sp]) + ".csv"),
                       {"bin_left[" + std::string(unit[sp]) + "]", "bin_right[" + std::string(unit[sp]) + "]",
                        "count", "truth[" + std::string(unit[sp]) + "]"});
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      hcsv << h.edges[b] << h.edges[b + 1] << h.counts[b] << out.truth[sp];
      hcsv.end_row();
    }
  }

  // posterior predictive ensemble from uniformly thinned snapshots
  std::vector<Eigen::VectorXd> picked;
  const int want = std::min<int>(cfg_.posterior_samples, static_cast<int>(snapshots.size()));
  for (int k = 0; k < want; ++k)
    picked.push_back(snapshots[static_cast<std::size_t>(static_cast<double>(k) * snapshots.size() / want)]);
  const int np = static_cast<int>(picked.size());
  const ObservationLayout& L = cfg_.setup.layout;
  std::vector<ObservableSeries> series(static_cast<std::size_t>(np));
  std::vector<Eigen::VectorXd> features(static_cast<std::size_t>(np));
  std::vector<char> ok(static_cast<std::size_t>(np), 0);
  for_each_parallel(np, [&](int k) {
    const Eigen::VectorXd& s = picked[static_cast<std::size_t>(k)];
    SamplingVector th{};
    for (int i = 0; i < Metaparameters::size; ++i) th[static_cast<std::size_t>(i)] = s[1 + i];
    const Metaparameters meta = Metaparameters::from_sampling(th);
    const Eigen::VectorXd xi = s.tail(pca.n_d());
    const Eigen::VectorXd y = generate_pca_realization(pca, LatentVector{xi});
    const Geomodel g = assemble_geomodel(meta, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                                         cfg_.setup.fine, cfg_.prior, cfg_.setup.fixed);
    const bool fields = cfg_.cluster_on == ClusterFeature::saturation;
    const ForwardRun r = model_.run_fast_model(g, Horizon::full, fields);
    if (!r.converged()) return;
    series[static_cast<std::size_t>(k)] = r.series;
    ok[static_cast<std::size_t>(k)] = 1;
    if (cfg_.cluster_on == ClusterFeature::log_permeability)
      features[static_cast<std::size_t>(k)] =
          storage_log_permeability(meta, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    else if (cfg_.cluster_on == ClusterFeature::saturation)
      features[static_cast<std::size_t>(k)] = r.fields.S.row(r.fields.S.rows() - 1).transpose();
    else
      features[static_cast<std::size_t>(k)] = r.uplift.row(r.uplift.rows() - 1).transpose();
  });
  std::vector<int> good;
  for (int k = 0; k < np; ++k)
    if (ok[static_cast<std::size_t>(k)]) good.push_back(k);

  const Eigen::MatrixXd tS = io::read_matrix(dir() / "truth" / "saturation.bin");
  const Eigen::MatrixXd tP = io::read_matrix(dir() / "truth" / "pressure.bin");
  const Eigen::MatrixXd tU = io::read_matrix(dir() / "truth" / "uplift.bin");
  const Eigen::VectorXd d_obs = io::read_matrix(dir() / "truth" / "d_obs.bin").col(0);
  const std::vector<double> times = tm["times_yr"].get<std::vector<double>>();
  const int nt_hist = L.n_history_times();
  struct Band {
    std::string name, unit;
    int block, column;
  };
  const std::vector<Band> bands{
      {"saturation_well0_top", "frac", 0, 0},
      {"saturation_well0_bottom", "frac", 0, std::max(0, static_cast<int>(L.saturation_wells[0].layers.size()) - 1)},
      {"pressure_monitor_top", "Pa", 1, 0},
      {"pressure_monitor_bottom", "Pa", 1, L.n_pressure_points() - 1},
      {"uplift_center", "m", 2, L.n_surface_points() / 2},
      {"uplift_corner", "m", 2, 0},
  };
  const int ns_pts = L.n_saturation_points(), np_pts = L.n_pressure_points(), nu_pts = L.n_surface_points();
  if (!good.empty()) {
    for (const auto& b : bands) {
      Eigen::MatrixXd E(static_cast<Eigen::Index>(good.size()), static_cast<Eigen::Index>(times.size()));
      for (std::size_t r = 0; r < good.size(); ++r)
        E.row(static_cast<Eigen::Index>(r)) =
            observable_time_series(series[static_cast<std::size_t>(good[r])], b.block, b.column).transpose();
      const BandSeries bs = band_series(E, times);
      const Eigen::MatrixXd& T = b.block == 0 ? tS : b.block == 1 ? tP : tU;
      io::CsvWriter csv(adir / ("band_" + b.name + ".csv"),
                        {"time[yr]", "p10[" + b.unit + "]", "p50[" + b.unit + "]", "p90[" + b.unit + "]",
                         "truth[" + b.unit + "]", "obs[" + b.unit + "]"});
      for (std::size_t t = 0; t < times.size(); ++t) {
        double obs = NAN;
        for (int h = 0; h < nt_hist; ++h) {
          if (L.history_times_yr[static_cast<std::size_t>(h)] != times[t]) continue;
          const int off = b.block == 0 ? 0 : b.block == 1 ? ns_pts * nt_hist : (ns_pts + np_pts) * nt_hist;
          const int width = b.block == 0 ? ns_pts : b.block == 1 ? np_pts : nu_pts;
          obs = d_obs[off + h * width + b.column];
        }
        csv << times[t] << bs.p10[static_cast<Eigen::Index>(t)] << bs.p50[static_cast<Eigen::Index>(t)]
            << bs.p90[static_cast<Eigen::Index>(t)] << T(static_cast<Eigen::Index>(t), b.column) << obs;
        csv.end_row();
      }
    }

    const int k = std::min<int>(cfg_.medoids, static_cast<int>(good.size()));
    Eigen::MatrixXd X(static_cast<Eigen::Index>(good.size()), features[static_cast<std::size_t>(good[0])].size());
    for (std::size_t r = 0; r < good.size(); ++r) X.row(static_cast<Eigen::Index>(r)) = features[static_cast<std::size_t>(good[r])].transpose();
    const KMeansResult km = kmeans_medoids(X, k, derive_seed(cfg_.seed, "kmeans"));
    Eigen::MatrixXd medoid_fields(X.cols(), k);
    std::vector<std::string> header{"medoid", "sample"};
    for (const char* h : sampling_headers()) header.emplace_back(h);
    io::CsvWriter mcsv(adir / "medoids.csv", header);
    for (int c = 0; c < k; ++c) {
      const int r = km.medoids[static_cast<std::size_t>(c)];
      medoid_fields.col(c) = X.row(r).transpose();
      out.medoids.push_back(good[static_cast<std::size_t>(r)]);
      mcsv << c << good[static_cast<std::size_t>(r)];
      for (int i = 0; i < Metaparameters::size; ++i) mcsv << picked[static_cast<std::size_t>(good[static_cast<std::size_t>(r)])][1 + i];
      mcsv.end_row();
    }
    io::write_matrix(adir / "medoid_fields.bin", medoid_fields);
  }

  json m = manifest_base("analyze");
  m["tag"] = tag;
  m["acceptance_mean"] = out.acceptance;
  m["parameters"] = jd;
  m["truth_covered"] = out.truth_covered;
  m["posterior_samples"] = np;
  m["posterior_failures"] = np - static_cast<int>(good.size());
  m["medoids"] = out.medoids;
  m["max_rhat"] = mm["max_rhat"];
  io::write_json(adir / "summary.json", m);
  log("analysis " + tag + ": truth covered for " + std::to_string(out.truth_covered) + " of 7 metaparameters");
  return out;
}

}  // namespace co2hm
