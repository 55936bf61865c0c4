#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "co2hm/geomodel.hpp"
#include "support.hpp"

using namespace co2hm;
using co2hm::testing::small_grid;

TEST_CASE("prior draws stay inside the box and are reproducible") {
  const PriorBox prior;
  double lo = 1e9, hi = -1e9;
  std::vector<double> log_ar;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto m = sample_prior_metaparameters(s, prior);
    CHECK(prior.contains(m));
    lo = std::min(lo, m.mu_logk);
    hi = std::max(hi, m.mu_logk);
    log_ar.push_back(std::log10(m.a_r));
  }
  CHECK(lo >= 2.0);
  CHECK(hi <= 5.0);
  // log10(a_r) uniform on [-2, 0]
  const double d = co2hm::testing::ks_statistic(log_ar, [](double x) { return std::clamp((x + 2.0) / 2.0, 0.0, 1.0); });
  CHECK(d < co2hm::testing::ks_critical_1pct(log_ar.size()));
  CHECK(sample_prior_metaparameters(42) == sample_prior_metaparameters(42));
}

TEST_CASE("sampling coordinates carry a_r in log10") {
  Metaparameters m;
  m.a_r = 0.01;
  const auto v = m.to_sampling();
  CHECK(v[2] == doctest::Approx(-2.0));
  const auto back = Metaparameters::from_sampling(v);
  CHECK(back.a_r == doctest::Approx(0.01));
  CHECK(back.mu_logk == m.mu_logk);
}

TEST_CASE("prior validation names the violated parameter") {
  Metaparameters m;
  m.E_s = 30e9;
  CHECK_THROWS_WITH_AS(PriorBox{}.validate(m), doctest::Contains("E_s"), DomainError);
}

TEST_CASE("grid validation") {
  GridSpec g = small_grid();
  CHECK_NOTHROW(g.validate());
  g.nx = 1;
  CHECK_THROWS_AS(g.validate(), DomainError);
  g = small_grid();
  g.boundary_pv_multiplier = 0.5;
  CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("gaussian field sampler") {
  SUBCASE("deterministic per seed") {
    const GridSpec g = small_grid(16, 16, 4);
    const auto a = sample_gaussian_field(g, {4, 4, 2}, 42);
    const auto b = sample_gaussian_field(g, {4, 4, 2}, 42);
    CHECK((a.array() == b.array()).all());
    CHECK((a - sample_gaussian_field(g, {4, 4, 2}, 43)).norm() > 0.0);
  }
  SUBCASE("correlation length beyond the domain is rejected") {
    CHECK_THROWS_AS(GaussianFieldSampler(8, 8, 4, {8, 4, 2}), DomainError);
    CHECK_THROWS_AS(GaussianFieldSampler(8, 8, 4, {4, 4, 4}), DomainError);
  }
  SUBCASE("short correlation gives nearly independent neighbours") {
    const GaussianFieldSampler s(32, 32, 8, {0.05, 0.05, 0.05});
    double num = 0, den = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto f = s.sample(seed);
      for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 32; ++j)
          for (int i = 0; i + 1 < 32; ++i) {
            const int c = i + 32 * (j + 32 * k);
            num += f[c] * f[c + 1];
            den += f[c] * f[c];
          }
    }
    CHECK(std::abs(num / den) < 0.03);
  }
  SUBCASE("variogram at the correlation length") {
    // gamma(L) = 1 - exp(-3) for unit sill, lateral lag lh = 8 cells
    const int nx = 32, ny = 32, nz = 8;
    const GaussianFieldSampler s(nx, ny, nz, {8, 8, 2});
    double gsum = 0.0;
    long count = 0;
    double var = 0.0;
    long vcount = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto f = s.sample(seed);
      for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
          for (int i = 0; i + 8 < nx; ++i) {
            const int c = i + nx * (j + ny * k);
            gsum += 0.5 * std::pow(f[c] - f[c + 8], 2);
            ++count;
          }
      var += f.squaredNorm();
      vcount += f.size();
    }
    const double gamma = gsum / count;
    const double expected = 1.0 - std::exp(-3.0);
    CHECK(std::abs(gamma - expected) < 0.15 * expected);
    CHECK(var / vcount == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("pca basis") {
  SUBCASE("identical realizations give a zero basis") {
    Eigen::MatrixXd R(5, 4);
    for (int c = 0; c < 4; ++c) R.col(c) << 1, 2, 3, 4, 5;
    const auto pca = build_pca_basis(R, 2);
    CHECK(pca.basis.norm() == doctest::Approx(0.0));
    CHECK((pca.mean_field - R.col(0)).norm() == doctest::Approx(0.0));
  }
  SUBCASE("rank-2 data reproduce the sample covariance") {
    Eigen::MatrixXd R(4, 3);
    R << 1, 2, 0, 0, 1, 3, 2, 2, 5, -1, 0, 4;
    const auto pca = build_pca_basis(R, 2);
    const Eigen::MatrixXd X = R.colwise() - R.rowwise().mean();
    const Eigen::MatrixXd C = X * X.transpose() / 2.0;
    CHECK((pca.basis * pca.basis.transpose() - C).norm() < 1e-10);
    CHECK(std::abs(pca.basis.col(0).dot(pca.basis.col(1))) < 1e-10);
  }
  SUBCASE("rank-1 data give a parallel basis column") {
    Eigen::VectorXd dir(3);
    dir << 1, -2, 2;
    Eigen::MatrixXd R(3, 5);
    for (int c = 0; c < 5; ++c) R.col(c) = (c - 1.5) * dir;
    const auto pca = build_pca_basis(R, 1);
    const Eigen::VectorXd b = pca.basis.col(0).normalized();
    CHECK(std::abs(std::abs(b.dot(dir.normalized())) - 1.0) < 1e-12);
  }
  SUBCASE("too many components names the maximum rank") {
    Eigen::MatrixXd R = Eigen::MatrixXd::Random(10, 4);
    CHECK_THROWS_WITH_AS(build_pca_basis(R, 4), doctest::Contains("maximum admissible rank 3"), DomainError);
  }
}

TEST_CASE("pca realization") {
  Eigen::MatrixXd R = Eigen::MatrixXd::Random(30, 12);
  const auto pca = build_pca_basis(R, 5);
  const LatentVector zero{Eigen::VectorXd::Zero(5)};
  CHECK((generate_pca_realization(pca, zero) - pca.mean_field).norm() == 0.0);
  const LatentVector a{Eigen::VectorXd::Random(5)}, b{Eigen::VectorXd::Random(5)};
  const LatentVector ab{a.xi + b.xi};
  const Eigen::VectorXd y0 = generate_pca_realization(pca, zero);
  const Eigen::VectorXd lhs = generate_pca_realization(pca, ab) - y0;
  const Eigen::VectorXd rhs = generate_pca_realization(pca, a) - y0 + generate_pca_realization(pca, b) - y0;
  CHECK((lhs - rhs).norm() < 1e-12);
  CHECK_THROWS_AS(generate_pca_realization(pca, LatentVector{Eigen::VectorXd::Zero(4)}), DimensionError);

  SUBCASE("prior draws scatter around the mean field") {
    // unit-scaled orthonormal basis
    PcaBasis unit;
    unit.basis = Eigen::MatrixXd::Identity(20, 4);
    unit.mean_field = Eigen::VectorXd::LinSpaced(20, -1, 1);
    Rng rng(3);
    std::normal_distribution<double> n;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(20);
    for (int r = 0; r < 1000; ++r) {
      LatentVector xi{Eigen::VectorXd(4)};
      for (int i = 0; i < 4; ++i) xi.xi[i] = n(rng);
      sum += generate_pca_realization(unit, xi);
    }
    CHECK(((sum / 1000.0) - unit.mean_field).cwiseAbs().maxCoeff() < 0.1);
  }
}

TEST_CASE("geomodel assembly") {
  const GridSpec g = small_grid();
  Metaparameters meta;
  meta.mu_logk = 3.0;
  meta.a_r = 0.1;
  std::vector<double> y(static_cast<std::size_t>(g.aquifer_cells()), 0.0);
  y[5] = 1.0;
  const Geomodel m = assemble_geomodel(meta, y, g);
  const int c0 = g.sim_index_of_aquifer(0, 0, 0);
  CHECK(m.kx[static_cast<std::size_t>(c0)] == doctest::Approx(std::exp(3.0)));
  CHECK(m.kz[static_cast<std::size_t>(c0)] == doctest::Approx(0.1 * std::exp(3.0)));
  CHECK(m.region[static_cast<std::size_t>(c0)] == Region::storage);
  const int c5 = g.sim_index_of_aquifer(1, 1, 0);
  CHECK(m.kx[static_cast<std::size_t>(c5)] == doctest::Approx(std::exp(meta.sigma_logk + 3.0)));

  // surrounding ring: k = exp(mu), phi = mean storage porosity, E = E_s
  const int ring = g.sim_index(0, 0, 0);
  CHECK(m.region[static_cast<std::size_t>(ring)] == Region::surrounding);
  CHECK(m.kx[static_cast<std::size_t>(ring)] == doctest::Approx(std::exp(3.0)));
  CHECK(m.phi[static_cast<std::size_t>(ring)] == doctest::Approx(m.mean_storage_phi));
  CHECK(m.E[static_cast<std::size_t>(ring)] == meta.E_s);
  CHECK(m.overburden.E == meta.E_o);
  CHECK(m.overburden.k_md == doctest::Approx(0.001));
  CHECK(m.overburden.phi == doctest::Approx(0.08));
  CHECK(m.underburden.k_md == doctest::Approx(2.3));
  CHECK(m.underburden.nu == doctest::Approx(0.27));

  SUBCASE("porosity relation") {
    Metaparameters p;
    p.d = 0.03;
    p.e = 0.07;
    p.mu_logk = std::log(20.0);
    const Geomodel h = assemble_geomodel(p, std::vector<double>(static_cast<std::size_t>(g.aquifer_cells()), 0.0), g);
    CHECK(h.phi[static_cast<std::size_t>(c0)] == doctest::Approx(0.03 * std::log(20.0) + 0.07));
    CHECK(h.phi[static_cast<std::size_t>(c0)] == doctest::Approx(0.1599).epsilon(1e-4));
  }
  SUBCASE("isotropic case") {
    Metaparameters p;
    p.a_r = 1.0;
    const Geomodel h = assemble_geomodel(p, y, g);
    for (std::size_t c = 0; c < h.kx.size(); ++c)
      if (h.region[c] == Region::storage) CHECK(h.kz[c] == h.kx[c]);
  }
  SUBCASE("porosity clamp") {
    std::vector<double> yy(y.size(), -8.0);
    const Geomodel h = assemble_geomodel(meta, yy, g);
    CHECK(*std::min_element(h.phi.begin(), h.phi.end()) >= 0.01);
  }
  SUBCASE("pure function") { CHECK(assemble_geomodel(meta, y, g) == m); }
  SUBCASE("out of prior") {
    Metaparameters bad = meta;
    bad.mu_logk = 6.0;
    CHECK_THROWS_AS(assemble_geomodel(bad, y, g), DomainError);
  }
  SUBCASE("wrong field length") {
    CHECK_THROWS_AS(assemble_geomodel(meta, std::vector<double>(3, 0.0), g), DimensionError);
  }
}

TEST_CASE("log-permeability field mean over prior latent draws") {
  Eigen::MatrixXd R(64, 40);
  const GaussianFieldSampler s(4, 4, 4, {2, 2, 2});
  for (int c = 0; c < 40; ++c) R.col(c) = s.sample(static_cast<std::uint64_t>(c));
  const auto pca = build_pca_basis(R, 20);
  Metaparameters meta;
  Rng rng(9);
  std::normal_distribution<double> n;
  const int draws = 200;
  double grand = 0.0;
  for (int r = 0; r < draws; ++r) {
    LatentVector xi{Eigen::VectorXd(20)};
    for (int i = 0; i < 20; ++i) xi.xi[i] = n(rng);
    const Eigen::VectorXd y = generate_pca_realization(pca, xi);
    const Eigen::VectorXd lk = storage_log_permeability(meta, std::span<const double>(y.data(), 64));
    grand += lk.mean();
  }
  // spatially correlated cells: the 3 sigma / sqrt(n_s) bound holds for the
  // mean over draws, not for every single draw
  CHECK(std::abs(grand / draws - meta.mu_logk) < 3.0 * meta.sigma_logk / std::sqrt(64.0));
}

TEST_CASE("affine sensitivity of log-permeability to the latent vector") {
  Eigen::MatrixXd R = Eigen::MatrixXd::Random(32, 10);
  const auto pca = build_pca_basis(R, 4);
  Metaparameters meta;
  LatentVector xi{Eigen::VectorXd::Zero(4)};
  const Eigen::VectorXd y0 = generate_pca_realization(pca, xi);
  const Eigen::VectorXd l0 = storage_log_permeability(meta, std::span<const double>(y0.data(), 32));
  const double h = 1e-3;
  for (int j = 0; j < 4; ++j) {
    LatentVector xp = xi;
    xp.xi[j] += h;
    const Eigen::VectorXd y = generate_pca_realization(pca, xp);
    const Eigen::VectorXd l = storage_log_permeability(meta, std::span<const double>(y.data(), 32));
    const Eigen::VectorXd fd = (l - l0) / h;
    CHECK((fd - meta.sigma_logk * pca.basis.col(j)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("restriction to a coarse grid") {
  GridSpec fine = small_grid(8, 8, 4);
  GridSpec coarse = fine;
  coarse.nx = coarse.ny = 4;
  coarse.nz = 2;
  coarse.dx = coarse.dy = fine.dx * 2;
  coarse.dz = fine.dz * 2;
  coarse.ring_width = fine.dx;
  const Geomodel f = co2hm::testing::homogeneous_model(fine);
  for (auto avg : {PermeabilityAveraging::geometric, PermeabilityAveraging::flow_bounds}) {
    const Geomodel c = restrict_geomodel(f, coarse, avg);
    const double k = f.kx[static_cast<std::size_t>(fine.sim_index_of_aquifer(0, 0, 0))];
    for (std::size_t i = 0; i < c.kx.size(); ++i) {
      CHECK(c.kx[i] == doctest::Approx(k));
      CHECK(c.phi[i] == doctest::Approx(f.phi[static_cast<std::size_t>(fine.sim_index_of_aquifer(0, 0, 0))]));
    }
  }

  SUBCASE("layered medium: flow bounds reproduce series and parallel limits") {
    // two layers per coarse cell: k = 1 and 100 md
    Geomodel lay = f;
    for (int k = 0; k < fine.nz; ++k)
      for (int j = 0; j < fine.ny; ++j)
        for (int i = 0; i < fine.nx; ++i) {
          const auto c = static_cast<std::size_t>(fine.sim_index_of_aquifer(i, j, k));
          lay.kx[c] = lay.ky[c] = lay.kz[c] = k % 2 ? 100.0 : 1.0;
        }
    const Geomodel c = restrict_geomodel(lay, coarse, PermeabilityAveraging::flow_bounds);
    const auto cc = static_cast<std::size_t>(coarse.sim_index_of_aquifer(1, 1, 0));
    CHECK(c.kx[cc] == doctest::Approx(50.5));              // arithmetic along layers
    CHECK(c.kz[cc] == doctest::Approx(2.0 / (1.0 + 0.01)));  // harmonic across layers
  }
  CHECK(permeability_averaging_from_string("flow_bounds") == PermeabilityAveraging::flow_bounds);
  CHECK_THROWS_AS(permeability_averaging_from_string("median"), DomainError);
}
