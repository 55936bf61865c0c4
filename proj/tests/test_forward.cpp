#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "co2hm/forward.hpp"
#include "support.hpp"

using namespace co2hm;

namespace {

StorageFields uniform_fields(int times, int cells, double S, double p) {
  StorageFields f;
  for (int t = 0; t < times; ++t) f.times_yr.push_back(t + 1.0);
  f.S = Eigen::MatrixXd::Constant(times, cells, S);
  f.p = Eigen::MatrixXd::Constant(times, cells, p);
  return f;
}

}  // namespace

TEST_CASE("observation layout sizes") {
  const GridSpec fine = default_fine_grid();
  const ObservationLayout desk = default_observation_layout(fine);
  CHECK(desk.n_saturation_points() == 32);
  CHECK(desk.n_pressure_points() == 8);
  CHECK(desk.n_surface_points() == 25);
  CHECK(desk.n_m() == 325);
  desk.validate(fine);

  ObservationLayout empty;
  CHECK_THROWS_AS(empty.validate(fine), DomainError);
  ObservationLayout outside = desk;
  outside.pressure_well.i = fine.nx;
  CHECK_THROWS_AS(outside.validate(fine), DomainError);
}

TEST_CASE("data selection covers disjoint blocks") {
  const ObservationLayout desk = default_observation_layout(default_fine_grid());
  const auto sub = data_selection(desk, true, false);
  const auto sur = data_selection(desk, false, true);
  const auto both = data_selection(desk, true, true);
  CHECK(sub.size() == 200);
  CHECK(sur.size() == 125);
  CHECK(both.size() == 325);
  CHECK(sur.front() == 200);
  CHECK_THROWS_AS(data_selection(desk, false, false), DomainError);
}

TEST_CASE("observe extracts history times in block order and is linear") {
  GridSpec fine = co2hm::testing::small_grid(4, 4, 2);
  ObservationLayout layout;
  layout.saturation_wells = {{1, 1, {0, 1}}};
  layout.pressure_well = {2, 2, {1}};
  layout.surface_points = {{100, 100}};
  layout.history_times_yr = {1, 2};
  layout.prediction_times_yr = {3};
  layout.validate(fine);
  CHECK(layout.n_m() == (2 + 1 + 1) * 2);

  ObservableSeries s;
  s.times_yr = {1, 2, 3};
  s.saturation = Eigen::MatrixXd{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
  s.pressure = Eigen::MatrixXd{{1e6}, {2e6}, {3e6}};
  s.uplift = Eigen::MatrixXd{{1e-3}, {2e-3}, {3e-3}};
  const Eigen::VectorXd d = observe(s, layout).obs;
  const Eigen::VectorXd expected{{0.1, 0.2, 0.3, 0.4, 1e6, 2e6, 1e-3, 2e-3}};
  CHECK((d - expected).cwiseAbs().maxCoeff() == 0.0);

  ObservableSeries s2 = s;
  s2.saturation *= 2;
  s2.pressure *= 2;
  s2.uplift *= 2;
  CHECK((observe(s2, layout).obs - 2 * d).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(observable_time_series(s, 0, 1).isApprox(Eigen::VectorXd{{0.2, 0.4, 0.6}}));
}

TEST_CASE("field difference metrics") {
  const auto B = uniform_fields(2, 3, 0.5, 1e7);
  CHECK(field_difference_metrics(B, B).eps_S == 0.0);
  CHECK(field_difference_metrics(B, B).eps_p == 0.0);
  const auto A = uniform_fields(2, 3, 0.55, 1e7);
  CHECK(field_difference_metrics(A, B).eps_S == doctest::Approx(0.05 / 0.51));
  CHECK(field_difference_metrics(A, B).eps_S == doctest::Approx(0.0980).epsilon(1e-3));

  StorageFields Bp = uniform_fields(1, 3, 0.0, 0.0);
  Bp.p << 0.0, 5.0, 10.0;
  StorageFields Ap = Bp;
  Ap.p.array() += 1.0;
  CHECK(field_difference_metrics(Ap, Bp).eps_p == doctest::Approx(0.1));
  // order of cases does not matter
  CHECK(field_difference_metrics(std::vector{A, Ap}, std::vector{B, Bp}).eps_S ==
        doctest::Approx(field_difference_metrics(std::vector{Ap, A}, std::vector{Bp, B}).eps_S));
  CHECK_THROWS_AS(field_difference_metrics(uniform_fields(2, 2, 0, 0), B), DimensionError);
}

TEST_CASE("surrogate relative errors") {
  const auto hifi = uniform_fields(1, 1, 0.5, 2e7);
  const auto fast = uniform_fields(1, 1, 0.6, 2e7);
  const Eigen::MatrixXd d_hifi{{1.00e-2, 0.0}}, d_fast{{1.02e-2, 1e-4}};
  const auto e = surrogate_relative_errors({fast}, {d_fast}, {hifi}, {d_hifi});
  CHECK(e.delta_S[0] == doctest::Approx(0.1 / 0.51));
  CHECK(e.delta_S[0] == doctest::Approx(0.196).epsilon(2e-3));
  CHECK(e.delta_p[0] == 0.0);
  CHECK(e.delta_d[0] == doctest::Approx(0.02));
  CHECK(e.excluded_uplift_points == 1);
  const auto same = surrogate_relative_errors({hifi}, {d_hifi}, {hifi}, {d_hifi});
  CHECK(same.delta_S[0] == 0.0);
  CHECK(same.delta_d[0] == 0.0);
}

TEST_CASE("ensemble percentiles") {
  Eigen::MatrixXd e(10, 2);
  for (int i = 0; i < 10; ++i) {
    e(i, 0) = 10 - i;
    e(i, 1) = 4.0;
  }
  const Eigen::MatrixXd q = ensemble_percentiles(e);
  CHECK(q(2, 0) == doctest::Approx(5.5));
  CHECK(q(0, 0) == doctest::Approx(1.9));
  for (int r = 0; r < 5; ++r) CHECK(q(r, 1) == 4.0);
  const Eigen::MatrixXd rnd = Eigen::MatrixXd::Random(37, 6);
  const Eigen::MatrixXd qr = ensemble_percentiles(rnd, {0.1, 0.5, 0.9});
  for (int t = 0; t < 6; ++t) {
    CHECK(qr(0, t) <= qr(1, t));
    CHECK(qr(1, t) <= qr(2, t));
  }
  CHECK_THROWS_AS(ensemble_percentiles(Eigen::MatrixXd(0, 3)), DomainError);
}

TEST_CASE("prolongation of a constant coarse field") {
  const GridSpec fine = default_fine_grid(), coarse = default_coarse_grid();
  const std::vector<double> c(static_cast<std::size_t>(coarse.aquifer_cells()), 3.25);
  const Eigen::VectorXd f = prolong_field(coarse, c, fine);
  CHECK(f.size() == fine.aquifer_cells());
  CHECK((f.array() - 3.25).abs().maxCoeff() < 1e-14);
}

TEST_CASE("homogeneous model: fast and high-fidelity monitor pressures agree") {
  const ForwardModel model(ForwardSetup::desk_defaults());
  const GridSpec& fine = model.setup().fine;
  const Geomodel m = co2hm::testing::homogeneous_model(fine);
  const ForwardRun hi = model.run_high_fidelity(m, Horizon::full);
  const ForwardRun lo = model.run_fast_model(m, Horizon::full);
  REQUIRE(hi.converged());
  REQUIRE(lo.converged());
  const auto& well = model.setup().layout.pressure_well;
  const auto& p0 = model.fine_initial_pressure();
  double worst = 0.0, worst_build_up = 0.0;
  for (int t = 0; t < hi.series.n_times(); ++t)
    for (std::size_t l = 0; l < well.layers.size(); ++l) {
      const double base = p0[static_cast<std::size_t>(fine.sim_index_of_aquifer(well.i, well.j, well.layers[l]))];
      const double ph = hi.series.pressure(t, static_cast<Eigen::Index>(l));
      const double pf = lo.series.pressure(t, static_cast<Eigen::Index>(l));
      worst = std::max(worst, std::abs(pf - ph) / ph);
      worst_build_up = std::max(worst_build_up, std::abs(pf - ph) / std::abs(ph - base));
    }
  INFO("worst relative pressure difference " << worst << ", relative to the build-up " << worst_build_up);
  CHECK(worst <= 0.05);
  INFO("wall time hifi " << hi.wall_seconds << " s, fast " << lo.wall_seconds << " s");
  CHECK(hi.wall_seconds >= 8.0 * lo.wall_seconds);

  // symmetric wells on a homogeneous model give a symmetric uplift field
  const Eigen::MatrixXd& u = hi.uplift;
  CHECK(u.cols() == 25);
  double asym = 0.0;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i)
      asym = std::max(asym, std::abs(u(u.rows() - 1, i + 5 * j) - u(u.rows() - 1, j + 5 * (4 - i))));
  CHECK(asym <= 1e-6 * u.cwiseAbs().maxCoeff());
}
