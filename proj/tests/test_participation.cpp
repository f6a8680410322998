#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cavloss/constants.hpp"
#include "cavloss/errors.hpp"
#include "cavloss/participation.hpp"

using namespace cavloss;

namespace {

ParticipationRow make_row(double p_bulk, double omega = 2.8588e10) {
  ParticipationRow r;
  r.omega = omega;
  r.p_cond = 43.92e-6;
  r.p_MA = 246e-9;
  r.p_bulk = p_bulk;
  r.p_SA = 1.67e-5 * p_bulk;
  return r;
}

}  // namespace

TEST_CASE("row validation rejects out-of-range entries") {
  ParticipationRow r = make_row(1e-3);
  CHECK_NOTHROW(r.validate());

  ParticipationRow bad = r;
  bad.omega = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.p_cond = -1e-9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.p_bulk = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.p_cond = 0.6;
  bad.p_bulk = 0.6;  // electric participations sum above one
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = r;
  bad.z = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("table construction sorts by p_bulk and rejects empty input") {
  std::vector<ParticipationRow> rows = {make_row(1e-2), make_row(1e-4),
                                        make_row(1e-3)};
  const auto t = ParticipationTable::make("s", rows);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].p_bulk == 1e-4);
  CHECK(t.rows[1].p_bulk == 1e-3);
  CHECK(t.rows[2].p_bulk == 1e-2);

  CHECK_THROWS_AS(ParticipationTable::make("s", {}), std::invalid_argument);
  CHECK_THROWS_AS(ParticipationTable::make("", rows), std::invalid_argument);
}

TEST_CASE("predict_loss sums weighted channels with conductor scaling") {
  ParticipationRow r = make_row(2e-3, 2.0e10);
  r.p_bulk_H = 0.01;
  MaterialLosses q;
  q.q_cond_inv = 2e-5;
  q.omega_ref = 2.5e10;  // conductor term scales by omega_ref/omega
  q.q_MA_inv = 33e-3;
  q.q_bulk_inv = 63e-9;
  q.q_SA_inv = 1.5e-3;
  q.q_bulk_H_inv = 4e-8;

  const double expected = 43.92e-6 * 2e-5 * (2.5e10 / 2.0e10) +
                          246e-9 * 33e-3 + 2e-3 * 63e-9 +
                          1.67e-5 * 2e-3 * 1.5e-3 + 0.01 * 4e-8;
  CHECK(predict_loss(r, q) == doctest::Approx(expected).epsilon(1e-14));

  // without a conductor term omega_ref may stay unset
  MaterialLosses q2;
  q2.q_MA_inv = 33e-3;
  CHECK(predict_loss(r, q2) ==
        doctest::Approx(246e-9 * 33e-3).epsilon(1e-14));

  MaterialLosses bad = q;
  bad.omega_ref = 0.0;
  CHECK_THROWS_AS(predict_loss(r, bad), std::invalid_argument);
}

TEST_CASE("composite substrate loss folds the SA share onto p_bulk") {
  CHECK(composite_substrate_loss(1e-3, 1.67e-5 * 1e-3, 63e-9, 1.5e-3) ==
        doctest::Approx(63e-9 + 1.67e-5 * 1.5e-3).epsilon(1e-14));
  // consistency with predict_loss: folding is exact
  ParticipationRow r = make_row(5e-3);
  MaterialLosses split;
  split.q_bulk_inv = 63e-9;
  split.q_SA_inv = 1.5e-3;
  MaterialLosses folded;
  folded.q_bulk_inv =
      composite_substrate_loss(r.p_bulk, r.p_SA, 63e-9, 1.5e-3);
  CHECK(predict_loss(r, split) ==
        doctest::Approx(predict_loss(r, folded)).epsilon(1e-14));

  CHECK_THROWS_AS(composite_substrate_loss(0.0, 0.0, 1e-9, 1e-3),
                  std::invalid_argument);
}

TEST_CASE("evanescent waveguide attenuation") {
  EvanescentWaveguide wg;
  wg.f_cutoff_Hz = 9e9;
  wg.f_mode_Hz = 4.55e9;
  wg.p_bulk_at_contact = 0.3;
  // 2 sqrt((2 pi f_c / c)^2 - (2 pi f / c)^2), computed independently
  CHECK(wg.energy_attenuation() ==
        doctest::Approx(325.49087228572205).epsilon(1e-12));
  CHECK(attenuation_profile(0.0, wg) == doctest::Approx(0.3));
  CHECK(attenuation_profile(5e-3, wg) ==
        doctest::Approx(0.05892869261578453).epsilon(1e-12));
  // monotone decreasing in z
  CHECK(attenuation_profile(1e-2, wg) < attenuation_profile(5e-3, wg));

  EvanescentWaveguide above = wg;
  above.f_mode_Hz = 1e10;  // not evanescent
  CHECK_THROWS_AS(above.energy_attenuation(), std::domain_error);
  CHECK_THROWS_AS(attenuation_profile(-1e-3, wg), std::invalid_argument);
}

TEST_CASE("polynomial basis recovers exact polynomial coefficients") {
  // forward-generate a sweep whose columns are exact quadratics in p_bulk
  const std::vector<double> cy = {9e-9, 1.1e-7, 2.5e-6};
  const std::vector<double> cc = {43.92e-6, 0.0, 0.0};  // constant conductor
  const std::vector<double> cm = {249e-9, -300e-9, 15800e-9};
  std::vector<ParticipationRow> rows;
  std::vector<double> q_inv;
  for (int i = 0; i < 10; ++i) {
    const double p = 1e-4 * std::pow(500.0, i / 9.0);
    ParticipationRow r;
    r.omega = 2.8588e10;
    r.p_bulk = p;
    r.p_cond = cc[0] + cc[1] * p + cc[2] * p * p;
    r.p_MA = cm[0] + cm[1] * p + cm[2] * p * p;
    rows.push_back(r);
    q_inv.push_back(cy[0] + cy[1] * p + cy[2] * p * p);
  }
  const auto table = ParticipationTable::make("poly", rows);
  const auto b = fit_polynomial_basis(table, q_inv, 2);

  REQUIRE(b.y.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(b.y[k] == doctest::Approx(cy[k]).epsilon(1e-9));
    CHECK(b.x_MA[k] == doctest::Approx(cm[k]).epsilon(1e-9));
  }
  CHECK(b.x_cond[0] == doctest::Approx(cc[0]).epsilon(1e-9));
  CHECK(b.conductor_constant());

  // a conductor column that genuinely varies is flagged
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i].p_cond = 43.92e-6 * (1.0 + 5.0 * rows[i].p_bulk);
  const auto vary = fit_polynomial_basis(ParticipationTable::make("v", rows),
                                         q_inv, 2);
  CHECK_FALSE(vary.conductor_constant());
}

TEST_CASE("polynomial basis input validation") {
  std::vector<ParticipationRow> rows;
  std::vector<double> q_inv;
  for (int i = 0; i < 6; ++i) {
    rows.push_back(make_row(1e-4 * (i + 1)));
    q_inv.push_back(1e-8);
  }
  const auto t = ParticipationTable::make("s", rows);
  CHECK_THROWS_AS(fit_polynomial_basis(t, q_inv, 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_polynomial_basis(t, q_inv, 5), std::invalid_argument);
  CHECK_THROWS_AS(
      fit_polynomial_basis(t, std::vector<double>(3, 1e-8), 2),
      std::invalid_argument);

  // all rows at the same p_bulk: rank-deficient design
  std::vector<ParticipationRow> flat(6, make_row(1e-3));
  CHECK_THROWS_AS(
      fit_polynomial_basis(ParticipationTable::make("f", flat), q_inv, 2),
      numeric_error);
}

TEST_CASE("surface resistance round trip") {
  const double q = 2e-5, omega = 2.8588e10, lam = 50e-9;
  const double rs = surface_resistance_from_loss(q, omega, lam);
  CHECK(rs == doctest::Approx(3.5924740331886556e-08).epsilon(1e-12));
  CHECK(loss_from_surface_resistance(rs, omega, lam) ==
        doctest::Approx(q).epsilon(1e-14));
  CHECK_THROWS_AS(surface_resistance_from_loss(-1e-9, omega, lam),
                  std::invalid_argument);
}
