#include "cavloss/participation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cavloss/constants.hpp"
#include "cavloss/errors.hpp"

namespace cavloss {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool is_fraction(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

void ParticipationRow::validate() const {
  require(std::isfinite(omega) && omega > 0.0,
          "participation row: omega must be positive");
  require(is_fraction(p_cond), "participation row: p_cond outside [0,1]");
  require(is_fraction(p_MA), "participation row: p_MA outside [0,1]");
  require(is_fraction(p_bulk), "participation row: p_bulk outside [0,1]");
  require(is_fraction(p_SA), "participation row: p_SA outside [0,1]");
  require(is_fraction(p_bulk_H), "participation row: p_bulk_H outside [0,1]");
  require(p_cond + p_MA + p_bulk + p_SA <= 1.0 + 1e-12,
          "participation row: electric participations sum above 1");
  if (z) require(std::isfinite(*z), "participation row: z not finite");
}

ParticipationTable ParticipationTable::make(std::string sample_id,
                                            std::vector<ParticipationRow> rows) {
  require(!sample_id.empty(), "participation table: empty sample_id");
  require(!rows.empty(), "participation table: no rows");
  for (const auto& r : rows) r.validate();
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ParticipationRow& a, const ParticipationRow& b) {
                     return a.p_bulk < b.p_bulk;
                   });
  return ParticipationTable{std::move(sample_id), std::move(rows)};
}

void InterfaceModel::validate() const {
  require(t_SA > 0 && t_MA > 0 && lambda_L > 0,
          "interface model: thicknesses must be positive");
  require(eps_MA >= 1 && eps_bulk_parallel >= 1 && eps_bulk_perp >= 1,
          "interface model: relative permittivities must be >= 1");
}

void MaterialLosses::validate() const {
  for (double v : {q_cond_inv, q_MA_inv, q_bulk_inv, q_SA_inv, q_bulk_H_inv})
    require(std::isfinite(v) && v >= 0.0,
            "material losses: loss factors must be finite and >= 0");
  if (q_cond_inv != 0.0)
    require(std::isfinite(omega_ref) && omega_ref > 0.0,
            "material losses: omega_ref required with a conductor term");
}

double predict_loss(const ParticipationRow& row, const MaterialLosses& q) {
  row.validate();
  q.validate();
  double cond = 0.0;
  if (q.q_cond_inv != 0.0) cond = row.p_cond * q.q_cond_inv * (q.omega_ref / row.omega);
  return cond + row.p_MA * q.q_MA_inv + row.p_bulk * q.q_bulk_inv +
         row.p_SA * q.q_SA_inv + row.p_bulk_H * q.q_bulk_H_inv;
}

double composite_substrate_loss(double p_bulk, double p_SA, double q_bulk_inv,
                                double q_SA_inv) {
  require(std::isfinite(p_bulk) && p_bulk > 0.0,
          "composite substrate loss: p_bulk must be positive");
  require(std::isfinite(p_SA) && p_SA >= 0.0,
          "composite substrate loss: p_SA must be >= 0");
  require(std::isfinite(q_bulk_inv) && q_bulk_inv >= 0.0 &&
              std::isfinite(q_SA_inv) && q_SA_inv >= 0.0,
          "composite substrate loss: loss factors must be >= 0");
  return q_bulk_inv + (p_SA / p_bulk) * q_SA_inv;
}

void EvanescentWaveguide::validate() const {
  require(std::isfinite(f_cutoff_Hz) && f_cutoff_Hz > 0.0,
          "waveguide: cutoff frequency must be positive");
  require(std::isfinite(f_mode_Hz) && f_mode_Hz > 0.0,
          "waveguide: mode frequency must be positive");
  if (f_mode_Hz >= f_cutoff_Hz)
    throw std::domain_error(
        "waveguide: mode frequency at or above cutoff, section is not "
        "evanescent");
  require(is_fraction(p_bulk_at_contact),
          "waveguide: p_bulk_at_contact outside [0,1]");
}

double EvanescentWaveguide::energy_attenuation() const {
  validate();
  const double kc = kTwoPi * f_cutoff_Hz / kSpeedOfLight;
  const double k = kTwoPi * f_mode_Hz / kSpeedOfLight;
  return 2.0 * std::sqrt(kc * kc - k * k);
}

double attenuation_profile(double z_m, const EvanescentWaveguide& wg) {
  require(std::isfinite(z_m) && z_m >= 0.0,
          "attenuation profile: z must be >= 0");
  return wg.p_bulk_at_contact * std::exp(-wg.energy_attenuation() * z_m);
}

bool PolynomialBasis::conductor_constant(double n_sigma) const {
  for (std::size_t k = 1; k < x_cond.size(); ++k) {
    const double tol = n_sigma * x_cond_err[k] + 1e-18;
    if (std::abs(x_cond[k]) > tol) return false;
  }
  return true;
}

namespace {

// OLS of one series against powers of p (columns scaled by max|p| for
// conditioning, coefficients rescaled back exactly afterwards).
void poly_fit(const Eigen::VectorXd& p, const Eigen::VectorXd& yv, int order,
              std::vector<double>& coef, std::vector<double>& err) {
  const int n = static_cast<int>(p.size());
  const int k = order + 1;
  const double s = p.cwiseAbs().maxCoeff();
  if (s <= 0.0) throw numeric_error("polynomial basis: all p_bulk are zero");
  Eigen::MatrixXd X(n, k);
  for (int i = 0; i < n; ++i) {
    double t = 1.0;
    for (int j = 0; j < k; ++j) {
      X(i, j) = t;
      t *= p(i) / s;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k)
    throw numeric_error(
        "polynomial basis: rank-deficient design, fewer distinct p_bulk "
        "values than coefficients");
  Eigen::VectorXd beta = qr.solve(yv);
  const Eigen::VectorXd r = yv - X * beta;
  const int dof = n - k;
  const double s2 = dof > 0 ? r.squaredNorm() / dof : 0.0;
  const Eigen::MatrixXd xtx_inv =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  coef.resize(k);
  err.resize(k);
  double scale = 1.0;
  for (int j = 0; j < k; ++j) {
    coef[j] = beta(j) / scale;
    err[j] = std::sqrt(std::max(0.0, s2 * xtx_inv(j, j))) / scale;
    scale *= s;
  }
}

}  // namespace

PolynomialBasis fit_polynomial_basis(const ParticipationTable& table,
                                     const std::vector<double>& q_inv,
                                     int order) {
  require(order >= 2 && order <= 4,
          "polynomial basis: order must be in [2,4]");
  const std::size_t n = table.rows.size();
  require(q_inv.size() == n,
          "polynomial basis: q_inv length does not match table rows");
  require(n >= static_cast<std::size_t>(order) + 2,
          "polynomial basis: need at least order+2 rows");
  std::set<double> distinct;
  for (const auto& r : table.rows) distinct.insert(r.p_bulk);
  if (distinct.size() < static_cast<std::size_t>(order) + 1)
    throw numeric_error(
        "polynomial basis: rank-deficient design, fewer distinct p_bulk "
        "values than coefficients");

  Eigen::VectorXd p(n), yq(n), yc(n), ym(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(std::isfinite(q_inv[i]) && q_inv[i] >= 0.0,
            "polynomial basis: q_inv entries must be finite and >= 0");
    p(static_cast<int>(i)) = table.rows[i].p_bulk;
    yq(static_cast<int>(i)) = q_inv[i];
    yc(static_cast<int>(i)) = table.rows[i].p_cond;
    ym(static_cast<int>(i)) = table.rows[i].p_MA;
  }

  PolynomialBasis b;
  b.order = order;
  poly_fit(p, yq, order, b.y, b.y_err);
  poly_fit(p, yc, order, b.x_cond, b.x_cond_err);
  poly_fit(p, ym, order, b.x_MA, b.x_MA_err);
  return b;
}

double surface_resistance_from_loss(double q_cond_inv, double omega,
                                    double lambda_L) {
  require(std::isfinite(q_cond_inv) && q_cond_inv >= 0.0,
          "surface resistance: loss factor must be >= 0");
  require(omega > 0.0 && lambda_L > 0.0,
          "surface resistance: omega and lambda_L must be positive");
  return q_cond_inv * omega * kMu0 * lambda_L;
}

double loss_from_surface_resistance(double r_s, double omega,
                                    double lambda_L) {
  require(std::isfinite(r_s) && r_s >= 0.0,
          "surface resistance: R_s must be >= 0");
  require(omega > 0.0 && lambda_L > 0.0,
          "surface resistance: omega and lambda_L must be positive");
  return r_s / (omega * kMu0 * lambda_L);
}

}  // namespace cavloss
