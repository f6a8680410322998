#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "cavloss/participation.hpp"

namespace cavloss {

struct Bounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

// Insertion sweep of one sample together with its measured losses.
struct SampleBlock {
  ParticipationTable table;
  std::vector<double> q_inv;   // measured 1/Q per row
  std::vector<double> sigma;   // one-sigma uncertainties, > 0

  void validate() const;
};

// Joint linear system Q_i^-1 = P q across one or more samples. Unknowns
// are laid out as [conductor columns][interface columns][one substrate
// column per sample]; conductor and interface columns are shared across
// samples unless the share flags are cleared. The conductor column is
// p_cond * omega_ref / omega so the unknown is the loss factor at
// omega_ref.
struct LossSystem {
  std::vector<SampleBlock> samples;
  double omega_ref = 0.0;  // rad/s
  bool share_cond = true;
  bool share_MA = true;
  Bounds cond_bounds;
  Bounds ma_bounds;
  std::vector<Bounds> sub_bounds;  // per sample; empty means all default

  void validate() const;
  std::size_t n_params() const;
  std::size_t n_rows() const;
  std::vector<std::string> labels() const;
  std::vector<Bounds> all_bounds() const;
  Eigen::MatrixXd design() const;      // P
  Eigen::VectorXd rhs() const;         // measured Q^-1
  Eigen::VectorXd sigmas() const;
};

struct LossSolution {
  std::vector<std::string> labels;
  Eigen::VectorXd q;
  Eigen::MatrixXd covariance;       // zero rows/cols for bound-fixed params
  std::vector<double> residuals;    // raw, measured - predicted
  std::vector<std::string> active_bounds;  // "label@lower" / "label@upper"
  double condition_number = 0.0;    // of the whitened design
};

// Box-bounded weighted least squares by an active-set iteration (NNLS
// generalized to two-sided bounds). With no finite bounds this reduces to
// the analytic weighted solution. Throws std::invalid_argument on
// infeasible bounds and numeric_error on rank deficiency, naming the
// near-dependent columns.
LossSolution solve(const LossSystem& system);

// (P~^T P~)^-1 with P~ the sigma-whitened design; the parameter covariance
// of the unconstrained problem.
Eigen::MatrixXd covariance(const LossSystem& system);

// ---------------------------------------------------------------------------
// Sensitivity studies
// ---------------------------------------------------------------------------

struct SensitivityGrid {
  double q_bulk_inv_min = 1e-9;
  double q_bulk_inv_max = 1e-6;
  double q_SA_inv_min = 1e-5;
  double q_SA_inv_max = 1e-2;
  int n_bulk = 40;
  int n_SA = 40;
};

struct SensitivityConfig {
  ParticipationTable profile;   // insertion sweep geometry
  double p_SA_over_p_bulk = 0.0;
  double q_cond_inv = 0.0;      // assumed background, at omega_ref
  double q_MA_inv = 0.0;
  double omega_ref = 0.0;
  double fractional_error = 0.01;  // relative sigma of each simulated Q^-1
  SensitivityGrid grid;
  std::vector<double> contour_levels = {0.03, 0.10, 1.00};
};

struct ContourPolyline {
  double level = 0.0;
  // polyline vertices in (q_bulk_inv, q_SA_inv) coordinates
  std::vector<std::pair<double, double>> points;
};

struct SensitivityMap {
  std::vector<double> q_bulk_inv;  // grid axes (log spaced)
  std::vector<double> q_SA_inv;
  // row i = q_bulk axis, column j = q_SA axis
  Eigen::MatrixXd ci;        // 2 sigma of the recovered q_sub^-1
  Eigen::MatrixXd frac_err;  // ci / q_sub^-1
  std::vector<ContourPolyline> contours;  // of frac_err
};

// For each assumed (q_bulk^-1, q_SA^-1) pair: simulate the sweep losses,
// attach fractional errors, and record the 2-sigma confidence interval a
// least-squares inversion would report for the composite substrate loss.
SensitivityMap sensitivity_map(const SensitivityConfig& cfg);

// Error budget of the polynomial route
//   q_sub^-1 = y1 - x1_MA q_MA^-1,
//   sigma    = sigma_y1 + |x1_MA| sigma_qMA + sigma_x1MA q_MA^-1.
struct PolySensitivity {
  double q_sub_inv = 0.0;
  double term_y1 = 0.0;        // sigma_y1
  double term_slope = 0.0;     // |x1_MA| sigma_qMA
  double term_slope_err = 0.0; // sigma_x1MA q_MA^-1
  double sigma_total = 0.0;
};

PolySensitivity polynomial_sensitivity(const PolynomialBasis& basis,
                                       double q_MA_inv, double q_MA_inv_sigma);

}  // namespace cavloss
