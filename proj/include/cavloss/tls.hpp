#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cavloss {

enum class SweepPosition { withdrawn, inserted };

struct PowerPoint {
  double n_photons = 0.0;
  double q_inv = 0.0;   // measured total loss 1/Q
  double sigma = 0.0;   // one-sigma uncertainty of q_inv
};

// Power sweep at a fixed insertion position, with the participations that
// applied during the sweep.
struct PowerSweep {
  std::vector<PowerPoint> points;
  SweepPosition position = SweepPosition::withdrawn;
  double p_cond = 0.0;
  double p_MA = 0.0;
  double p_bulk = 0.0;

  void validate() const;      // basic sanity, any number of points
  void validate_for_fit() const;  // >= 5 points spanning >= 2 decades
};

// Two-level-system saturation model
//   Q^-1(n) = Q_hp^-1 + Q_sat^-1 / sqrt(1 + (n/n_c)^alpha).
double tls_model(double n, double q_hp_inv, double q_sat_inv, double n_c,
                 double alpha);

struct TlsFit {
  double q_hp_inv = 0.0;
  double q_sat_inv = 0.0;
  double n_c = 0.0;
  double alpha = 0.0;
  double q_hp_inv_err = 0.0;
  double q_sat_inv_err = 0.0;
  double n_c_err = 0.0;
  double alpha_err = 0.0;
  double chi2 = 0.0;
  bool converged = false;
  std::size_t n_used = 0;
  std::vector<double> residuals;  // (model - data)/sigma per used point
  // row-major 4x4 parameter covariance, order (q_hp, q_sat, n_c, alpha)
  std::vector<double> covariance;
};

struct TlsFitOptions {
  // Points above the cutoff are excluded for inserted-position sweeps,
  // where the model stops describing the data at very high drive.
  double n_cutoff = 2e10;
  int n_c_grid = 9;                       // log-spaced multi-start grid
  std::vector<double> alpha_starts = {0.25, 0.5, 1.0};
  int max_iterations = 200;
  double alpha_max = 2.0;
};

// Weighted nonlinear least squares with deterministic multi-start; ties in
// the final cost go to the start with the lowest n_c. Standard errors come
// from the Jacobian at the optimum. Throws numeric_error if no start
// converges.
TlsFit fit_tls(const PowerSweep& sweep, const TlsFitOptions& opt = {});

// F(n) = 1 - 1/sqrt(1 + (n/n_c)^alpha), the fraction of the saturable loss
// already quenched at drive n.
double saturation_fraction(double n, const TlsFit& fit);

// Largest n with saturation fraction at most f_max:
//   n = n_c ((1 - f_max)^-2 - 1)^(1/alpha).
double low_power_boundary(double f_max, const TlsFit& fit);

// Bounds on the cavity-wall loss factors from a withdrawn power sweep:
//   q_cond^-1 <= min_i(Q_i^-1)/p_cond
//   dQ^-1/p_MA <= q_MA^-1 <= max_i(Q_i^-1)/p_MA
// with dQ^-1 the fitted saturable loss when the fit converged, otherwise
// max - min of the measurements.
struct CavityBounds {
  double q_cond_inv_upper = 0.0;
  double q_MA_inv_lower = 0.0;
  double q_MA_inv_upper = 0.0;
};

CavityBounds cavity_bounds(const PowerSweep& sweep,
                           const TlsFit* fit = nullptr);

}  // namespace cavloss
