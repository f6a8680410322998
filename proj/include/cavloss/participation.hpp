#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cavloss {

// Energy participation ratios of one mode at one insertion position.
// All p_* are dimensionless fractions of total mode energy.
struct ParticipationRow {
  double omega = 0.0;     // mode angular frequency, rad/s
  double p_cond = 0.0;    // conductor (surface current) participation
  double p_MA = 0.0;      // metal-air interface participation
  double p_bulk = 0.0;    // bulk dielectric participation
  double p_SA = 0.0;      // substrate-air interface participation
  double p_bulk_H = 0.0;  // magnetic-field participation of the bulk
  std::optional<double> z;  // insertion position, m (metadata)

  // Throws std::invalid_argument on non-finite or out-of-range entries.
  void validate() const;
};

// Insertion sweep of one sample. Rows are kept sorted by increasing p_bulk.
struct ParticipationTable {
  std::string sample_id;
  std::vector<ParticipationRow> rows;

  // Validates every row, sorts by p_bulk, rejects empty input.
  static ParticipationTable make(std::string sample_id,
                                 std::vector<ParticipationRow> rows);
};

// Geometry constants of the layered loss model. Defaults are the values
// used throughout the analysis here; override per device as needed.
struct InterfaceModel {
  double t_SA = 3e-9;              // substrate-air layer thickness, m
  double t_MA = 3e-9;              // metal-air layer thickness, m
  double lambda_L = 50e-9;         // London penetration depth, m
  double eps_MA = 10.0;            // interface relative permittivity
  double eps_bulk_parallel = 11.35;  // sapphire, c-plane parallel
  double eps_bulk_perp = 9.27;       // sapphire, c-plane perpendicular

  void validate() const;
};

// Per-channel loss factors for the forward model. The conductor factor is
// quoted at omega_ref and scales as omega_ref/omega elsewhere, which keeps
// the surface resistance constant across the sweep.
struct MaterialLosses {
  double q_cond_inv = 0.0;  // conductor loss factor at omega_ref
  double omega_ref = 0.0;   // rad/s; required when q_cond_inv != 0
  double q_MA_inv = 0.0;
  double q_bulk_inv = 0.0;  // pairs with p_bulk (use the composite substrate
                            // factor here when p_SA is folded in)
  double q_SA_inv = 0.0;
  double q_bulk_H_inv = 0.0;

  void validate() const;
};

// Total dissipated fraction: Q^-1 = sum_j p_j q_j^-1 with the conductor
// term frequency-referenced as described above.
double predict_loss(const ParticipationRow& row, const MaterialLosses& q);

// Composite substrate loss factor seen by the p_bulk column:
// q_sub^-1 = q_bulk^-1 + (p_SA/p_bulk) q_SA^-1. Requires p_bulk > 0.
double composite_substrate_loss(double p_bulk, double p_SA,
                                double q_bulk_inv, double q_SA_inv);

// Below-cutoff circular waveguide section used as the insertion channel.
struct EvanescentWaveguide {
  double f_cutoff_Hz = 0.0;     // cutoff of the attenuating section
  double f_mode_Hz = 0.0;       // operating mode frequency, < cutoff
  double p_bulk_at_contact = 0.0;  // participation at z = 0

  void validate() const;
  // Field-energy attenuation constant 2*alpha, 1/m.
  double energy_attenuation() const;
};

// p_bulk(z) = p_bulk(0) exp(-2 alpha z) with
// alpha = sqrt((omega_c/c)^2 - (omega/c)^2). z >= 0.
double attenuation_profile(double z_m, const EvanescentWaveguide& wg);

// Low-order polynomial description of an insertion sweep in powers of
// p_bulk: total loss y(p), conductor column x_cond(p), interface column
// x_MA(p). coefficient k multiplies p_bulk^k.
struct PolynomialBasis {
  int order = 2;
  std::vector<double> y;           // fitted Q^-1 coefficients
  std::vector<double> x_cond;      // fitted p_cond coefficients
  std::vector<double> x_MA;        // fitted p_MA coefficients
  std::vector<double> y_err;       // one-sigma standard errors
  std::vector<double> x_cond_err;
  std::vector<double> x_MA_err;

  // True when the conductor column is constant within fit error, the
  // expected behaviour for a fixed cavity wall geometry.
  bool conductor_constant(double n_sigma = 5.0) const;
};

// Ordinary least squares of Q^-1, p_cond and p_MA against powers of
// p_bulk. order in [2,4]; requires at least order+2 rows and more distinct
// p_bulk values than coefficients, otherwise throws.
PolynomialBasis fit_polynomial_basis(const ParticipationTable& table,
                                     const std::vector<double>& q_inv,
                                     int order = 2);

// R_s = q_cond^-1 * omega * mu0 * lambda_L, and its inverse.
double surface_resistance_from_loss(double q_cond_inv, double omega,
                                    double lambda_L);
double loss_from_surface_resistance(double r_s, double omega,
                                    double lambda_L);

}  // namespace cavloss
